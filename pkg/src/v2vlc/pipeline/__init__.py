from .config import AVEFUSE, V2VAM, ExperimentConfig, load_config, save_config
from .model import (
    Diagnostics,
    PipelineError,
    ave_fuse,
    forward_pipeline,
    forward_tensors,
    init_params,
)
from .scenes import SceneGenParams, SyntheticScenePack, generate_scenes
from .train import TrainingError, evaluate, format_report, make_packs, run_experiment, train
