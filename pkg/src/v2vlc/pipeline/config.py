from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Union

import yaml

from ..channel import GLOBAL_LOSSY, IDEAL, RESAMPLE_UNIFORM, ChannelConfig
from ..detection import LossWeights
from .scenes import SceneGenParams

V2VAM = "v2vam"
AVEFUSE = "avefuse"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on; the run directory is named by its hash."""

    scheme: str = "II"
    channel: ChannelConfig = field(default_factory=lambda: ChannelConfig(GLOBAL_LOSSY, 0.3, seed=0))
    train_p: Union[float, str] = RESAMPLE_UNIFORM
    lcrn: bool = True
    fusion: str = V2VAM
    use_intra: bool = True
    use_inter: bool = True
    loss: LossWeights = field(default_factory=LossWeights)
    reg_weight: float = 1.0
    lr: float = 1e-3
    decay_every: int = 10
    decay_factor: float = 0.1
    epochs: int = 20
    steps_per_epoch: int = 32
    seed: int = 0
    train_scenes: SceneGenParams = field(default_factory=SceneGenParams)
    test_scenes: SceneGenParams = field(default_factory=lambda: SceneGenParams(n_scenes=32))
    lcrn_k: int = 5
    lcrn_widths: tuple[int, ...] = (32, 64)
    lcrn_head_init: str = "delta"
    attn_init_scale: float | None = 1.0
    attn_residual: bool = True
    attn_gamma_init: float = 0.0
    attn_share_gate: float | None = None
    score_thresh: float = 0.5
    nms_iou: float = 0.15
    checkpoint_every_epoch: bool = True

    def __post_init__(self):
        if self.scheme not in ("I", "II"):
            raise ValueError(f"scheme must be 'I' or 'II', got {self.scheme!r}")
        if self.fusion not in (V2VAM, AVEFUSE):
            raise ValueError(f"fusion must be {V2VAM!r} or {AVEFUSE!r}, got {self.fusion!r}")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ValueError("epochs and steps_per_epoch must be positive")

    def training_channel(self) -> ChannelConfig:
        """Scheme I trains on ideal shares; Scheme II on the configured lossy mode."""
        if self.scheme == "I":
            return replace(self.channel, mode=IDEAL)
        mode = self.channel.mode if self.channel.mode != IDEAL else GLOBAL_LOSSY
        return replace(self.channel, mode=mode, p=self.train_p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lcrn_widths"] = list(self.lcrn_widths)
        for key in ("train_scenes", "test_scenes"):
            d[key]["neighbors"] = list(d[key]["neighbors"])
            d[key]["boxes"] = list(d[key]["boxes"])
        if d["channel"]["noise_range"] is not None:
            d["channel"]["noise_range"] = list(d["channel"]["noise_range"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "channel" in d:
            ch = dict(d["channel"])
            if ch.get("noise_range") is not None:
                ch["noise_range"] = tuple(ch["noise_range"])
            d["channel"] = ChannelConfig(**ch)
        if "loss" in d:
            d["loss"] = LossWeights(**d["loss"])
        for key in ("train_scenes", "test_scenes"):
            if key in d:
                d[key] = SceneGenParams.from_dict(d[key])
        if "lcrn_widths" in d:
            d["lcrn_widths"] = tuple(d["lcrn_widths"])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def run_dir(self, root: str | Path = "runs") -> Path:
        return Path(root) / f"run-{self.config_hash()}"


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML (or JSON) document whose keys mirror :class:`ExperimentConfig`."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    return ExperimentConfig.from_dict(data)


def save_config(path: str | Path, cfg: ExperimentConfig) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
