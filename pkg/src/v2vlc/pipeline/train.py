from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from ..channel import IDEAL, apply_channel
from ..detection import precision_recall
from ..numerics import Tensor, save_checkpoint
from ..optim import Adam, step_decay
from .config import ExperimentConfig
from .model import PipelineError, detection_loss, forward_pipeline, forward_tensors, init_params
from .scenes import SceneGenParams, SyntheticScenePack, generate_scenes

TEST_ID_OFFSET = 100_000


class TrainingError(RuntimeError):
    def __init__(self, stage: str, epoch: int, step: int, value: float):
        super().__init__(f"non-finite {stage} at epoch {epoch} step {step}: {value}")
        self.stage = stage


def make_packs(cfg: ExperimentConfig) -> tuple[SyntheticScenePack, SyntheticScenePack]:
    """Training and held-out scene packs; the test pack shares the training value range."""
    train_pack = generate_scenes(cfg.train_scenes, cfg.seed)
    test_pack = generate_scenes(cfg.test_scenes, cfg.seed, first_id=TEST_ID_OFFSET)
    test_pack.value_range = train_pack.value_range
    return train_pack, test_pack


def train(
    cfg: ExperimentConfig,
    pack: SyntheticScenePack,
    run_dir: str | Path | None = None,
    channel_fn: Callable = apply_channel,
    params: Mapping[str, Tensor] | None = None,
) -> tuple[dict[str, Tensor], list[dict]]:
    """Minimise ``mu * L_det + lam * L_LC`` with Adam and step decay; returns params and per-epoch log."""
    params = dict(init_params(cfg) if params is None else params)
    channel = cfg.training_channel()
    opt = Adam(params, lr=cfg.lr)
    grid = pack.params.grid
    n = len(pack.scenes)
    log = []
    for epoch in range(cfg.epochs):
        opt.lr = step_decay(cfg.lr, epoch, cfg.decay_every, cfg.decay_factor)
        order = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(11, epoch))).permutation(n)
        sums = {"l_det": 0.0, "l_lc": 0.0, "l_total": 0.0}
        for step in range(cfg.steps_per_epoch):
            scene = pack.scenes[int(order[step % n])]
            opt.zero_grad()
            out = forward_tensors(
                scene, pack, cfg, params, channel, stream_key=(epoch, step), channel_fn=channel_fn,
                compute_lc=cfg.loss.lam > 0,
            )
            l_det = detection_loss(out, scene, grid, cfg.reg_weight)
            total = l_det * cfg.loss.mu
            l_lc_val = 0.0
            if out.l_lc is not None:
                total = total + out.l_lc * cfg.loss.lam
                l_lc_val = out.l_lc.item()
            for stage, val in (("l_det", l_det.item()), ("l_lc", l_lc_val), ("l_total", total.item())):
                if not math.isfinite(val):
                    raise TrainingError(stage, epoch, step, val)
            total.backward()
            opt.step()
            sums["l_det"] += l_det.item()
            sums["l_lc"] += l_lc_val
            sums["l_total"] += total.item()
        entry = {"epoch": epoch, "lr": opt.lr, **{k: v / cfg.steps_per_epoch for k, v in sums.items()}}
        log.append(entry)
        if run_dir is not None and cfg.checkpoint_every_epoch:
            save_checkpoint(Path(run_dir) / "checkpoints" / f"epoch-{epoch:03d}", params, epoch=epoch,
                            config_hash=cfg.config_hash())
    if run_dir is not None:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        (Path(run_dir) / "train_log.json").write_text(json.dumps(log, indent=2))
    return params, log


def evaluate_mode(
    params: Mapping[str, Tensor], cfg: ExperimentConfig, pack: SyntheticScenePack, channel
) -> dict:
    frames = []
    for scene in pack.scenes:
        dets, _ = forward_pipeline(scene, pack, cfg, params, channel, stream_key=(0xE7A1,))
        frames.append((dets, scene.gt_boxes))
    row = {}
    for thr, key in ((0.5, "ap50"), (0.7, "ap70")):
        row[key] = precision_recall(frames, thr).ap
    row["detections"] = sum(len(d) for d, _ in frames)
    row["ground_truth"] = sum(len(g) for _, g in frames)
    return row


def evaluate(
    params: Mapping[str, Tensor], cfg: ExperimentConfig, pack: SyntheticScenePack,
    out_path: str | Path | None = None, lossy_p: float | None = None,
) -> dict:
    """AP@0.5 / AP@0.7 under ideal and the configured lossy channel."""
    lossy = cfg.channel if lossy_p is None else replace(cfg.channel, p=lossy_p)
    report = {
        "config_hash": cfg.config_hash(),
        "scheme": cfg.scheme,
        "fusion": cfg.fusion,
        "lcrn": cfg.lcrn,
        "lossy_mode": lossy.mode,
        "lossy_p": lossy.p,
        "ideal": evaluate_mode(params, cfg, pack, replace(lossy, mode=IDEAL)),
        "lossy": evaluate_mode(params, cfg, pack, lossy),
    }
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(format_report(report))
    return report


def format_report(report: dict) -> str:
    def fix(v):
        if isinstance(v, float):
            return float(f"{v:.6f}")
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        return v

    return json.dumps(fix(report), indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, root: str | Path = "runs") -> tuple[dict, Path]:
    """Generate data, train, evaluate; everything lands in the config-hash run directory."""
    from .config import save_config

    run_dir = cfg.run_dir(root)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(run_dir / "config.yaml", cfg)
    train_pack, test_pack = make_packs(cfg)
    params, _ = train(cfg, train_pack, run_dir)
    report = evaluate(params, cfg, test_pack, run_dir / "ap_report.json")
    return report, run_dir


__all__ = [
    "PipelineError",
    "SceneGenParams",
    "TrainingError",
    "evaluate",
    "format_report",
    "make_packs",
    "run_experiment",
    "train",
]
