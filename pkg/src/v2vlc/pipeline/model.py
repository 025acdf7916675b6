"""End-to-end forward pass: sharing -> channel -> repair -> fusion -> headers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .. import numerics as nx
from ..attention import init_attention, init_fusion_head, v2v_attention
from ..channel import ChannelConfig, CorruptionMask, FeatureMap, apply_channel, rng_stream
from ..detection import (
    BEVGrid,
    DetectionSet,
    assign_targets,
    detect,
    focal_loss,
    init_headers,
    postprocess,
    smooth_l1,
)
from ..geometry import Scene
from ..numerics import DimensionError, Tensor
from ..repair import LCRNConfig, init_lcrn, predict_kernels, apply_kernels, repair_loss
from .config import AVEFUSE, ExperimentConfig
from .scenes import SyntheticScenePack

CHANNEL_STREAM = 10


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def init_params(cfg: ExperimentConfig) -> dict[str, Tensor]:
    gp = cfg.train_scenes
    c = gp.channels
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    params: dict[str, Tensor] = {}
    # every component is drawn in a fixed order so configs differing only in
    # switches start from identical weights
    lcrn = init_lcrn(LCRNConfig(c, cfg.lcrn_k, cfg.lcrn_widths), rng, head_init=cfg.lcrn_head_init)
    attn = init_attention(c, rng, cfg.attn_init_scale, cfg.attn_residual, cfg.attn_gamma_init,
                          cfg.attn_share_gate)
    head = init_fusion_head(c, rng)
    ave_w, ave_b = _conv1x1(rng, c)
    hdr = init_headers(c, rng)
    if cfg.lcrn:
        params.update(lcrn)
    if cfg.fusion == AVEFUSE:
        params["avefuse.w"], params["avefuse.b"] = ave_w, ave_b
    else:
        params.update(attn)
        params.update(head)
    params.update(hdr)
    return params


def _conv1x1(rng, c):
    from ..repair import conv_init

    return conv_init(rng, c, c, 1, 1)


def ave_fuse(features: list[Tensor], params: Mapping[str, Tensor]) -> Tensor:
    """Elementwise mean of all agents' maps followed by a 1x1 convolution."""
    if not features:
        raise ValueError("ave_fuse needs at least one feature map")
    shape = features[0].shape
    if any(f.shape != shape for f in features):
        raise DimensionError(f"ave_fuse: feature shapes differ: {[f.shape for f in features]}")
    total = features[0]
    for f in features[1:]:
        total = total + f
    return nx.conv2d(total * (1.0 / len(features)), params["avefuse.w"], params["avefuse.b"])


@dataclass
class Diagnostics:
    ego: np.ndarray
    clean: dict[int, np.ndarray]
    received: dict[int, np.ndarray]
    masks: dict[int, CorruptionMask]
    repaired: dict[int, np.ndarray] = field(default_factory=dict)
    fused: np.ndarray | None = None
    scores: np.ndarray | None = None
    deltas: np.ndarray | None = None
    ego_mask: CorruptionMask | None = None


@dataclass
class ForwardOutput:
    scores: Tensor
    deltas: Tensor
    fused: Tensor
    l_lc: Tensor | None
    diagnostics: Diagnostics


def transmit(
    pack: SyntheticScenePack, scene: Scene, channel: ChannelConfig, stream_key: tuple[int, ...] = (),
    channel_fn: Callable = apply_channel,
) -> tuple[dict[int, np.ndarray], dict[int, CorruptionMask]]:
    """Send every neighbour's feature over the channel; the ego map is never transmitted."""
    received, masks = {}, {}
    feats = pack.features[scene.scene_id]
    for cav in sorted(c.id for c in scene.cavs):
        rng = rng_stream(channel.seed, CHANNEL_STREAM, *stream_key, scene.scene_id, cav)
        fm, mask = channel_fn(FeatureMap(feats[cav], pack.value_range), channel, rng)
        received[cav], masks[cav] = fm.data, mask
    return received, masks


def forward_tensors(
    scene: Scene,
    pack: SyntheticScenePack,
    cfg: ExperimentConfig,
    params: Mapping[str, Tensor],
    channel: ChannelConfig,
    stream_key: tuple[int, ...] = (),
    channel_fn: Callable = apply_channel,
    compute_lc: bool = True,
) -> ForwardOutput:
    feats = pack.features[scene.scene_id]
    ego = feats[0]
    try:
        received, masks = transmit(pack, scene, channel, stream_key, channel_fn)
    except DimensionError as exc:
        raise PipelineError("channel", str(exc)) from exc
    diag = Diagnostics(ego=ego, clean={k: feats[k] for k in received}, received=received, masks=masks)
    diag.ego_mask = CorruptionMask(np.zeros(ego.shape, dtype=bool))

    shared: dict[int, Tensor] = {}
    lc_terms = []
    use_lcrn = cfg.lcrn and any(name.startswith("lcrn.") for name in params)
    for cav, data in received.items():
        s = Tensor(data)
        if s.shape != ego.shape:
            raise PipelineError("sharing", f"CAV {cav} sent {s.shape}, ego feature is {ego.shape}")
        if use_lcrn:
            try:
                s = apply_kernels(s, predict_kernels(s, params))
            except DimensionError as exc:
                raise PipelineError("repair", str(exc)) from exc
            diag.repaired[cav] = s.data
            if compute_lc and cfg.loss.lam > 0:
                lc_terms.append(repair_loss(s, Tensor(feats[cav])))
        shared[cav] = s

    h_e = Tensor(ego)
    try:
        if cfg.fusion == AVEFUSE:
            fused = ave_fuse([h_e] + [shared[k] for k in sorted(shared)], params)
        else:
            fused = v2v_attention(h_e, shared, params, cfg.use_intra, cfg.use_inter)
    except DimensionError as exc:
        raise PipelineError("fusion", str(exc)) from exc
    try:
        scores, deltas = detect(fused, params)
    except DimensionError as exc:
        raise PipelineError("header", str(exc)) from exc
    diag.fused, diag.scores, diag.deltas = fused.data, scores.data, deltas.data

    l_lc = None
    if lc_terms:
        l_lc = lc_terms[0]
        for t in lc_terms[1:]:
            l_lc = l_lc + t
        l_lc = l_lc * (1.0 / len(lc_terms))
    return ForwardOutput(scores, deltas, fused, l_lc, diag)


def detection_loss(out: ForwardOutput, scene: Scene, grid: BEVGrid, reg_weight: float = 1.0) -> Tensor:
    cls_t, reg_t, pos = assign_targets(scene.gt_boxes, grid)
    l_cls = focal_loss(out.scores, cls_t)
    l_reg = smooth_l1(out.deltas, reg_t, pos)
    return l_cls + reg_weight * l_reg


def forward_pipeline(
    scene: Scene,
    pack: SyntheticScenePack,
    cfg: ExperimentConfig,
    params: Mapping[str, Tensor],
    channel: ChannelConfig | None = None,
    stream_key: tuple[int, ...] = (),
) -> tuple[DetectionSet, Diagnostics]:
    """Run one scene to a score-thresholded, IoU-suppressed detection set."""
    channel = cfg.channel if channel is None else channel
    out = forward_tensors(scene, pack, cfg, params, channel, stream_key, compute_lc=False)
    dets = postprocess(out.scores.data, out.deltas.data, pack.params.grid, cfg.score_thresh, cfg.nms_iou)
    return dets, out.diagnostics
