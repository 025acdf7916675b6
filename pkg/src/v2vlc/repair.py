"""Repair of corrupted feature maps with per-position predicted filter kernels.

A small encoder-decoder with skip connections reads the received feature map
and predicts a ``k*k x H x W`` kernel field; every output position is then the
kernel-weighted sum of its ``k x k`` neighbourhood, the same kernel being
shared by all channels at that position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .numerics import DimensionError, Op, Tensor

DEFAULT_K = 5
DEFAULT_WIDTHS = (32, 64)

Params = dict[str, Tensor]


@dataclass(frozen=True)
class LCRNConfig:
    in_channels: int
    k: int = DEFAULT_K
    widths: tuple[int, ...] = DEFAULT_WIDTHS

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError(f"kernel size k must be odd and positive, got {self.k}")
        if not self.widths:
            raise ValueError("need at least one encoder stage")

    @property
    def factor(self) -> int:
        return 2 ** len(self.widths)


def conv_init(rng: np.random.Generator, c_out: int, c_in: int, kh: int, kw: int) -> tuple[Tensor, Tensor]:
    # uniform(+-1/sqrt(fan_in)), the usual default for conv layers
    bound = 1.0 / np.sqrt(c_in * kh * kw)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, kh, kw))
    b = rng.uniform(-bound, bound, size=(c_out,))
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def init_lcrn(cfg: LCRNConfig, rng: np.random.Generator, head_init: str = "default") -> Params:
    """Parameters for the repair network.

    ``head_init`` selects the output head: ``"default"`` (random), ``"zero"``
    (all-zero kernel field) or ``"delta"`` (centre-tap kernel, so the untrained
    network passes its input through unchanged).
    """
    p: Params = {}
    c_prev = cfg.in_channels
    for i, w in enumerate(cfg.widths):
        p[f"lcrn.enc{i}.w"], p[f"lcrn.enc{i}.b"] = conv_init(rng, w, c_prev, 3, 3)
        c_prev = w
    p["lcrn.mid.w"], p["lcrn.mid.b"] = conv_init(rng, c_prev, c_prev, 3, 3)
    skips = [cfg.in_channels, *cfg.widths[:-1]]
    for i in reversed(range(len(cfg.widths))):
        c_out = cfg.widths[i - 1] if i > 0 else cfg.widths[0]
        p[f"lcrn.dec{i}.w"], p[f"lcrn.dec{i}.b"] = conv_init(rng, c_out, c_prev + skips[i], 3, 3)
        c_prev = c_out
    kk = cfg.k * cfg.k
    if head_init == "default":
        p["lcrn.head.w"], p["lcrn.head.b"] = conv_init(rng, kk, c_prev, 1, 1)
    elif head_init in ("zero", "delta"):
        b = np.zeros(kk)
        if head_init == "delta":
            b[kk // 2] = 1.0
        p["lcrn.head.w"] = Tensor(np.zeros((kk, c_prev, 1, 1)), requires_grad=True)
        p["lcrn.head.b"] = Tensor(b, requires_grad=True)
    else:
        raise ValueError(f"unknown head_init {head_init!r}")
    return p


def _stages(params: Mapping[str, Tensor]) -> int:
    return sum(1 for name in params if name.startswith("lcrn.enc") and name.endswith(".w"))


def predict_kernels(s: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Kernel field ``k*k x H x W`` for feature map ``s`` (``C x H x W``)."""
    if s.ndim != 3:
        raise DimensionError(f"predict_kernels expects C x H x W, got {s.shape}")
    n = _stages(params)
    factor = 2**n
    _, h, w = s.shape
    if h < factor or w < factor:
        raise DimensionError(f"input {h}x{w} is smaller than the network's minimum resolution {factor}x{factor}")
    ph, pw = (-h) % factor, (-w) % factor
    x = nx.pad2d(s, (0, ph, 0, pw)) if ph or pw else s
    skips = [x]
    for i in range(n):
        x = nx.relu(nx.conv2d(x, params[f"lcrn.enc{i}.w"], params[f"lcrn.enc{i}.b"], stride=2))
        skips.append(x)
    x = nx.relu(nx.conv2d(x, params["lcrn.mid.w"], params["lcrn.mid.b"]))
    for i in reversed(range(n)):
        x = nx.upsample_nearest(x, 2)
        x = nx.concat([x, skips[i]], axis=0)
        x = nx.relu(nx.conv2d(x, params[f"lcrn.dec{i}.w"], params[f"lcrn.dec{i}.b"]))
    kf = nx.conv2d(x, params["lcrn.head.w"], params["lcrn.head.b"])
    if ph or pw:
        kf = kf[:, :h, :w]
    return kf


class ApplyKernels(Op):
    def forward(self, s, kf):
        if s.ndim != 3 or kf.ndim != 3:
            raise DimensionError(f"apply_kernels expects C x H x W and k*k x H x W, got {s.shape}, {kf.shape}")
        if s.shape[1:] != kf.shape[1:]:
            raise DimensionError(f"apply_kernels: feature {s.shape} and kernel field {kf.shape} differ spatially")
        k = int(round(np.sqrt(kf.shape[0])))
        if k * k != kf.shape[0] or k % 2 == 0:
            raise DimensionError(f"kernel field depth {kf.shape[0]} is not an odd square")
        r = k // 2
        _, h, w = s.shape
        sp = np.pad(s, ((0, 0), (r, r), (r, r)))
        out = np.zeros_like(s)
        for di in range(k):
            for dj in range(k):
                out += kf[di * k + dj][None] * sp[:, di : di + h, dj : dj + w]
        self.sp, self.kf, self.k, self.hw = sp, kf, k, (h, w)
        return out

    def backward(self, g):
        sp, kf, k = self.sp, self.kf, self.k
        h, w = self.hw
        r = k // 2
        gsp = np.zeros_like(sp)
        gk = np.zeros_like(kf)
        for di in range(k):
            for dj in range(k):
                win = sp[:, di : di + h, dj : dj + w]
                gk[di * k + dj] = (g * win).sum(axis=0)
                gsp[:, di : di + h, dj : dj + w] += kf[di * k + dj][None] * g
        return gsp[:, r : r + h, r : r + w], gk


def apply_kernels(s: Tensor, kf: Tensor) -> Tensor:
    """Filter every position of ``s`` with its own ``k x k`` kernel (zero-padded borders)."""
    return ApplyKernels.apply(s, kf)


def delta_kernels(k: int, h: int, w: int) -> np.ndarray:
    kf = np.zeros((k * k, h, w))
    kf[(k * k) // 2] = 1.0
    return kf


def repair_loss(repaired: Tensor, ground_truth: Tensor) -> Tensor:
    """Mean absolute difference between repaired and uncorrupted features."""
    repaired, ground_truth = nx.as_tensor(repaired), nx.as_tensor(ground_truth)
    if repaired.shape != ground_truth.shape:
        raise DimensionError(f"repair_loss: shapes {repaired.shape} and {ground_truth.shape} differ")
    return nx.mean(nx.abs(repaired - ground_truth))


def repair(s: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return apply_kernels(s, predict_kernels(s, params))


def lcrn_config_from_params(params: Mapping[str, Tensor]) -> LCRNConfig:
    n = _stages(params)
    widths = tuple(params[f"lcrn.enc{i}.w"].shape[0] for i in range(n))
    k = int(round(np.sqrt(params["lcrn.head.w"].shape[0])))
    return LCRNConfig(in_channels=params["lcrn.enc0.w"].shape[1], k=k, widths=widths)


def lcrn_params(params: Mapping[str, Tensor]) -> dict[str, Tensor]:
    return {k: v for k, v in params.items() if k.startswith("lcrn.")}


def save_lcrn(directory, params: Mapping[str, Tensor]):
    cfg = lcrn_config_from_params(params)
    return nx.save_checkpoint(directory, lcrn_params(params), k=cfg.k, widths=list(cfg.widths))


def load_lcrn(directory) -> tuple[dict[str, Tensor], LCRNConfig]:
    params, meta = nx.load_checkpoint(directory)
    for t in params.values():
        t.requires_grad = True
    cfg = lcrn_config_from_params(params)
    if "k" in meta and meta["k"] != cfg.k:
        raise ValueError(f"manifest k={meta['k']} disagrees with head depth (k={cfg.k})")
    return params, cfg


def train_lcrn(
    params: Params,
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    steps: int,
    lr: float = 1e-3,
) -> list[float]:
    """Fit the repair network on ``(corrupted, clean)`` pairs with Adam; returns the loss trace."""
    from .optim import Adam

    opt = Adam(params, lr=lr)
    trace = []
    for step in range(steps):
        corrupted, clean = pairs[step % len(pairs)]
        opt.zero_grad()
        loss = repair_loss(repair(Tensor(corrupted), params), Tensor(clean))
        loss.backward()
        opt.step()
        trace.append(loss.item())
    return trace
