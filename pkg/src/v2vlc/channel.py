"""Lossy V2V transmission of shared feature maps.

Two corruption models replace transmitted values with uniform noise drawn from
the feature's value range:

* ``lossy``    -- every scalar independently replaced with probability ``p``;
* ``ch_lossy`` -- ``floor(p * C)`` whole channels, chosen without replacement.

``ideal`` passes features through untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

IDEAL = "ideal"
GLOBAL_LOSSY = "lossy"
CHANNELWISE_LOSSY = "ch_lossy"
MODES = (IDEAL, GLOBAL_LOSSY, CHANNELWISE_LOSSY)
RESAMPLE_UNIFORM = "uniform"


class ChannelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    data: np.ndarray
    value_range: tuple[float, float] | None = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"feature map must be C x H x W with positive dims, got {arr.shape}")
        object.__setattr__(self, "data", arr)
        if self.value_range is None:
            object.__setattr__(self, "value_range", (float(arr.min()), float(arr.max())))
        lo, hi = self.value_range
        if lo > hi:
            raise ValueError(f"value_range min {lo} exceeds max {hi}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = IDEAL
    p: Union[float, str] = 0.0
    noise_range: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ChannelConfigError(f"unknown channel mode {self.mode!r}; expected one of {MODES}")
        if self.p != RESAMPLE_UNIFORM:
            p = float(self.p)
            if not (0.0 <= p <= 1.0):
                raise ChannelConfigError(f"selection probability p must lie in [0, 1], got {p}")
            object.__setattr__(self, "p", p)
        if self.noise_range is not None:
            lo, hi = (float(v) for v in self.noise_range)
            if lo > hi:
                raise ChannelConfigError(f"noise_range min {lo} exceeds max {hi}")
            object.__setattr__(self, "noise_range", (lo, hi))

    @property
    def resamples(self) -> bool:
        return self.p == RESAMPLE_UNIFORM

    def with_mode(self, mode: str, p: Union[float, str, None] = None) -> "ChannelConfig":
        return replace(self, mode=mode, p=self.p if p is None else p)


@dataclass
class CorruptionMask:
    """Boolean ``C x H x W`` map of replaced coordinates (diagnostics only)."""

    replaced: np.ndarray
    p: float = 0.0
    channels: tuple[int, ...] = field(default_factory=tuple)

    @property
    def count(self) -> int:
        return int(self.replaced.sum())

    @property
    def empty(self) -> bool:
        return not self.replaced.any()

    def stats(self) -> dict:
        per_channel = self.replaced.reshape(self.replaced.shape[0], -1).sum(axis=1)
        return {
            "p": self.p,
            "replaced": self.count,
            "total": int(self.replaced.size),
            "replaced_fraction": self.count / self.replaced.size,
            "per_channel": [int(v) for v in per_channel],
            "corrupted_channels": [int(c) for c in self.channels],
        }


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, *key)``, e.g. ``(seed, scene, cav)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_transmission_p(cfg: ChannelConfig, rng: np.random.Generator) -> float:
    """Fresh ``U[0, 1]`` selection probability for one transmission."""
    if not cfg.resamples:
        raise ChannelConfigError(f"sample_transmission_p requires p={RESAMPLE_UNIFORM!r}, config has p={cfg.p}")
    return float(rng.random())


def corrupted_channel_count(p: float, channels: int) -> int:
    # the epsilon absorbs products like 0.57 * 100 = 56.999...
    return min(channels, int(math.floor(p * channels + 1e-9)))


def apply_channel(
    f: FeatureMap, cfg: ChannelConfig, rng: np.random.Generator
) -> tuple[FeatureMap, CorruptionMask]:
    """Transmit ``f`` through the simulated channel.

    Unreplaced coordinates are returned bit-identical. The mask is for tests and
    diagnostics and must not be fed to the repair network.
    """
    data = f.data
    if cfg.mode == IDEAL:
        return f, CorruptionMask(np.zeros(data.shape, dtype=bool))
    p = sample_transmission_p(cfg, rng) if cfg.resamples else float(cfg.p)
    lo, hi = cfg.noise_range if cfg.noise_range is not None else f.value_range
    out = data.copy()
    chosen: tuple[int, ...] = ()
    if cfg.mode == GLOBAL_LOSSY:
        replaced = rng.random(data.shape) < p
    else:
        c = data.shape[0]
        n = corrupted_channel_count(p, c)
        chosen = tuple(sorted(int(i) for i in rng.choice(c, size=n, replace=False)))
        replaced = np.zeros(data.shape, dtype=bool)
        replaced[list(chosen)] = True
    n_rep = int(replaced.sum())
    if n_rep:
        out[replaced] = rng.uniform(lo, hi, size=n_rep) if hi > lo else lo
    return FeatureMap(out, f.value_range), CorruptionMask(replaced, p, chosen)
