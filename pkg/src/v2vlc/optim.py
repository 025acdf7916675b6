from __future__ import annotations

from typing import Mapping

import numpy as np

from .numerics import Tensor


class Adam:
    """Bias-corrected adaptive-moment steps over a dict of named parameters."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, grads: Mapping[str, np.ndarray] | None = None) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name in sorted(self.params):
            p = self.params[name]
            g = p.grad if grads is None else grads.get(name)
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def step_decay(base_lr: float, epoch: int, every: int = 10, factor: float = 0.1) -> float:
    """Learning rate after decaying by ``factor`` every ``every`` epochs."""
    return base_lr * factor ** (epoch // every)
