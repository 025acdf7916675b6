from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


class GradcheckError(RuntimeError):
    pass


@dataclass
class GradcheckReport:
    errors: list[float] = field(default_factory=list)
    tol: float = 1e-3
    eps: float = 1e-6

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        errs = ", ".join(f"{e:.2e}" for e in self.errors)
        return f"gradcheck {verdict}: max rel err {self.max_error:.3e} (tol {self.tol:g}) [{errs}]"


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    tol: float = 1e-3,
    floor: float = 1e-6,
    seed: int = 0,
) -> GradcheckReport:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    The output is contracted with a fixed random cotangent so that every output
    entry is exercised. For each input tensor the error is
    ``|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)`` in the
    Euclidean norm, falling back to the absolute difference when both norms
    are below ``floor``.
    """
    if not 1e-6 <= eps <= 1e-2:
        raise ValueError(f"eps must lie in [1e-6, 1e-2], got {eps}")
    leaves = [Tensor(t.data.copy(), requires_grad=True) for t in inputs]
    out = fn(*leaves)
    if not np.all(np.isfinite(out.data)):
        raise GradcheckError(f"forward produced non-finite values (shape {out.shape})")
    cot = np.random.default_rng(seed).standard_normal(out.shape)
    out.backward(cot)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in leaves]

    def scalar(arrs):
        val = fn(*(Tensor(a) for a in arrs)).data
        if not np.all(np.isfinite(val)):
            raise GradcheckError("forward produced non-finite values during finite differencing")
        return float(np.sum(val * cot))

    base = [t.data.copy() for t in leaves]
    report = GradcheckReport(tol=tol, eps=eps)
    for i, arr in enumerate(base):
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = scalar(base)
            flat[j] = orig - eps
            fm = scalar(base)
            flat[j] = orig
            nflat[j] = (fp - fm) / (2 * eps)
        diff = np.linalg.norm(analytic[i] - numeric)
        scale = max(np.linalg.norm(analytic[i]), np.linalg.norm(numeric))
        report.errors.append(diff / scale if scale > floor else diff)
    return report
