"""Named finite-difference checks, one per differentiable building block.

Each entry maps a seed to a :class:`~v2vlc.numerics.GradcheckReport`; the CLI
and the test-suite iterate the same table.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import numerics as nx
from .attention import (
    criss_cross_attention,
    dense_attention,
    init_attention,
    init_fusion_head,
    v2v_attention,
)
from .detection import detect, focal_loss, init_headers, smooth_l1
from .numerics import GradcheckReport, Tensor, gradcheck
from .repair import LCRNConfig, apply_kernels, init_lcrn, repair, repair_loss


def _randn(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def _with_params(fn, params: dict[str, Tensor], *fixed: Tensor):
    names = sorted(params)

    def wrapped(*tensors):
        return fn(*tensors[: len(fixed)], dict(zip(names, tensors[len(fixed) :])))

    return wrapped, list(fixed) + [params[n] for n in names]


def _conv(seed):
    rng = np.random.default_rng(seed)
    args = [_randn(rng, 2, 5, 6), _randn(rng, 3, 2, 3, 3), _randn(rng, 3)]
    return gradcheck(lambda x, w, b: nx.conv2d(x, w, b, stride=1 + seed % 2), args, seed=seed)


def _softmax(seed):
    rng = np.random.default_rng(seed)
    return gradcheck(lambda x: nx.softmax(x, axis=1), [_randn(rng, 3, 6)], seed=seed)


def _criss_cross(seed):
    rng = np.random.default_rng(seed)
    return gradcheck(criss_cross_attention, [_randn(rng, 2, 3, 4) for _ in range(3)], seed=seed)


def _dense(seed):
    rng = np.random.default_rng(seed)
    return gradcheck(lambda q, k, v: dense_attention(q, k, v), [_randn(rng, 2, 3, 3) for _ in range(3)], seed=seed)


def _v2vam(seed):
    rng = np.random.default_rng(seed)
    params = init_attention(2, rng, scale=1.0, residual=True, gamma=0.5, share_gate=0.7)
    params.update(init_fusion_head(2, rng))
    fn, args = _with_params(lambda e, s, p: v2v_attention(e, {1: s}, p), params, _randn(rng, 2, 3, 3), _randn(rng, 2, 3, 3))
    return gradcheck(fn, args, seed=seed)


def _apply_kernels(seed):
    rng = np.random.default_rng(seed)
    return gradcheck(apply_kernels, [_randn(rng, 2, 4, 5), _randn(rng, 25, 4, 5)], seed=seed)


def _lcrn(seed):
    rng = np.random.default_rng(seed)
    params = init_lcrn(LCRNConfig(2, 3, (3,)), rng)
    fn, args = _with_params(lambda s, p: repair(s, p), params, _randn(rng, 2, 4, 4))
    return gradcheck(fn, args, seed=seed)


def _repair_loss(seed):
    rng = np.random.default_rng(seed)
    target = _randn(rng, 2, 3, 3)
    return gradcheck(lambda x: repair_loss(x, target), [_randn(rng, 2, 3, 3)], seed=seed)


def _focal(seed):
    rng = np.random.default_rng(seed)
    target = (rng.random((1, 4, 4)) > 0.7).astype(float)
    pred = Tensor(rng.uniform(0.05, 0.95, (1, 4, 4)))
    return gradcheck(lambda p: focal_loss(p, target), [pred], seed=seed)


def _smooth_l1(seed):
    rng = np.random.default_rng(seed)
    target = rng.standard_normal((7, 3, 3))
    positive = rng.random((3, 3)) > 0.4
    return gradcheck(lambda d: smooth_l1(d, target, positive), [_randn(rng, 7, 3, 3)], seed=seed)


def _headers(seed):
    rng = np.random.default_rng(seed)
    params = init_headers(3, rng)

    def fn(x, p):
        scores, deltas = detect(x, p)
        return nx.concat([scores, deltas], axis=0)

    fn, args = _with_params(fn, params, _randn(rng, 3, 3, 3))
    return gradcheck(fn, args, seed=seed)


SUITE: dict[str, Callable[[int], GradcheckReport]] = {
    "conv2d": _conv,
    "softmax": _softmax,
    "criss_cross_attention": _criss_cross,
    "dense_attention": _dense,
    "v2v_attention": _v2vam,
    "apply_kernels": _apply_kernels,
    "lcrn": _lcrn,
    "repair_loss": _repair_loss,
    "focal_loss": _focal,
    "smooth_l1": _smooth_l1,
    "headers": _headers,
}
