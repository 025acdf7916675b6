"""Intra/inter-vehicle attention with criss-cross sparsity and the pooling fusion head.

Feature maps are ``C x H x W`` tensors. In criss-cross attention position
``(i, j)`` attends to row ``i`` and column ``j`` only; the centre is taken from
the row scan, giving ``H + W - 1`` connections per position.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from . import numerics as nx
from .numerics import DimensionError, Tensor
from .repair import conv_init

Params = dict[str, Tensor]
PROJECTIONS = ("q", "k_e", "v_e", "k_s", "v_s")


def _check_same(*maps: Tensor) -> None:
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        raise DimensionError(f"attention inputs must share one shape, got {sorted(shapes)}")
    if maps[0].ndim != 3:
        raise DimensionError(f"attention expects C x H x W maps, got {maps[0].shape}")


def criss_cross_mask(h: int, w: int) -> np.ndarray:
    """Allowed connections laid out as ``H x W x (W + H)``: row scan then column scan."""
    mask = np.ones((h, w, w + h), dtype=bool)
    i = np.arange(h)
    mask[i, :, w + i] = False
    return mask


def criss_cross_dense_mask(h: int, w: int) -> np.ndarray:
    """The same connectivity as an ``HW x HW`` mask over flattened positions."""
    rows = np.repeat(np.arange(h), w)
    cols = np.tile(np.arange(w), h)
    return (rows[:, None] == rows[None, :]) | (cols[:, None] == cols[None, :])


def affinity_count(h: int, w: int, kind: str = "criss_cross") -> int:
    """Number of query-key affinities evaluated by one attention pass."""
    if kind == "criss_cross":
        return int(criss_cross_mask(h, w).sum())
    if kind == "dense":
        return (h * w) ** 2
    raise ValueError(f"unknown attention kind {kind!r}")


def dense_attention(
    q: Tensor, k: Tensor, v: Tensor, d_k: float | None = None, mask: np.ndarray | None = None,
    return_weights: bool = False,
):
    """Scaled dot-product attention over all ``H*W`` positions.

    ``mask`` (``HW x HW`` boolean, True = allowed) restricts the keys each
    query sees; with :func:`criss_cross_dense_mask` this is the brute-force
    reference for :func:`criss_cross_attention`.
    """
    _check_same(q, k, v)
    c, h, w = q.shape
    d_k = float(c if d_k is None else d_k)
    if d_k <= 0:
        raise ValueError(f"d_k must be positive, got {d_k}")
    flat = (c, h * w)
    logits = nx.einsum("cl,cm->lm", q.reshape(flat), k.reshape(flat)) * (1.0 / math.sqrt(d_k))
    weights = nx.softmax(logits, axis=1, mask=mask)
    out = nx.einsum("lm,cm->cl", weights, v.reshape(flat)).reshape(c, h, w)
    return (out, weights) if return_weights else out


def criss_cross_attention(
    q: Tensor, k: Tensor, v: Tensor, d_k: float | None = None, return_weights: bool = False
):
    """Attention restricted to each position's row and column, ``O(HW (H+W-1))`` affinities."""
    _check_same(q, k, v)
    c, h, w = q.shape
    d_k = float(c if d_k is None else d_k)
    if d_k <= 0:
        raise ValueError(f"d_k must be positive, got {d_k}")
    e_row = nx.einsum("cij,cik->ijk", q, k)
    e_col = nx.einsum("cij,clj->ijl", q, k)
    logits = nx.concat([e_row, e_col], axis=2) * (1.0 / math.sqrt(d_k))
    weights = nx.softmax(logits, axis=2, mask=criss_cross_mask(h, w))
    out = nx.einsum("ijk,cik->cij", weights[:, :, :w], v) + nx.einsum("ijl,clj->cij", weights[:, :, w:], v)
    return (out, weights) if return_weights else out


def init_attention(
    channels: int, rng: np.random.Generator, scale: float | None = None, residual: bool = True,
    gamma: float = 0.0, share_gate: float | None = None,
) -> Params:
    """1x1 projections for queries (ego), keys/values for ego and shared maps.

    With ``scale`` set, every projection starts as ``scale * I`` plus the usual
    random init. ``residual`` adds the learnable gates ``attn.gamma_intra`` and
    ``attn.gamma_inter`` that turn each pass into ``gamma * attention + input``.
    A numeric ``share_gate`` adds ``attn.beta_inter`` with that starting value: a
    learnable weight on the received map where it enters the inter-vehicle
    residual, so training on corrupted shares can learn how far to trust them.
    """
    p: Params = {}
    for name in PROJECTIONS:
        w, b = conv_init(rng, channels, channels, 1, 1)
        if scale is not None:
            w.data[:, :, 0, 0] += scale * np.eye(channels)
        p[f"attn.{name}.w"], p[f"attn.{name}.b"] = w, b
    if residual:
        p["attn.gamma_intra"] = Tensor(np.full(1, gamma), requires_grad=True)
        p["attn.gamma_inter"] = Tensor(np.full(1, gamma), requires_grad=True)
        if share_gate is not None:
            p["attn.beta_inter"] = Tensor(np.full(1, float(share_gate)), requires_grad=True)
    return p


def init_fusion_head(channels: int, rng: np.random.Generator) -> Params:
    w, b = conv_init(rng, channels, 2, 3, 3)
    return {"fuse.w": w, "fuse.b": b}


def project(x: Tensor, params: Mapping[str, Tensor], name: str) -> Tensor:
    out = nx.conv2d(x, params[f"attn.{name}.w"], params[f"attn.{name}.b"])
    if out.shape != x.shape:
        raise DimensionError(f"projection {name} maps {x.shape} to {out.shape}; shapes must match")
    return out


def _two_pass(
    query_src: Tensor, kv_src: Tensor, params, k_name: str, v_name: str, attend, gate: str
) -> Tensor:
    c = query_src.shape[0]
    gamma = params.get(f"attn.gamma_{gate}")
    beta = params.get(f"attn.beta_{gate}")

    def step(q_src, kv, skip):
        out = attend(project(q_src, params, "q"), project(kv, params, k_name), project(kv, params, v_name), c)
        return out if gamma is None else out * gamma + skip

    x = step(query_src, kv_src, kv_src if beta is None else kv_src * beta)
    return step(x, x, x)


def intra_vehicle_attention(h_e: Tensor, params: Mapping[str, Tensor], attend=criss_cross_attention) -> Tensor:
    """Two stacked self-attention passes over the ego feature map."""
    return _two_pass(h_e, h_e, params, "k_e", "v_e", attend, "intra")


def inter_vehicle_attention(
    h_e: Tensor,
    shared: Sequence[Tensor] | Mapping[int, Tensor],
    params: Mapping[str, Tensor],
    attend=criss_cross_attention,
) -> Tensor:
    """Sum over neighbours of ego-query cross-attention against each shared map.

    The first pass takes queries from the ego map and keys/values from the
    neighbour; the second pass refines that result with the same projections.
    When the residual gate is present each pass returns
    ``gamma * attention + (key/value source)``. A mapping is summed in
    ascending key (CAV id) order.
    """
    items = [shared[i] for i in sorted(shared)] if isinstance(shared, Mapping) else list(shared)
    for s in items:
        if s.shape != h_e.shape:
            raise DimensionError(f"shared feature {s.shape} does not match ego feature {h_e.shape}")
    total = None
    for s in items:
        term = _two_pass(h_e, s, params, "k_s", "v_s", attend, "inter")
        total = term if total is None else total + term
    return total if total is not None else Tensor(np.zeros(h_e.shape))


def pooled_stack(x: Tensor) -> Tensor:
    """Channel max-pool and mean-pool stacked into ``2 x H x W``."""
    return nx.concat([nx.pool_channel(x, "max"), nx.pool_channel(x, "mean")], axis=0)


def fuse(a_intra: Tensor, a_inter: Tensor, head: Mapping[str, Tensor]) -> Tensor:
    """relu(conv3x3(pooled_stack(a_intra + a_inter))) back to ``C x H x W``."""
    if a_intra.shape != a_inter.shape:
        raise DimensionError(f"fuse: intra {a_intra.shape} and inter {a_inter.shape} differ")
    out = nx.relu(nx.conv2d(pooled_stack(a_intra + a_inter), head["fuse.w"], head["fuse.b"]))
    if out.shape != a_intra.shape:
        raise DimensionError(f"fusion head produced {out.shape}, expected {a_intra.shape}")
    return out


def v2v_attention(
    h_e: Tensor, shared: Mapping[int, Tensor], params: Mapping[str, Tensor], use_intra: bool = True,
    use_inter: bool = True,
) -> Tensor:
    """Full attention fusion of the ego map with repaired neighbour maps."""
    zeros = Tensor(np.zeros(h_e.shape))
    a_intra = intra_vehicle_attention(h_e, params) if use_intra else zeros
    a_inter = inter_vehicle_attention(h_e, shared, params) if use_inter else zeros
    return fuse(a_intra, a_inter, params)
