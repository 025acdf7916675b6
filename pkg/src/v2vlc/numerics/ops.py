"""Differentiable primitives on :class:`~v2vlc.numerics.tensor.Tensor`.

All arithmetic runs in float64. Shapes follow numpy broadcasting where noted;
feature maps are ``C x H x W`` (no batch axis).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import DTYPE, DimensionError, Op, Tensor, as_tensor, unbroadcast


class Add(Op):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, g):
        return unbroadcast(g, self.shapes[0]), unbroadcast(g, self.shapes[1])


class Sub(Op):
    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, g):
        return unbroadcast(g, self.shapes[0]), unbroadcast(-g, self.shapes[1])


class Mul(Op):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, g):
        return unbroadcast(g * self.b, self.a.shape), unbroadcast(g * self.a, self.b.shape)


class Div(Op):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a / b

    def backward(self, g):
        ga = g / self.b
        gb = -g * self.a / (self.b * self.b)
        return unbroadcast(ga, self.a.shape), unbroadcast(gb, self.b.shape)


class MatMul(Op):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, g):
        return g @ self.b.T, self.a.T @ g


class Sum(Op):
    def __init__(self, axis=None, keepdims=False):
        self.axis, self.keepdims = axis, keepdims

    def forward(self, x):
        self.shape = x.shape
        return x.sum(axis=self.axis, keepdims=self.keepdims)

    def backward(self, g):
        if self.axis is not None and not self.keepdims:
            g = np.expand_dims(g, self.axis)
        return (np.broadcast_to(g, self.shape).copy(),)


class Reshape(Op):
    def __init__(self, shape):
        self.new_shape = tuple(shape)

    def forward(self, x):
        self.shape = x.shape
        return x.reshape(self.new_shape)

    def backward(self, g):
        return (g.reshape(self.shape),)


class Transpose(Op):
    def __init__(self, axes):
        self.axes = tuple(axes)

    def forward(self, x):
        return x.transpose(self.axes)

    def backward(self, g):
        return (g.transpose(np.argsort(self.axes)),)


class Index(Op):
    def __init__(self, index):
        self.index = index

    def forward(self, x):
        self.shape = x.shape
        return x[self.index]

    def backward(self, g):
        out = np.zeros(self.shape, dtype=DTYPE)
        np.add.at(out, self.index, g)
        return (out,)


class Concat(Op):
    def __init__(self, axis=0):
        self.axis = axis

    def forward(self, *xs):
        self.splits = np.cumsum([x.shape[self.axis] for x in xs])[:-1]
        return np.concatenate(xs, axis=self.axis)

    def backward(self, g):
        return tuple(np.split(g, self.splits, axis=self.axis))


class Pad2d(Op):
    """Zero padding of the last two axes: ``(top, bottom, left, right)``."""

    def __init__(self, pads):
        self.pads = tuple(int(p) for p in pads)

    def forward(self, x):
        t, b, l, r = self.pads
        self.shape = x.shape
        width = [(0, 0)] * (x.ndim - 2) + [(t, b), (l, r)]
        return np.pad(x, width)

    def backward(self, g):
        t, b, l, r = self.pads
        h, w = self.shape[-2:]
        return (g[..., t : t + h, l : l + w].copy(),)


class Exp(Op):
    def forward(self, x):
        self.y = np.exp(x)
        return self.y

    def backward(self, g):
        return (g * self.y,)


class Log(Op):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, g):
        return (g / self.x,)


class Abs(Op):
    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, g):
        return (g * self.sign,)


class Pow(Op):
    def __init__(self, exponent):
        self.p = float(exponent)

    def forward(self, x):
        self.x = x
        return np.power(x, self.p)

    def backward(self, g):
        return (g * self.p * np.power(self.x, self.p - 1.0),)


class Relu(Op):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, g):
        return (g * self.mask,)


class Sigmoid(Op):
    def forward(self, x):
        # split by sign to stay finite for large |x|
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self.y = out
        return out

    def backward(self, g):
        return (g * self.y * (1.0 - self.y),)


class Clip(Op):
    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi

    def forward(self, x):
        self.inside = (x >= self.lo) & (x <= self.hi)
        return np.clip(x, self.lo, self.hi)

    def backward(self, g):
        return (g * self.inside,)


class Softmax(Op):
    def __init__(self, axis=-1, mask=None):
        self.axis = axis
        self.mask = mask

    def forward(self, x):
        if self.mask is not None:
            x = np.where(self.mask, x, -np.inf)
        shifted = x - np.max(x, axis=self.axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / e.sum(axis=self.axis, keepdims=True)
        return self.y

    def backward(self, g):
        y = self.y
        return (y * (g - (g * y).sum(axis=self.axis, keepdims=True)),)


class Einsum(Op):
    """Two-operand einsum without repeated or operand-private summed indices."""

    def __init__(self, spec):
        lhs, out = spec.replace(" ", "").split("->")
        a, b = lhs.split(",")
        for sub, other in ((a, b), (b, a)):
            if len(set(sub)) != len(sub):
                raise ValueError(f"einsum {spec}: repeated index in an operand")
            if any(c not in other and c not in out for c in sub):
                raise ValueError(f"einsum {spec}: index summed inside one operand")
        self.a_sub, self.b_sub, self.out_sub = a, b, out
        self.spec = spec

    def forward(self, a, b):
        self.a, self.b = a, b
        return np.einsum(f"{self.a_sub},{self.b_sub}->{self.out_sub}", a, b, optimize=True)

    def backward(self, g):
        ga = np.einsum(f"{self.out_sub},{self.b_sub}->{self.a_sub}", g, self.b, optimize=True)
        gb = np.einsum(f"{self.out_sub},{self.a_sub}->{self.b_sub}", g, self.a, optimize=True)
        return ga, gb


class Conv2d(Op):
    """Cross-correlation of a ``C_in x H x W`` map with ``C_out x C_in x kh x kw`` weights."""

    def __init__(self, stride=1, padding="same"):
        self.stride = int(stride)
        self.padding = padding

    def forward(self, x, w, b=None):
        if x.ndim != 3 or w.ndim != 4:
            raise DimensionError(f"conv2d expects C x H x W input and 4-d weights, got {x.shape}, {w.shape}")
        c_in, h, wd = x.shape
        c_out, wc, kh, kw = w.shape
        if wc != c_in:
            raise DimensionError(f"conv2d: input has {c_in} channels, weights expect {wc} (weights {w.shape})")
        s = self.stride
        if self.padding == "same":
            if kh % 2 == 0 or kw % 2 == 0:
                raise ValueError(f"conv2d: same padding needs odd kernel, got {kh}x{kw}")
            ph, pw = kh // 2, kw // 2
        elif self.padding == "valid":
            ph = pw = 0
        else:
            raise ValueError(f"unknown padding {self.padding!r}")
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
        ho = (h + 2 * ph - kh) // s + 1
        wo = (wd + 2 * pw - kw) // s + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"conv2d: input {x.shape} too small for kernel {kh}x{kw}")
        out = np.zeros((c_out, ho, wo), dtype=DTYPE)
        for di in range(kh):
            for dj in range(kw):
                patch = xp[:, di : di + s * (ho - 1) + 1 : s, dj : dj + s * (wo - 1) + 1 : s]
                out += np.tensordot(w[:, :, di, dj], patch, axes=(1, 0))
        if b is not None:
            out += b[:, None, None]
        self.xp, self.w, self.has_bias = xp, w, b is not None
        self.geom = (ph, pw, ho, wo, h, wd)
        return out

    def backward(self, g):
        ph, pw, ho, wo, h, wd = self.geom
        s = self.stride
        xp, w = self.xp, self.w
        _, _, kh, kw = w.shape
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w)
        for di in range(kh):
            for dj in range(kw):
                sl = (slice(None), slice(di, di + s * (ho - 1) + 1, s), slice(dj, dj + s * (wo - 1) + 1, s))
                gw[:, :, di, dj] = np.tensordot(g, xp[sl], axes=([1, 2], [1, 2]))
                gxp[sl] += np.tensordot(w[:, :, di, dj], g, axes=(0, 0))
        gx = gxp[:, ph : ph + h, pw : pw + wd]
        grads = [gx, gw]
        if self.has_bias:
            grads.append(g.sum(axis=(1, 2)))
        return grads


class PoolChannel(Op):
    def __init__(self, kind="max"):
        if kind not in ("max", "mean"):
            raise ValueError(f"pool kind must be max or mean, got {kind!r}")
        self.kind = kind

    def forward(self, x):
        if x.ndim != 3:
            raise DimensionError(f"pool_channel expects C x H x W, got {x.shape}")
        self.shape = x.shape
        if self.kind == "mean":
            return x.mean(axis=0, keepdims=True)
        self.arg = np.argmax(x, axis=0)
        return np.take_along_axis(x, self.arg[None], axis=0)

    def backward(self, g):
        if self.kind == "mean":
            return (np.broadcast_to(g / self.shape[0], self.shape).copy(),)
        out = np.zeros(self.shape, dtype=DTYPE)
        np.put_along_axis(out, self.arg[None], g, axis=0)
        return (out,)


class UpsampleNearest(Op):
    def __init__(self, factor=2):
        self.f = int(factor)

    def forward(self, x):
        self.shape = x.shape
        return x.repeat(self.f, axis=-2).repeat(self.f, axis=-1)

    def backward(self, g):
        c, h, w = self.shape
        f = self.f
        return (g.reshape(c, h, f, w, f).sum(axis=(2, 4)),)


# functional wrappers -------------------------------------------------------


def add(a, b) -> Tensor:
    return Add.apply(a, b)


def sub(a, b) -> Tensor:
    return Sub.apply(a, b)


def mul(a, b) -> Tensor:
    return Mul.apply(a, b)


def div(a, b) -> Tensor:
    return Div.apply(a, b)


def matmul(a, b) -> Tensor:
    """2-D matrix product; raises :class:`DimensionError` naming both shapes on mismatch."""
    return MatMul.apply(a, b)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return Sum.apply(x, axis=axis, keepdims=keepdims) / float(n)


def reshape(x, shape) -> Tensor:
    return Reshape.apply(x, shape=shape)


def transpose(x, axes) -> Tensor:
    return Transpose.apply(x, axes=axes)


def index(x, idx) -> Tensor:
    return Index.apply(x, index=idx)


def concat(xs: Sequence, axis: int = 0) -> Tensor:
    return Concat.apply(*xs, axis=axis)


def pad2d(x, pads) -> Tensor:
    return Pad2d.apply(x, pads=pads)


def exp(x) -> Tensor:
    return Exp.apply(x)


def log(x) -> Tensor:
    return Log.apply(x)


def abs(x) -> Tensor:  # noqa: A001
    return Abs.apply(x)


def power(x, p) -> Tensor:
    return Pow.apply(x, exponent=p)


def relu(x) -> Tensor:
    return Relu.apply(x)


def sigmoid(x) -> Tensor:
    return Sigmoid.apply(x)


def clip(x, lo, hi) -> Tensor:
    return Clip.apply(x, lo=lo, hi=hi)


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax along ``axis``.

    ``mask`` (broadcastable boolean) marks allowed entries; masked entries get
    weight exactly 0.
    """
    return Softmax.apply(x, axis=axis, mask=mask)


def einsum(spec: str, a, b) -> Tensor:
    return Einsum.apply(a, b, spec=spec)


def conv2d(x, weight, bias=None, stride: int = 1, padding: str = "same") -> Tensor:
    """2-D cross-correlation (no kernel flip), zero padding when ``padding='same'``."""
    if bias is None:
        return Conv2d.apply(x, weight, stride=stride, padding=padding)
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


def pool_channel(x, kind: str = "max") -> Tensor:
    """Reduce ``C x H x W`` over channels to ``1 x H x W``."""
    return PoolChannel.apply(x, kind=kind)


def upsample_nearest(x, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor)
