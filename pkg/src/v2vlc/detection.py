"""Anchor headers, detection losses, BEV IoU and average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import numerics as nx
from .numerics import DimensionError, Tensor

EVAL_X_RANGE = (-140.0, 140.0)
EVAL_Y_RANGE = (-40.0, 40.0)
FOCAL_CLAMP = 1e-7
ANCHOR_SIZE = (4.4, 1.9, 1.6)  # l, w, h
ANCHOR_Z = 0.8
BOX_DIM = 7


def _wrap(a: float) -> float:
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Box3D:
    x: float
    y: float
    z: float
    l: float  # noqa: E741
    w: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "l", "w", "h", "yaw"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"box sizes must be positive, got l={self.l} w={self.w} h={self.h}")
        object.__setattr__(self, "yaw", _wrap(self.yaw))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.z, self.l, self.w, self.h, self.yaw)

    def corners_bev(self) -> np.ndarray:
        """Footprint corners, counter-clockwise, as a ``4 x 2`` array."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.l / 2, self.w / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def contains_bev(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        dx, dy = np.asarray(x) - self.x, np.asarray(y) - self.y
        u = c * dx + s * dy
        v = -s * dx + c * dy
        return (np.abs(u) <= self.l / 2) & (np.abs(v) <= self.w / 2)


@dataclass
class DetectionSet:
    boxes: list[Box3D] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.boxes) != len(self.scores):
            raise ValueError(f"{len(self.boxes)} boxes but {len(self.scores)} scores")
        if any(not (0.0 <= s <= 1.0) for s in self.scores):
            raise ValueError("scores must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass(frozen=True)
class LossWeights:
    mu: float = 1.0
    lam: float = 0.1

    def __post_init__(self):
        for name in ("mu", "lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"loss weight {name}={v} outside [0, 1]")


# BEV grid and anchors ------------------------------------------------------


@dataclass(frozen=True)
class BEVGrid:
    """Rows index y, columns index x; cell ``(i, j)`` is centred at ``centers()[.., i, j]``."""

    h: int = 32
    w: int = 32
    x_range: tuple[float, float] = EVAL_X_RANGE
    y_range: tuple[float, float] = EVAL_Y_RANGE

    @property
    def cell(self) -> tuple[float, float]:
        return ((self.x_range[1] - self.x_range[0]) / self.w, (self.y_range[1] - self.y_range[0]) / self.h)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        dx, dy = self.cell
        xs = self.x_range[0] + (np.arange(self.w) + 0.5) * dx
        ys = self.y_range[0] + (np.arange(self.h) + 0.5) * dy
        return np.meshgrid(xs, ys)  # each h x w

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        dx, dy = self.cell
        j = math.floor((x - self.x_range[0]) / dx)
        i = math.floor((y - self.y_range[0]) / dy)
        if 0 <= i < self.h and 0 <= j < self.w:
            return i, j
        return None

    def anchors(self) -> np.ndarray:
        """``7 x H x W`` anchor boxes, one axis-aligned anchor per cell."""
        cx, cy = self.centers()
        a = np.empty((BOX_DIM, self.h, self.w))
        a[0], a[1], a[2] = cx, cy, ANCHOR_Z
        a[3], a[4], a[5] = ANCHOR_SIZE
        a[6] = 0.0
        return a


def encode_boxes(boxes: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Regression targets for boxes (``7 x ...``) relative to anchors of the same shape."""
    diag = np.hypot(anchors[3], anchors[4])
    d = np.empty_like(boxes)
    d[0] = (boxes[0] - anchors[0]) / diag
    d[1] = (boxes[1] - anchors[1]) / diag
    d[2] = (boxes[2] - anchors[2]) / anchors[5]
    d[3:6] = np.log(boxes[3:6] / anchors[3:6])
    d[6] = boxes[6] - anchors[6]
    return d


def decode_boxes(deltas: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    diag = np.hypot(anchors[3], anchors[4])
    b = np.empty_like(deltas)
    b[0] = deltas[0] * diag + anchors[0]
    b[1] = deltas[1] * diag + anchors[1]
    b[2] = deltas[2] * anchors[5] + anchors[2]
    b[3:6] = np.exp(deltas[3:6]) * anchors[3:6]
    b[6] = deltas[6] + anchors[6]
    return b


def assign_targets(gt_boxes: Sequence[Box3D], grid: BEVGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classification map ``1 x H x W``, regression targets ``7 x H x W`` and positive mask ``H x W``.

    A cell is positive when its centre lies inside a GT footprint; the nearest
    such box supplies its regression target.
    """
    cx, cy = grid.centers()
    anchors = grid.anchors()
    pos = np.zeros((grid.h, grid.w), dtype=bool)
    best = np.full((grid.h, grid.w), np.inf)
    target_boxes = anchors.copy()
    for b in gt_boxes:
        inside = b.contains_bev(cx, cy)
        d2 = (cx - b.x) ** 2 + (cy - b.y) ** 2
        take = inside & (d2 < best)
        if take.any():
            best[take] = d2[take]
            pos |= take
            for k, v in enumerate(b.as_tuple()):
                target_boxes[k][take] = v
    reg = encode_boxes(target_boxes, anchors)
    reg[:, ~pos] = 0.0
    return pos[None].astype(np.float64), reg, pos


# headers and losses --------------------------------------------------------


def init_headers(channels: int, rng: np.random.Generator, prior: float = 0.01) -> dict[str, Tensor]:
    from .repair import conv_init

    p = {}
    p["head.cls.w"], p["head.cls.b"] = conv_init(rng, 1, channels, 1, 1)
    p["head.cls.b"].data[:] = -math.log((1 - prior) / prior)
    p["head.reg.w"], p["head.reg.b"] = conv_init(rng, BOX_DIM, channels, 1, 1)
    p["head.reg.w"].data *= 0.1
    p["head.reg.b"].data[:] = 0.0
    return p


def detect(fused: Tensor, params: Mapping[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Anchor score map (``1 x H x W``, sigmoid) and box deltas (``7 x H x W``)."""
    scores = nx.sigmoid(nx.conv2d(fused, params["head.cls.w"], params["head.cls.b"]))
    deltas = nx.conv2d(fused, params["head.reg.w"], params["head.reg.b"])
    return scores, deltas


def focal_loss(pred: Tensor, target: np.ndarray, gamma: float = 2.0, alpha: float | None = 0.25) -> Tensor:
    """Mean over cells of ``-alpha_t (1 - p_t)^gamma log p_t``; ``alpha=None`` disables balancing."""
    pred = nx.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"focal_loss: prediction {pred.shape} vs target {target.shape}")
    p = nx.clip(pred, FOCAL_CLAMP, 1.0 - FOCAL_CLAMP)
    p_t = p * target + (1.0 - p) * (1.0 - target)
    loss = -nx.log(p_t)
    if gamma != 0:
        loss = loss * nx.power(1.0 - p_t, gamma)
    if alpha is not None:
        loss = loss * (alpha * target + (1.0 - alpha) * (1.0 - target))
    return nx.mean(loss)


def smooth_l1(
    pred: Tensor, target: np.ndarray, positive: np.ndarray | None = None, beta: float = 1.0,
    return_count: bool = False,
):
    """Smooth-L1 averaged over the elements of positive cells.

    ``positive`` is an ``H x W`` mask over the trailing axes. With no positive
    cells the loss is 0 and the returned count (the flag) is 0.
    """
    pred = nx.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"smooth_l1: prediction {pred.shape} vs target {target.shape}")
    if positive is None:
        weight = np.ones(pred.shape)
    else:
        weight = np.broadcast_to(np.asarray(positive, dtype=np.float64), pred.shape)
    n = int(np.count_nonzero(weight))
    if n == 0:
        zero = Tensor(0.0) if not pred.requires_grad else nx.sum(pred * 0.0)
        return (zero, 0) if return_count else zero
    diff = nx.abs(pred - target)
    small = diff.data < beta
    quad = nx.power(diff, 2.0) * (0.5 / beta)
    lin = diff - 0.5 * beta
    per = quad * small + lin * (~small)
    loss = nx.sum(per * weight) / float(n)
    return (loss, n) if return_count else loss


def total_loss(l_det, l_lc, w: LossWeights = LossWeights()):
    """``mu * l_det + lam * l_lc``."""
    return w.mu * l_det + w.lam * l_lc


# IoU and AP ----------------------------------------------------------------


def _clip_polygon(subject: list[np.ndarray], clipper: np.ndarray) -> list[np.ndarray]:
    """Sutherland-Hodgman clipping of ``subject`` by convex CCW ``clipper``."""
    out = subject
    n = len(clipper)
    for i in range(n):
        a, b = clipper[i], clipper[(i + 1) % n]
        edge = b - a

        def inside(p):
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= -1e-12

        def cross_point(p, q):
            d = q - p
            denom = edge[0] * d[1] - edge[1] * d[0]
            t = (edge[1] * (p[0] - a[0]) - edge[0] * (p[1] - a[1])) / denom
            return p + t * d

        inp, out = out, []
        if not inp:
            break
        prev = inp[-1]
        for cur in inp:
            if inside(cur):
                if not inside(prev):
                    out.append(cross_point(prev, cur))
                out.append(cur)
            elif inside(prev):
                out.append(cross_point(prev, cur))
            prev = cur
    return out


def _area(poly: Sequence[np.ndarray]) -> float:
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def iou_bev(a: Box3D, b: Box3D) -> float:
    """Rotated-rectangle IoU of the ground-plane footprints."""
    if math.hypot(a.x - b.x, a.y - b.y) > 0.5 * (math.hypot(a.l, a.w) + math.hypot(b.l, b.w)):
        return 0.0
    inter = _area(_clip_polygon(list(a.corners_bev()), b.corners_bev()))
    union = a.l * a.w + b.l * b.w - inter
    if union <= 0 or not math.isfinite(inter):
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))


def in_range(box: Box3D, x_range=EVAL_X_RANGE, y_range=EVAL_Y_RANGE) -> bool:
    return x_range[0] <= box.x <= x_range[1] and y_range[0] <= box.y <= y_range[1]


@dataclass
class PRCurve:
    precision: np.ndarray
    recall: np.ndarray
    ap: float
    n_gt: int

    @property
    def no_ground_truth(self) -> bool:
        return self.n_gt == 0


def match_detections(
    frames: Iterable[tuple[DetectionSet, Sequence[Box3D]]], iou_thresh: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """Greedy matching per frame; returns pooled ``(scores, is_tp, n_gt)``."""
    scores, tps, n_gt = [], [], 0
    for dets, gts in frames:
        n_gt += len(gts)
        claimed = np.zeros(len(gts), dtype=bool)
        order = sorted(range(len(dets)), key=lambda i: -dets.scores[i])
        for i in order:
            best, best_iou = -1, iou_thresh
            for g, gt in enumerate(gts):
                if claimed[g]:
                    continue
                iou = iou_bev(dets.boxes[i], gt)
                if iou >= best_iou and (best < 0 or iou > best_iou):
                    best, best_iou = g, iou
            if best >= 0:
                claimed[best] = True
            scores.append(dets.scores[i])
            tps.append(best >= 0)
    return np.asarray(scores, dtype=np.float64), np.asarray(tps, dtype=bool), n_gt


def precision_recall(
    frames: Iterable[tuple[DetectionSet, Sequence[Box3D]]],
    iou_thresh: float,
    range_filter: tuple[tuple[float, float], tuple[float, float]] | None = (EVAL_X_RANGE, EVAL_Y_RANGE),
) -> PRCurve:
    """PR curve and all-point interpolated AP pooled over frames."""
    if range_filter is not None:
        xr, yr = range_filter
        frames = [(d, [g for g in gts if in_range(g, xr, yr)]) for d, gts in frames]
    scores, tp, n_gt = match_detections(frames, iou_thresh)
    if n_gt == 0:
        return PRCurve(np.zeros(0), np.zeros(0), 0.0, 0)
    order = np.argsort(-scores, kind="stable")
    tp = tp[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / n_gt
    precision = ctp / np.maximum(ctp + cfp, 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    ap = float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))
    return PRCurve(precision, recall, ap, n_gt)


def average_precision(
    dets: DetectionSet,
    gts: Sequence[Box3D],
    iou_thresh: float = 0.5,
    range_filter: tuple[tuple[float, float], tuple[float, float]] | None = (EVAL_X_RANGE, EVAL_Y_RANGE),
) -> float:
    """AP of one frame; 0.0 when no ground truth survives the range filter (see :func:`precision_recall`)."""
    return precision_recall([(dets, gts)], iou_thresh, range_filter).ap


def nms(boxes: Sequence[Box3D], scores: Sequence[float], iou_thresh: float) -> list[int]:
    order = sorted(range(len(boxes)), key=lambda i: -scores[i])
    keep: list[int] = []
    for i in order:
        if all(iou_bev(boxes[i], boxes[k]) <= iou_thresh for k in keep):
            keep.append(i)
    return keep


def postprocess(
    scores: np.ndarray, deltas: np.ndarray, grid: BEVGrid, score_thresh: float = 0.5, nms_iou: float = 0.15
) -> DetectionSet:
    """Threshold the score map, decode anchors and run one IoU-suppression pass."""
    s = np.asarray(scores).reshape(grid.h, grid.w)
    idx = np.argwhere(s > score_thresh)
    if len(idx) == 0:
        return DetectionSet()
    decoded = decode_boxes(np.asarray(deltas), grid.anchors())
    boxes, sc = [], []
    for i, j in idx:
        v = decoded[:, i, j]
        v[3:6] = np.maximum(v[3:6], 1e-3)
        boxes.append(Box3D(*v))
        sc.append(float(s[i, j]))
    keep = nms(boxes, sc, nms_iou)
    return DetectionSet([boxes[k] for k in keep], [sc[k] for k in keep])


# text records --------------------------------------------------------------


def format_boxes(boxes: Sequence[Box3D], scores: Sequence[float] | None = None) -> str:
    lines = []
    for n, b in enumerate(boxes):
        vals = [f"{v:.6f}" for v in b.as_tuple()]
        if scores is not None:
            vals.append(f"{scores[n]:.6f}")
        lines.append(" ".join(vals))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_boxes(text: str) -> tuple[list[Box3D], list[float] | None]:
    """Parse ``x y z l w h yaw [score]`` lines; ``#`` starts a comment."""
    boxes, scores = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        vals = [float(v) for v in line.split()]
        if len(vals) not in (7, 8):
            raise ValueError(f"line {lineno}: expected 7 or 8 numbers, got {len(vals)}")
        boxes.append(Box3D(*vals[:7]))
        if len(vals) == 8:
            scores.append(vals[7])
    if scores and len(scores) != len(boxes):
        raise ValueError("either every line or no line may carry a score")
    return boxes, (scores if scores else None)


def read_detections(path: str | Path) -> DetectionSet:
    boxes, scores = parse_boxes(Path(path).read_text())
    if scores is None:
        raise ValueError(f"{path}: detections need a score column")
    return DetectionSet(boxes, scores)


def read_boxes(path: str | Path) -> list[Box3D]:
    return parse_boxes(Path(path).read_text())[0]
