"""Synthetic cooperative scenes standing in for LiDAR feature extraction.

Each scene has an ego vehicle, 1-4 neighbouring CAVs and a handful of parked or
moving vehicles (the ground truth). Every agent renders a ``C x H x W`` BEV
feature map in the ego frame:

* the first ``texture_channels`` channels carry a static, scene-wide ground
  texture that every agent observes identically;
* the remaining channels carry one smooth bump per ground-truth box the agent
  can see, scaled by a fixed per-channel signature.

An agent sees a box when it lies within ``sense_range``, inside the agent's
field-of-view cone, and is not shadowed by a nearer box.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ..channel import rng_stream
from ..detection import BEVGrid, Box3D
from ..geometry import CAV, Pose, Scene, project_points

GEN_STREAM = 1
TEXTURE_STREAM = 2
NOISE_STREAM = 3
BASIS_STREAM = 4


@dataclass(frozen=True)
class SceneGenParams:
    n_scenes: int = 64
    channels: int = 16
    texture_channels: int = 8
    height: int = 32
    width: int = 32
    neighbors: tuple[int, int] = (1, 4)
    boxes: tuple[int, int] = (8, 14)
    comm_range: float = 70.0
    sense_range: float = 40.0
    fov_deg: float = 360.0
    occluder_radius: float = 1.0
    cav_x: float = 60.0
    cav_y: float = 30.0
    min_agent_gap: float = 10.0
    bump_sigma: float = 0.6
    bump_amplitude: float = 2.0
    texture_blur: float = 0.7
    texture_amplitude: float = 1.0
    sensor_noise: float = 0.05
    center_jitter: float = 0.3
    yaw_jitter: float = 0.1

    @property
    def grid(self) -> BEVGrid:
        return BEVGrid(self.height, self.width)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneGenParams":
        d = dict(d)
        for key in ("neighbors", "boxes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SyntheticScenePack:
    scenes: list[Scene]
    features: dict[int, dict[int, np.ndarray]]  # scene id -> agent id (0 = ego) -> C x H x W
    visible: dict[int, dict[int, list[int]]]  # scene id -> agent id -> visible box indices
    value_range: tuple[float, float]
    params: SceneGenParams
    seed: int
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.scenes)

    def coverage(self) -> float:
        """Fraction of GT boxes seen by at least one agent."""
        seen = total = 0
        for sc in self.scenes:
            union = set().union(*self.visible[sc.scene_id].values())
            seen += len(union)
            total += len(sc.gt_boxes)
        return seen / total if total else 1.0


def channel_signature(gp: SceneGenParams, seed: int) -> np.ndarray:
    """Per-channel weight of a box bump; zero on the texture channels."""
    rng = rng_stream(seed, BASIS_STREAM)
    sig = np.zeros(gp.channels)
    first = gp.texture_channels if gp.texture_channels < gp.channels else 0
    sig[first:] = rng.uniform(0.5, 1.5, size=gp.channels - first)
    return sig


def _place_agents(gp: SceneGenParams, rng: np.random.Generator, ego: Pose) -> list[CAV]:
    n = int(rng.integers(gp.neighbors[0], gp.neighbors[1] + 1))
    local: list[tuple[float, float]] = [(0.0, 0.0)]
    cavs = []
    ego_t = ego.to_world()
    while len(cavs) < n:
        x = rng.uniform(-gp.cav_x, gp.cav_x)
        y = rng.uniform(-gp.cav_y, gp.cav_y)
        if math.hypot(x, y) > gp.comm_range:
            continue
        if any(math.hypot(x - a, y - b) < gp.min_agent_gap for a, b in local):
            continue
        heading = (0.0 if rng.random() < 0.5 else math.pi) + rng.uniform(-0.2, 0.2)
        world = ego_t @ np.array([x, y, 0.0, 1.0])
        local.append((x, y))
        cavs.append(CAV(len(cavs) + 1, Pose(world[0], world[1], world[2], ego.yaw + heading)))
    return cavs


def _sees(agent_xy, heading, box: Box3D, others: list[Box3D], gp: SceneGenParams) -> bool:
    dx, dy = box.x - agent_xy[0], box.y - agent_xy[1]
    dist = math.hypot(dx, dy)
    if dist > gp.sense_range:
        return False
    bearing = math.atan2(dy, dx)
    rel = math.atan2(math.sin(bearing - heading), math.cos(bearing - heading))
    if abs(rel) > math.radians(gp.fov_deg) / 2:
        return False
    for o in others:
        ox, oy = o.x - agent_xy[0], o.y - agent_xy[1]
        d_o = math.hypot(ox, oy)
        if d_o >= dist or d_o < 1e-6:
            continue
        half = math.atan2(gp.occluder_radius, d_o)
        delta = math.atan2(math.sin(bearing - math.atan2(oy, ox)), math.cos(bearing - math.atan2(oy, ox)))
        if abs(delta) < half:
            return False
    return True


def _place_boxes(gp: SceneGenParams, rng: np.random.Generator, anchors_xy: list[np.ndarray]) -> list[Box3D]:
    grid = gp.grid
    cx, cy = grid.centers()
    n = int(rng.integers(gp.boxes[0], gp.boxes[1] + 1))
    taken: set[tuple[int, int]] = set()
    boxes: list[Box3D] = []
    attempts = 0
    while len(boxes) < n and attempts < 100 * n:
        attempts += 1
        a = anchors_xy[int(rng.integers(len(anchors_xy)))]
        r = gp.sense_range * math.sqrt(rng.random())
        th = rng.uniform(-math.pi, math.pi)
        cell = grid.cell_of(a[0] + r * math.cos(th), a[1] + r * math.sin(th))
        # one vehicle per cell is the collision rule; it also keeps footprints disjoint
        if cell is None or cell in taken:
            continue
        i, j = cell
        taken.add(cell)
        l = rng.uniform(3.9, 4.9)  # noqa: E741
        w = rng.uniform(1.7, 2.1)
        h = rng.uniform(1.4, 1.8)
        boxes.append(
            Box3D(
                cx[i, j] + rng.uniform(-gp.center_jitter, gp.center_jitter),
                cy[i, j] + rng.uniform(-gp.center_jitter, gp.center_jitter),
                h / 2 + rng.uniform(-0.05, 0.05),
                l,
                w,
                h,
                rng.uniform(-gp.yaw_jitter, gp.yaw_jitter),
            )
        )
    return boxes


def _texture(gp: SceneGenParams, seed: int, scene_id: int) -> np.ndarray:
    rng = rng_stream(seed, TEXTURE_STREAM, scene_id)
    raw = rng.random((gp.texture_channels, gp.height, gp.width))
    tex = np.stack([gaussian_filter(ch, gp.texture_blur, mode="wrap") for ch in raw]) if gp.texture_blur > 0 else raw
    lo = tex.min(axis=(1, 2), keepdims=True)
    hi = tex.max(axis=(1, 2), keepdims=True)
    return gp.texture_amplitude * (tex - lo) / np.maximum(hi - lo, 1e-12)


def render_features(
    gp: SceneGenParams, seed: int, scene_id: int, agent_id: int, boxes: list[Box3D], visible: list[int],
    texture: np.ndarray, signature: np.ndarray,
) -> np.ndarray:
    """Deterministic BEV feature map of one agent."""
    grid = gp.grid
    dx, dy = grid.cell
    jj, ii = np.meshgrid(np.arange(gp.width), np.arange(gp.height))
    bumps = np.zeros((gp.height, gp.width))
    for k in visible:
        b = boxes[k]
        bj = (b.x - grid.x_range[0]) / dx - 0.5
        bi = (b.y - grid.y_range[0]) / dy - 0.5
        bumps += np.exp(-((ii - bi) ** 2 + (jj - bj) ** 2) / (2 * gp.bump_sigma**2))
    feat = signature[:, None, None] * (gp.bump_amplitude * bumps)[None]
    feat[: gp.texture_channels] += texture
    noise = rng_stream(seed, NOISE_STREAM, scene_id, agent_id).random(feat.shape)
    return feat + gp.sensor_noise * noise


def generate_scenes(gp: SceneGenParams = SceneGenParams(), seed: int = 0, first_id: int = 0) -> SyntheticScenePack:
    """Build ``gp.n_scenes`` scenes with ids ``first_id, first_id + 1, ...``."""
    signature = channel_signature(gp, seed)
    scenes, features, visible = [], {}, {}
    for sid in range(first_id, first_id + gp.n_scenes):
        rng = rng_stream(seed, GEN_STREAM, sid)
        ego = Pose(rng.uniform(-500, 500), rng.uniform(-500, 500), 0.0, rng.uniform(-math.pi, math.pi))
        cavs = _place_agents(gp, rng, ego)
        scene = Scene(ego=ego, cavs=cavs, comm_range=gp.comm_range, scene_id=sid)
        agents = scene.agent_positions_ego()
        boxes = _place_boxes(gp, rng, [agents[a][0][:2] for a in sorted(agents)])
        scene.gt_boxes = boxes
        tex = _texture(gp, seed, sid)
        features[sid], visible[sid] = {}, {}
        for aid in sorted(agents):
            pos, heading = agents[aid]
            vis = [
                k for k, b in enumerate(boxes)
                if _sees(pos[:2], heading, b, [o for n, o in enumerate(boxes) if n != k], gp)
            ]
            visible[sid][aid] = vis
            features[sid][aid] = render_features(gp, seed, sid, aid, boxes, vis, tex, signature)
        scenes.append(scene)
    pool = np.concatenate([f.ravel() for per in features.values() for f in per.values()])
    return SyntheticScenePack(scenes, features, visible, (float(pool.min()), float(pool.max())), gp, seed)


def box_points(box: Box3D) -> np.ndarray:
    """Homogeneous ``5 x 4`` points (centre plus BEV corners) of a box."""
    pts = np.ones((5, 4))
    pts[0, :3] = (box.x, box.y, box.z)
    pts[1:, :2] = box.corners_bev()
    pts[1:, 2] = box.z
    return pts


def ego_frame_points(scene: Scene, cav_id: int, points_cav: np.ndarray) -> np.ndarray:
    """Project points expressed in a CAV's frame into the ego frame."""
    return project_points(points_cav, scene.transforms()[cav_id])
