"""Poses, rigid transforms into the ego frame, and scene records.

Rotations are intrinsic yaw -> pitch -> roll (z, y', x''), right-handed, z-up.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .detection import Box3D

DEFAULT_COMM_RANGE = 70.0
MAX_AGENTS = 5


class SceneError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.yaw, self.pitch, self.roll)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"pose has non-finite entries: {vals}")
        for name in ("yaw", "pitch", "roll"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.yaw, self.pitch, self.roll)

    def to_world(self) -> np.ndarray:
        """4x4 matrix taking points in this pose's frame to world coordinates."""
        t = np.eye(4)
        t[:3, :3] = self.rotation()
        t[:3, 3] = self.position
        return t

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("x", "y", "z", "yaw", "pitch", "roll")}


def rotation_matrix(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def invert_transform(t: np.ndarray) -> np.ndarray:
    r = t[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ t[:3, 3]
    return out


def is_rigid(t: np.ndarray, tol: float = 1e-6) -> bool:
    t = np.asarray(t)
    if t.shape != (4, 4) or not np.array_equal(t[3], [0.0, 0.0, 0.0, 1.0]):
        return False
    r = t[:3, :3]
    return bool(np.allclose(r.T @ r, np.eye(3), atol=tol) and abs(np.linalg.det(r) - 1.0) <= tol)


def transform_from_poses(cav: Pose, ego: Pose) -> np.ndarray:
    """4x4 transform taking points in the CAV frame into the ego frame."""
    t = invert_transform(ego.to_world()) @ cav.to_world()
    t[3] = (0.0, 0.0, 0.0, 1.0)
    return t


def project_points(points: np.ndarray, t: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Apply ``t`` to an ``N x 4`` array of homogeneous points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 4:
        raise ValueError(f"expected N x 4 homogeneous points, got shape {points.shape}")
    if not np.allclose(points[:, 3], 1.0, rtol=0.0, atol=atol):
        bad = int(np.argmax(np.abs(points[:, 3] - 1.0)))
        raise ValueError(f"point {bad} has homogeneous coordinate {points[bad, 3]!r}, expected 1")
    return points @ np.asarray(t).T


@dataclass(frozen=True)
class CAV:
    id: int
    pose: Pose


@dataclass
class Scene:
    """Ego pose, neighbouring CAVs (world poses) and ground-truth boxes in the ego frame."""

    ego: Pose
    cavs: list[CAV] = field(default_factory=list)
    gt_boxes: list[Box3D] = field(default_factory=list)
    comm_range: float = DEFAULT_COMM_RANGE
    scene_id: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1 <= 1 + len(self.cavs) <= MAX_AGENTS:
            raise SceneError(f"scene must hold 1..{MAX_AGENTS} agents, got {1 + len(self.cavs)}")
        ids = [c.id for c in self.cavs]
        if len(set(ids)) != len(ids) or 0 in ids:
            raise SceneError(f"CAV ids must be unique and non-zero (0 is the ego), got {ids}")
        for c in self.cavs:
            d = float(np.linalg.norm(c.pose.position - self.ego.position))
            if d > self.comm_range:
                raise SceneError(f"CAV {c.id} is {d:.1f} m from ego, beyond comm_range {self.comm_range}")

    def transforms(self) -> dict[int, np.ndarray]:
        """CAV-to-ego transform for every neighbour, keyed by CAV id."""
        return {c.id: transform_from_poses(c.pose, self.ego) for c in self.cavs}

    def agent_positions_ego(self) -> dict[int, tuple[np.ndarray, float]]:
        """Ego-frame (x, y, z) and heading of every agent; the ego itself is id 0."""
        out = {0: (np.zeros(3), 0.0)}
        for cid, t in self.transforms().items():
            origin = project_points(np.array([[0.0, 0.0, 0.0, 1.0]]), t)[0, :3]
            heading = math.atan2(t[1, 0], t[0, 0])
            out[cid] = (origin, heading)
        return out

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "ego_pose": self.ego.as_dict(),
            "cavs": [{"id": c.id, "pose": c.pose.as_dict()} for c in self.cavs],
            "gt_boxes": [list(b.as_tuple()) for b in self.gt_boxes],
            "comm_range": self.comm_range,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        try:
            return cls(
                ego=Pose(**d["ego_pose"]),
                cavs=[CAV(int(c["id"]), Pose(**c["pose"])) for c in d.get("cavs", [])],
                gt_boxes=[Box3D(*b) for b in d.get("gt_boxes", [])],
                comm_range=float(d.get("comm_range", DEFAULT_COMM_RANGE)),
                scene_id=int(d.get("scene_id", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise SceneError(f"malformed scene record: {exc}") from exc


def neighbors_in_range(ego: Pose, candidates: Sequence[CAV], comm_range: float = DEFAULT_COMM_RANGE) -> list[CAV]:
    """Nodes of the ego's spatial graph: candidates within ``comm_range``, sorted by id."""
    keep = [c for c in candidates if np.linalg.norm(c.pose.position - ego.position) <= comm_range]
    return sorted(keep, key=lambda c: c.id)


def save_scene(path: str | Path, scene: Scene) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2))


def load_scene(path: str | Path) -> Scene:
    return Scene.from_dict(json.loads(Path(path).read_text()))
