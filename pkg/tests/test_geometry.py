import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2vlc.detection import Box3D
from v2vlc.geometry import (
    CAV,
    Pose,
    Scene,
    SceneError,
    invert_transform,
    is_rigid,
    load_scene,
    neighbors_in_range,
    project_points,
    rotation_matrix,
    save_scene,
    transform_from_poses,
)

coords = st.floats(-200, 200, allow_nan=False)
angles = st.floats(-10, 10, allow_nan=False)
poses = st.builds(Pose, coords, coords, st.floats(-5, 5), angles, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


def explicit_rotation(yaw, pitch, roll):
    cy, sy, cp, sp, cr, sr = (f(a) for a in (yaw, pitch, roll) for f in (math.cos, math.sin))
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return rz @ ry @ rx


def test_same_pose_is_identity():
    p = Pose(3.0, -2.0, 1.0, 0.4, 0.1, -0.2)
    np.testing.assert_allclose(transform_from_poses(p, p), np.eye(4), atol=1e-12)


def test_pure_translation():
    t = transform_from_poses(Pose(10, 0, 0), Pose(0, 0, 0))
    np.testing.assert_allclose(t[:3, 3], [10, 0, 0])
    np.testing.assert_allclose(t[:3, :3], np.eye(3))


@pytest.mark.parametrize("seed", range(10))
def test_cav_origin_matches_explicit_oracle(seed):
    rng = np.random.default_rng(seed)
    cav = Pose(*rng.uniform(-50, 50, 3), *rng.uniform(-math.pi, math.pi, 3))
    ego = Pose(*rng.uniform(-50, 50, 3), *rng.uniform(-math.pi, math.pi, 3))
    r_ego = explicit_rotation(ego.yaw, ego.pitch, ego.roll)
    expected = r_ego.T @ (np.array([cav.x, cav.y, cav.z]) - np.array([ego.x, ego.y, ego.z]))
    got = transform_from_poses(cav, ego) @ np.array([0.0, 0.0, 0.0, 1.0])
    np.testing.assert_allclose(got[:3], expected, atol=1e-9)


def test_rotation_matches_explicit():
    np.testing.assert_allclose(rotation_matrix(0.3, -0.2, 1.1), explicit_rotation(0.3, -0.2, 1.1), atol=1e-12)


def test_project_identity_and_translation():
    pts = np.array([[1.0, 2.0, 3.0, 1.0], [0.0, 0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(project_points(pts, np.eye(4)), pts)
    t = np.eye(4)
    t[:3, 3] = [1, 2, 3]
    np.testing.assert_allclose(project_points(np.array([[0.0, 0, 0, 1]]), t), [[1, 2, 3, 1]])


def test_yaw_quarter_turn():
    t = transform_from_poses(Pose(0, 0, 0, math.pi / 2), Pose(0, 0, 0))
    np.testing.assert_allclose(project_points(np.array([[1.0, 0, 0, 1]]), t), [[0, 1, 0, 1]], atol=1e-9)


def test_malformed_homogeneous_rejected():
    with pytest.raises(ValueError):
        project_points(np.array([[1.0, 2.0, 3.0, 2.0]]), np.eye(4))
    with pytest.raises(ValueError):
        project_points(np.ones((3, 3)), np.eye(4))


def test_angles_wrapped():
    p = Pose(0, 0, 0, 3 * math.pi, -math.pi, 7.0)
    for a in (p.yaw, p.pitch, p.roll):
        assert -math.pi < a <= math.pi
    assert p.yaw == pytest.approx(math.pi)


@settings(max_examples=80, deadline=None)
@given(poses, poses, st.lists(st.tuples(coords, coords, coords), min_size=2, max_size=6))
def test_rigid_roundtrip_and_distance(cav, ego, raw):
    t = transform_from_poses(cav, ego)
    assert is_rigid(t)
    assert np.array_equal(t[3], [0, 0, 0, 1])
    pts = np.hstack([np.array(raw, dtype=float), np.ones((len(raw), 1))])
    out = project_points(pts, t)
    np.testing.assert_allclose(out[:, 3], 1.0, atol=1e-9)
    np.testing.assert_allclose(project_points(out, invert_transform(t)), pts, atol=1e-7)
    d_in = np.linalg.norm(pts[0, :3] - pts[1, :3])
    d_out = np.linalg.norm(out[0, :3] - out[1, :3])
    assert d_out == pytest.approx(d_in, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(poses)
def test_self_transform_identity(p):
    np.testing.assert_allclose(transform_from_poses(p, p), np.eye(4), atol=1e-9)


def _scene(n_cavs=2, dist=20.0):
    cavs = [CAV(i + 1, Pose(dist * (i + 1) / n_cavs, 0, 0)) for i in range(n_cavs)]
    return Scene(Pose(0, 0, 0), cavs, [Box3D(5, 1, 0.8, 4.4, 1.9, 1.6, 0.2)])


class TestScene:
    def test_agent_count_limits(self):
        _scene(4)
        with pytest.raises(SceneError):
            _scene(5)

    def test_out_of_range_cav_rejected(self):
        with pytest.raises(SceneError):
            Scene(Pose(0, 0, 0), [CAV(1, Pose(80, 0, 0))], [])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(SceneError):
            Scene(Pose(0, 0, 0), [CAV(1, Pose(5, 0, 0)), CAV(1, Pose(6, 0, 0))], [])

    def test_neighbors_in_range(self):
        cands = [CAV(1, Pose(30, 0, 0)), CAV(2, Pose(69.9, 0, 0)), CAV(3, Pose(0, 71, 0))]
        assert [c.id for c in neighbors_in_range(Pose(0, 0, 0), cands)] == [1, 2]

    def test_transforms_keyed_by_id(self):
        s = _scene(3)
        ts = s.transforms()
        assert sorted(ts) == [1, 2, 3]
        assert all(is_rigid(t) for t in ts.values())

    def test_file_roundtrip(self, tmp_path):
        s = _scene(2)
        save_scene(tmp_path / "s.json", s)
        back = load_scene(tmp_path / "s.json")
        assert back.to_dict() == s.to_dict()
