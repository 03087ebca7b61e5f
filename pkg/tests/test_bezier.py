import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazereach.bezier import (
    BezierReach,
    chord_length,
    control_pose,
    eval_reach,
    fit_reach,
    mean_pose,
    parameterize,
    steps_for_reach,
)
from gazereach.geometry import (
    Pose7,
    PoseDelta7,
    compose,
    delta_between,
    quat_from_rotvec,
    quat_slerp,
)


def random_reach(rng, rot_scale=0.4):
    def pose():
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        return Pose7(rng.uniform(-0.4, 0.4, 3),
                     quat_from_rotvec(axis * rng.uniform(0, rot_scale)),
                     rng.uniform(0.0, 1.2))
    vec = PoseDelta7(rng.uniform(-0.05, 0.05, 3), rng.normal(size=3) * 0.05,
                     rng.uniform(-0.1, 0.1))
    return BezierReach(pose(), pose(), vec)


class TestControlPose:
    def test_zero_vector_gives_mean(self):
        rng = np.random.default_rng(0)
        r = random_reach(rng)
        r0 = BezierReach(r.start, r.end, PoseDelta7.zero())
        m = mean_pose(r.start, r.end)
        c = control_pose(r0)
        assert np.allclose(c.position, m.position)
        assert abs(np.dot(c.orientation, m.orientation)) > 1 - 1e-12

    def test_degenerate_chord(self):
        rng = np.random.default_rng(1)
        p = random_reach(rng).start
        v = PoseDelta7(np.array([0.01, 0.02, 0.03]), np.array([0.1, 0, 0]), 0.05)
        c = control_pose(BezierReach(p, p, v))
        expected = compose(p, v)
        assert np.allclose(c.position, expected.position)
        assert abs(np.dot(c.orientation, expected.orientation)) > 1 - 1e-12

    def test_midpoint_slerp_oracle(self):
        rng = np.random.default_rng(2)
        r = random_reach(rng)
        m = mean_pose(r.start, r.end)
        q_ref = quat_slerp(r.start.orientation, r.end.orientation, 0.5)
        assert abs(np.dot(m.orientation, q_ref)) > 1 - 1e-12
        assert np.allclose(m.position, 0.5 * (r.start.position + r.end.position))


class TestEval:
    def test_endpoints(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            r = random_reach(rng)
            p0 = eval_reach(r, 0.0)
            assert np.array_equal(p0.position, r.start.position)
            assert p0.gripper == r.start.gripper
            p1 = eval_reach(r, 1.0)
            assert np.linalg.norm(p1.position - r.end.position) < 1e-9
            assert abs(np.dot(p1.orientation, r.end.orientation)) > 1 - 1e-9
            assert abs(p1.gripper - r.end.gripper) < 1e-9

    def test_zero_vector_midpoint_is_chord_midpoint(self):
        a = Pose7(np.array([0.0, 0, 0]), [1, 0, 0, 0], 0.2)
        b = Pose7(np.array([0.2, 0.1, 0]), [1, 0, 0, 0], 0.8)
        r = BezierReach(a, b, PoseDelta7.zero())
        mid = eval_reach(r, 0.5)
        assert np.allclose(mid.position, [0.1, 0.05, 0])
        assert mid.gripper == pytest.approx(0.5)

    def test_out_of_range(self):
        rng = np.random.default_rng(4)
        r = random_reach(rng)
        with pytest.raises(ValueError, match="parameter out of range"):
            eval_reach(r, 1.01)
        with pytest.raises(ValueError, match="parameter out of range"):
            eval_reach(r, -0.01)


class TestFit:
    def test_chord_samples_give_zero_vector(self):
        a = Pose7(np.zeros(3), [1, 0, 0, 0], 0.0)
        b = Pose7(np.array([0.3, 0.1, 0.2]), quat_from_rotvec([0.2, 0, 0.1]), 0.6)
        chord = BezierReach(a, b, PoseDelta7.zero())
        s = np.linspace(0, 1, 11)
        samples = [(si, eval_reach(chord, si)) for si in s]
        vec, rms = fit_reach(samples)
        assert np.linalg.norm(vec.as_vector()) < 1e-9
        assert rms < 1e-9

    def test_planted_control_recovery(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            r = random_reach(rng)
            s = np.linspace(0, 1, 25)
            samples = [(si, eval_reach(r, si)) for si in s]
            vec, rms = fit_reach(samples)
            assert np.linalg.norm(vec.as_vector() - r.bezier_vector.as_vector()) < 1e-6
            assert rms < 1e-9

    def test_noisy_recovery_within_2mm(self):
        rng = np.random.default_rng(42)
        a = Pose7(np.zeros(3), [1, 0, 0, 0], 1.0)
        b = Pose7(np.array([0.25, 0.05, 0.05]), [1, 0, 0, 0], 1.0)
        planted = PoseDelta7(np.array([0.01, -0.02, 0.04]), np.zeros(3), 0.0)
        r = BezierReach(a, b, planted)
        s = np.linspace(0, 1, 50)
        samples = []
        for si in s:
            p = eval_reach(r, si)
            noise = rng.normal(0, 0.001, 3) if 0 < si < 1 else np.zeros(3)
            samples.append((si, Pose7(p.position + noise, p.orientation, p.gripper)))
        vec, _ = fit_reach(samples)
        assert np.linalg.norm(vec.dpos - planted.dpos) < 0.002

    def test_translation_equivariance(self):
        rng = np.random.default_rng(6)
        r = random_reach(rng)
        s = np.linspace(0, 1, 15)
        samples = [(si, eval_reach(r, si)) for si in s]
        vec0, _ = fit_reach(samples)
        v = np.array([1.3, -0.7, 2.1])
        shifted = [(si, Pose7(p.position + v, p.orientation, p.gripper))
                   for si, p in samples]
        vec1, _ = fit_reach(shifted)
        assert np.linalg.norm(vec0.as_vector() - vec1.as_vector()) < 1e-9

    def test_endpoint_only_underdetermined(self):
        a = Pose7.identity()
        b = Pose7(np.array([0.1, 0, 0]), [1, 0, 0, 0], 0.0)
        with pytest.raises(ValueError, match="underdetermined"):
            fit_reach([(0.0, a), (0.0, a), (1.0, b)])

    def test_too_few_samples(self):
        a = Pose7.identity()
        with pytest.raises(ValueError, match="3 samples"):
            fit_reach([(0.0, a), (1.0, a)])

    def test_bad_parameter_range(self):
        a = Pose7.identity()
        with pytest.raises(ValueError, match="start at 0"):
            fit_reach([(0.1, a), (0.5, a), (1.0, a)])


class TestParameterize:
    def test_uniform(self):
        assert np.allclose(parameterize([0, 1, 2]), [0, 0.5, 1])

    def test_affine(self):
        assert np.allclose(parameterize([0, 0.1, 0.4, 1.0]), [0, 0.1, 0.4, 1.0])

    def test_single_interval(self):
        assert np.allclose(parameterize([5, 7]), [0, 1])

    def test_duplicates_error(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            parameterize([0, 1, 1, 2])


class TestStepScaling:
    def test_steps_from_chord(self):
        a = Pose7.identity()
        b = Pose7(np.array([0.25, 0, 0]), [1, 0, 0, 0], 0.0)
        r = BezierReach(a, b, PoseDelta7.zero())
        assert chord_length(r) == pytest.approx(0.25)
        assert steps_for_reach(r, speed=0.10, dt=0.1) == 25

    def test_min_one_step(self):
        a = Pose7.identity()
        r = BezierReach(a, a, PoseDelta7.zero())
        assert steps_for_reach(r) == 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fit_eval_consistency_property(seed):
    rng = np.random.default_rng(seed)
    r = random_reach(rng, rot_scale=0.3)
    s = np.linspace(0, 1, 20)
    samples = [(si, eval_reach(r, si)) for si in s]
    vec, rms = fit_reach(samples)
    assert np.linalg.norm(vec.as_vector() - r.bezier_vector.as_vector()) < 1e-6
    assert rms < 1e-8
