import math

import numpy as np
import pytest

from posedrift.geometry import (
    IDENTITY,
    FastPose,
    Quaternion,
    Vec3,
    apply_delta,
    geodesic_angle,
    pose_delta,
    quat_from_axis_angle,
    quat_integrate,
    quat_multiply,
    rotate_vector,
    vsub,
)


def random_unit_quat(rng) -> Quaternion:
    v = rng.standard_normal(4)
    v /= np.linalg.norm(v)
    return Quaternion(*v)


class TestGeodesicAngle:
    def test_identity_zero(self):
        assert geodesic_angle(IDENTITY, IDENTITY) == 0.0

    def test_double_cover(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            q = random_unit_quat(rng)
            neg = Quaternion(-q.w, -q.x, -q.y, -q.z)
            assert geodesic_angle(q, neg) == 0.0

    def test_quarter_turn_about_z(self):
        # closed form: 2*acos(cos(45 deg)) = pi/2
        q = quat_from_axis_angle(Vec3(0, 0, 1), math.pi / 2)
        assert geodesic_angle(IDENTITY, q) == pytest.approx(math.pi / 2, abs=1e-12)

    def test_symmetry_and_sign_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            a, b = random_unit_quat(rng), random_unit_quat(rng)
            t = geodesic_angle(a, b)
            assert 0.0 <= t <= math.pi
            assert geodesic_angle(b, a) == pytest.approx(t, abs=1e-12)
            a_neg = Quaternion(-a.w, -a.x, -a.y, -a.z)
            assert geodesic_angle(a_neg, b) == pytest.approx(t, abs=1e-12)

    def test_matches_acos_form(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = random_unit_quat(rng), random_unit_quat(rng)
            d = min(1.0, abs(sum(x * y for x, y in zip(a, b))))
            assert geodesic_angle(a, b) == pytest.approx(2.0 * math.acos(d), abs=1e-7)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            geodesic_angle(Quaternion(math.nan, 0, 0, 0), IDENTITY)


class TestQuatIntegrate:
    def test_zero_rotation(self):
        q = quat_from_axis_angle(Vec3(1, 2, 3), 0.7)
        out = quat_integrate(q, Vec3(0, 0, 0), 0.01)
        for got, want in zip(out, q):
            assert got == pytest.approx(want, abs=1e-15)

    def test_half_turn_about_z(self):
        out = quat_integrate(IDENTITY, Vec3(0, 0, math.pi), 1.0)
        want = quat_from_axis_angle(Vec3(0, 0, 1), math.pi)
        assert geodesic_angle(out, want) < 1e-12

    def test_two_half_steps_equal_one(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            q = random_unit_quat(rng)
            w = Vec3(*rng.standard_normal(3))
            one = quat_integrate(q, w, 0.02)
            two = quat_integrate(quat_integrate(q, w, 0.01), w, 0.01)
            assert geodesic_angle(one, two) < 1e-12

    def test_norm_preserved_over_long_chain(self):
        q = IDENTITY
        w = Vec3(0.3, -0.2, 0.5)
        for _ in range(10_000):
            q = quat_integrate(q, w, 0.002)
        assert abs(q.norm() - 1.0) < 1e-9

    def test_negative_dt_rejected(self):
        with pytest.raises(ValueError):
            quat_integrate(IDENTITY, Vec3(0, 0, 1), -0.1)


class TestPoseDelta:
    def make(self, p, q) -> FastPose:
        return FastPose(0.0, p, q, Vec3(0, 0, 0))

    def test_identity_case(self):
        a = self.make(Vec3(1, 2, 3), quat_from_axis_angle(Vec3(0, 1, 0), 0.3))
        dp, dq = pose_delta(a, a)
        assert dp == Vec3(0, 0, 0)
        assert geodesic_angle(dq, IDENTITY) < 1e-12

    def test_pure_translation(self):
        a = self.make(Vec3(0, 0, 0), IDENTITY)
        b = self.make(Vec3(1, 0, 0), IDENTITY)
        dp, dq = pose_delta(a, b)
        assert dp == Vec3(1, 0, 0)
        assert geodesic_angle(dq, IDENTITY) == 0.0

    def test_pure_yaw(self):
        # hand-composed: delta = a^-1 * b = 90 deg yaw when a is identity
        yaw90 = quat_from_axis_angle(Vec3(0, 0, 1), math.pi / 2)
        a = self.make(Vec3(0, 0, 0), IDENTITY)
        b = self.make(Vec3(0, 0, 0), yaw90)
        dp, dq = pose_delta(a, b)
        assert dp == Vec3(0, 0, 0)
        assert geodesic_angle(dq, yaw90) < 1e-12

    def test_roundtrip(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            a = self.make(Vec3(*rng.standard_normal(3)), random_unit_quat(rng))
            b = self.make(Vec3(*rng.standard_normal(3)), random_unit_quat(rng))
            again = apply_delta(a, pose_delta(a, b))
            assert max(abs(c) for c in vsub(again.position, b.position)) < 1e-9
            assert geodesic_angle(again.orientation, b.orientation) < 1e-9


class TestRotateVector:
    def test_matches_matrix_free_definition(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            q = random_unit_quat(rng)
            v = Vec3(*rng.standard_normal(3))
            # q * (0, v) * conj(q)
            pure = Quaternion(0.0, v.x, v.y, v.z)
            full = quat_multiply(quat_multiply(q, pure), q.conjugate())
            got = rotate_vector(q, v)
            assert np.allclose([full.x, full.y, full.z], list(got), atol=1e-12)

    def test_rotation_preserves_norm(self):
        q = quat_from_axis_angle(Vec3(1, 1, 0), 1.1)
        v = Vec3(3, -4, 12)
        assert rotate_vector(q, v).norm() == pytest.approx(13.0, abs=1e-12)
