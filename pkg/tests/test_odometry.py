import math

import numpy as np
import pytest

from posedrift.detector import Decision, Verdict, VerdictClass
from posedrift.geometry import IDENTITY, SlowPoseState, Vec3, geodesic_angle
from posedrift.motion import (
    ImuNoiseModel,
    ImuSample,
    ground_truth_at,
    ground_truth_state,
    random_profile,
    static_profile,
    synthesize_imu,
)
from posedrift.odometry import (
    FastPoseWindow,
    VioEmulatorConfig,
    emulate_slow_pose,
    integrate_fast_poses,
    reanchor,
)

QUIET = ImuNoiseModel(accel_noise_std=0.0, gyro_noise_std=0.0)


def static_anchor(t=0.0, round_id=0) -> SlowPoseState:
    return SlowPoseState(t, Vec3(0, 0, 0), IDENTITY, Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(0, 0, 0), round_id)


class TestIntegrateFastPoses:
    def test_empty_imu_is_degenerate(self):
        window = integrate_fast_poses(static_anchor(), [])
        assert window.degenerate
        assert window.poses == ()

    def test_static_imu_keeps_anchor(self):
        samples = synthesize_imu(static_profile(duration_s=0.1), QUIET)
        window = integrate_fast_poses(static_anchor(), samples)
        assert len(window.poses) == 50
        for pose in window.poses:
            assert pose.position.norm() < 1e-9
            assert pose.velocity.norm() < 1e-9
            assert geodesic_angle(pose.orientation, IDENTITY) < 1e-9

    def test_constant_acceleration_closed_form(self):
        # constant world acceleration a: displacement must be a*T^2/2
        a_world = Vec3(0.7, 0.0, 0.0)
        rate, duration = 500.0, 2.0
        n = int(rate * duration)
        samples = [
            ImuSample(
                timestamp=(k + 1) / rate,
                accel=Vec3(a_world.x, a_world.y, a_world.z + 9.81),
                gyro=Vec3(0, 0, 0),
            )
            for k in range(n)
        ]
        window = integrate_fast_poses(static_anchor(), samples)
        end = window.poses[-1]
        want = 0.5 * a_world.x * duration**2
        assert end.position.x == pytest.approx(want, rel=1e-3)
        assert end.velocity.x == pytest.approx(a_world.x * duration, rel=1e-3)

    def test_unsorted_timestamps_rejected(self):
        samples = [
            ImuSample(0.2, Vec3(0, 0, 9.81), Vec3(0, 0, 0)),
            ImuSample(0.1, Vec3(0, 0, 9.81), Vec3(0, 0, 0)),
        ]
        with pytest.raises(ValueError):
            integrate_fast_poses(static_anchor(), samples)

    def test_samples_before_anchor_rejected(self):
        samples = [ImuSample(0.1, Vec3(0, 0, 9.81), Vec3(0, 0, 0))]
        with pytest.raises(ValueError):
            integrate_fast_poses(static_anchor(t=0.5), samples)

    def test_bias_correction_uses_anchor_biases(self):
        bias = Vec3(0.3, 0.0, 0.0)
        anchor = static_anchor()._replace(bias_acc=bias)
        samples = [
            ImuSample((k + 1) / 500.0, Vec3(0.3, 0.0, 9.81), Vec3(0, 0, 0)) for k in range(250)
        ]
        window = integrate_fast_poses(anchor, samples)
        assert window.poses[-1].position.norm() < 1e-9


class TestEmulateSlowPose:
    def test_zero_noise_is_ground_truth(self):
        profile = random_profile(5, duration_s=4.0)
        cfg = VioEmulatorConfig(0.0, 0.0, 0.0, 0.0, rng_seed=1)
        s = emulate_slow_pose(profile, 1.5, cfg, round_id=30)
        p, v, _, q, _ = ground_truth_at(profile, 1.5)
        assert s.position == p
        assert s.velocity == v
        assert geodesic_angle(s.orientation, q) < 1e-12
        assert s.round_id == 30

    def test_deterministic_per_seed_and_round(self):
        profile = random_profile(6, duration_s=4.0)
        cfg = VioEmulatorConfig(rng_seed=9)
        a = emulate_slow_pose(profile, 2.0, cfg, round_id=40)
        b = emulate_slow_pose(profile, 2.0, cfg, round_id=40)
        assert a == b
        c = emulate_slow_pose(profile, 2.0, cfg, round_id=41)
        assert c != a

    def test_position_noise_statistics(self):
        profile = static_profile(duration_s=5.0)
        sigma = 0.01
        cfg = VioEmulatorConfig(pos_noise_std=sigma, rng_seed=3)
        errs = []
        for rid in range(10_000):
            s = emulate_slow_pose(profile, 1.0, cfg, round_id=rid)
            errs.append(s.position.x)
        assert np.std(errs) == pytest.approx(sigma, rel=0.05)

    def test_reported_bias_tracks_true_bias(self):
        profile = random_profile(8, duration_s=4.0)
        from posedrift.motion import default_noise_model

        true_bias = default_noise_model(profile).accel_bias
        cfg = VioEmulatorConfig(bias_report_noise_std=0.0, rng_seed=2)
        s = emulate_slow_pose(profile, 1.0, cfg, round_id=5)
        assert s.bias_acc == true_bias


def make_verdict(decision: Decision) -> Verdict:
    klass = VerdictClass.HARD_ANOMALY if decision is Decision.FORCE_PASS else (
        VerdictClass.NORMAL if decision is Decision.ACCEPT else VerdictClass.SOFT_ANOMALY
    )
    return Verdict(klass=klass, decision=decision, mse=0.5, hard_streak_after=0)


class TestReanchor:
    def setup_method(self):
        profile = random_profile(10, duration_s=1.0)
        samples = synthesize_imu(profile, QUIET)[:25]
        self.anchor = ground_truth_state(profile, 0.0, QUIET)
        self.window = integrate_fast_poses(self.anchor, samples, window_index=1)
        self.incoming = SlowPoseState(
            samples[-1].timestamp,
            Vec3(9, 9, 9),
            IDENTITY,
            Vec3(1, 1, 1),
            Vec3(0.5, 0, 0),
            Vec3(0, 0.5, 0),
            1,
        )

    def test_accept_adopts_incoming(self):
        assert reanchor(self.incoming, make_verdict(Decision.ACCEPT), self.window) == self.incoming

    def test_force_pass_adopts_incoming(self):
        assert (
            reanchor(self.incoming, make_verdict(Decision.FORCE_PASS), self.window)
            == self.incoming
        )

    def test_drop_continues_dead_reckoning(self):
        out = reanchor(self.incoming, make_verdict(Decision.DROP), self.window)
        last = self.window.poses[-1]
        assert out.position == last.position
        assert out.velocity == last.velocity
        assert geodesic_angle(out.orientation, last.orientation) < 1e-12
        # biases carried from the previous anchor, not the dropped pose
        assert out.bias_acc == self.anchor.bias_acc
        assert out.bias_gyro == self.anchor.bias_gyro
        assert out.round_id == self.incoming.round_id

    def test_drop_on_degenerate_window_keeps_anchor(self):
        empty = FastPoseWindow(1, self.anchor, (), ())
        out = reanchor(self.incoming, make_verdict(Decision.DROP), empty)
        assert out.position == self.anchor.position

    def test_reanchor_output_orientation_unit(self):
        for decision in (Decision.ACCEPT, Decision.DROP, Decision.FORCE_PASS):
            out = reanchor(self.incoming, make_verdict(decision), self.window)
            assert abs(out.orientation.norm() - 1.0) < 1e-9
