import math

import numpy as np
import pytest

from posedrift.attacker import (
    AttackConfig,
    Attacker,
    SpoofRecord,
    default_configs,
    maybe_spoof,
    resolve_attack_config,
)
from posedrift.geometry import IDENTITY, SlowPoseState, Vec3, geodesic_angle


def sample_state(round_id: int) -> SlowPoseState:
    return SlowPoseState(
        timestamp=round_id * 0.05,
        position=Vec3(1.0, 2.0, 3.0),
        orientation=IDENTITY,
        velocity=Vec3(0.1, 0.0, -0.1),
        bias_acc=Vec3(0.01, 0.0, 0.0),
        bias_gyro=Vec3(0.0, 0.001, 0.0),
        round_id=round_id,
    )


class TestMaybeSpoof:
    def test_p_zero_never_spoofs(self):
        cfg = AttackConfig(p=0.0, rng_seed=1)
        for rid in range(200):
            out, rec = maybe_spoof(sample_state(rid), cfg)
            assert out == sample_state(rid)
            assert not rec.was_spoofed
            assert rec.delta_position == Vec3(0, 0, 0)

    def test_p_one_position_offset_exact(self):
        cfg = AttackConfig(p=1.0, position_drift=0.02, rng_seed=2)
        for rid in range(100):
            out, rec = maybe_spoof(sample_state(rid), cfg)
            assert rec.was_spoofed
            offset = math.dist(out.position, sample_state(rid).position)
            assert offset == pytest.approx(0.02, abs=1e-12)

    def test_p_one_angle_drift_exact(self):
        cfg = AttackConfig(p=1.0, angle_drift=0.2, rng_seed=3)
        for rid in range(50):
            out, _ = maybe_spoof(sample_state(rid), cfg)
            ang = geodesic_angle(out.orientation, sample_state(rid).orientation)
            assert ang == pytest.approx(0.2, abs=1e-9)
            assert abs(out.orientation.norm() - 1.0) < 1e-9

    def test_bias_drift_on_stacked_vector(self):
        cfg = AttackConfig(p=1.0, bias_drift=0.05, rng_seed=4)
        out, rec = maybe_spoof(sample_state(1), cfg)
        da = np.array(out.bias_acc) - np.array(sample_state(1).bias_acc)
        dg = np.array(out.bias_gyro) - np.array(sample_state(1).bias_gyro)
        stacked = np.concatenate([da, dg])
        assert np.linalg.norm(stacked) == pytest.approx(0.05, abs=1e-12)
        assert np.allclose(da, rec.delta_bias_acc)

    def test_bernoulli_fraction(self):
        cfg = AttackConfig(p=0.25, rng_seed=5)
        hits = sum(maybe_spoof(sample_state(rid), cfg)[1].was_spoofed for rid in range(10_000))
        assert abs(hits / 10_000 - 0.25) < 0.02

    def test_deterministic_per_seed_and_round(self):
        cfg = AttackConfig(p=0.9, rng_seed=6)
        a = maybe_spoof(sample_state(17), cfg)
        b = maybe_spoof(sample_state(17), cfg)
        assert a == b
        c = maybe_spoof(sample_state(18), cfg)
        assert c != a

    def test_velocity_drift_magnitude(self):
        cfg = AttackConfig(p=1.0, velocity_drift=0.1, rng_seed=7)
        out, _ = maybe_spoof(sample_state(2), cfg)
        dv = math.dist(out.velocity, sample_state(2).velocity)
        assert dv == pytest.approx(0.1, abs=1e-12)

    def test_record_zero_iff_clean(self):
        cfg = AttackConfig(p=0.5, rng_seed=8)
        for rid in range(200):
            _, rec = maybe_spoof(sample_state(rid), cfg)
            zero = rec.delta_position == Vec3(0, 0, 0) and rec.delta_rotvec == Vec3(0, 0, 0)
            assert zero == (not rec.was_spoofed)


class TestCumulativeMode:
    def test_drift_accumulates_along_fixed_direction(self):
        cfg = AttackConfig(p=1.0, position_drift=0.02, rng_seed=9, mode="cumulative")
        attacker = Attacker(cfg)
        offsets = []
        for rid in range(1, 6):
            out, rec = attacker.maybe_spoof(sample_state(rid))
            offsets.append(np.array(rec.delta_position))
        mags = [np.linalg.norm(o) for o in offsets]
        assert mags == pytest.approx([0.02 * k for k in range(1, 6)], abs=1e-12)
        dirs = [o / np.linalg.norm(o) for o in offsets]
        for d in dirs[1:]:
            assert np.allclose(d, dirs[0], atol=1e-12)

    def test_stateless_helper_rejects_cumulative(self):
        with pytest.raises(ValueError):
            maybe_spoof(sample_state(1), AttackConfig(p=1.0, mode="cumulative"))


class TestDefaultConfigs:
    def test_exact_sweep_values(self):
        configs = default_configs()
        assert len(configs) == 4
        rows = [
            (c.bias_drift, c.velocity_drift, c.position_drift, c.angle_drift) for c in configs
        ]
        assert rows[0] == (0.05, 0.10, 0.02, 0.2)
        assert rows[1] == (0.10, 0.30, 0.09, 0.5)
        assert rows[2] == (0.60, 0.80, 0.50, 0.9)
        assert rows[3] == (1.20, 1.50, 1.00, 2.0)

    def test_config_one_matches_env_defaults(self):
        base = AttackConfig()
        one = default_configs()[0]
        assert (base.bias_drift, base.velocity_drift, base.position_drift, base.angle_drift) == (
            one.bias_drift,
            one.velocity_drift,
            one.position_drift,
            one.angle_drift,
        )


class TestConfigValidation:
    def test_probability_range(self):
        with pytest.raises(ValueError):
            AttackConfig(p=1.5)
        with pytest.raises(ValueError):
            AttackConfig(p=-0.1)

    def test_negative_drift_rejected(self):
        with pytest.raises(ValueError):
            AttackConfig(position_drift=-0.01)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            AttackConfig(mode="weird")


class TestResolvePrecedence:
    def test_env_overrides_defaults(self):
        env = {"ILLIXR_VIO_SPOOF_POSITION_DRIFT": "0.5", "ILLIXR_VIO_SPOOF_PROBABILITY": "0.75"}
        cfg = resolve_attack_config(environ=env)
        assert cfg.position_drift == 0.5
        assert cfg.p == 0.75

    def test_file_overrides_env(self):
        env = {"ILLIXR_VIO_SPOOF_POSITION_DRIFT": "0.5"}
        cfg = resolve_attack_config(config_file={"position_drift": 0.7}, environ=env)
        assert cfg.position_drift == 0.7

    def test_cli_overrides_file(self):
        env = {"ILLIXR_VIO_SPOOF_ANGLE_DRIFT": "0.9"}
        cfg = resolve_attack_config(
            cli={"angle_drift": 0.1}, config_file={"angle_drift": 0.4}, environ=env
        )
        assert cfg.angle_drift == 0.1

    def test_none_cli_values_ignored(self):
        cfg = resolve_attack_config(cli={"p": None}, environ={})
        assert cfg.p == 0.0
