"""Server-side adversary: Bernoulli-gated bounded drifts on outgoing slow poses.

Every spoofed round adds `magnitude * random unit direction` to position,
velocity, and the stacked 6-D bias vector, and rotates the orientation by
the configured angle about a random axis (then renormalizes — adding raw
quaternion components would leave the unit sphere).

Two modes:
  per-round   fresh directions each spoofed round, fixed magnitudes
  cumulative  directions drawn once per session, magnitudes accumulate
              across spoofed rounds (a slowly growing drift)

Draws are keyed by (rng_seed, round_id), so an attacked session is a
deterministic function of the clean one: replays pair exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .geometry import SlowPoseState, Vec3, quat_from_rotvec, quat_multiply, vadd, vec3_of

_STREAM_ATTACK = 31
_STREAM_ATTACK_DIR = 32

ENV_PREFIX = "ILLIXR_VIO_SPOOF_"
ENV_VARS = {
    "bias_drift": ENV_PREFIX + "BIAS_DRIFT",
    "velocity_drift": ENV_PREFIX + "VELOCITY_DRIFT",
    "position_drift": ENV_PREFIX + "POSITION_DRIFT",
    "angle_drift": ENV_PREFIX + "ANGLE_DRIFT",
    "p": ENV_PREFIX + "PROBABILITY",
}


@dataclass(frozen=True)
class AttackConfig:
    p: float = 0.0
    bias_drift: float = 0.05
    velocity_drift: float = 0.10  # m/s
    position_drift: float = 0.02  # m
    angle_drift: float = 0.20  # rad
    rng_seed: int = 0
    mode: str = "per-round"  # or "cumulative"

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("spoof probability must be in [0, 1]")
        if min(self.bias_drift, self.velocity_drift, self.position_drift, self.angle_drift) < 0:
            raise ValueError("drift magnitudes must be non-negative")
        if self.mode not in ("per-round", "cumulative"):
            raise ValueError(f"unknown attack mode {self.mode!r}")


@dataclass(frozen=True)
class SpoofRecord:
    round_id: int
    was_spoofed: bool
    delta_position: Vec3
    delta_rotvec: Vec3  # axis * angle actually applied
    delta_velocity: Vec3
    delta_bias_acc: Vec3
    delta_bias_gyro: Vec3


def _clean_record(round_id: int) -> SpoofRecord:
    z = Vec3(0.0, 0.0, 0.0)
    return SpoofRecord(round_id, False, z, z, z, z, z)


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    n = np.linalg.norm(v)
    while n < 1e-12:  # astronomically unlikely; redraw keeps direction uniform
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
    return v / n


class Attacker:
    """Holds per-session state (the cumulative accumulator) for one config."""

    def __init__(self, cfg: AttackConfig):
        self.cfg = cfg
        self._spoof_count = 0
        if cfg.mode == "cumulative":
            rng = np.random.default_rng([cfg.rng_seed, _STREAM_ATTACK_DIR])
            self._dir_pos = _unit(rng, 3)
            self._dir_vel = _unit(rng, 3)
            self._dir_bias = _unit(rng, 6)
            self._axis = _unit(rng, 3)

    def maybe_spoof(self, s: SlowPoseState) -> tuple[SlowPoseState, SpoofRecord]:
        cfg = self.cfg
        rng = np.random.default_rng([cfg.rng_seed, _STREAM_ATTACK, s.round_id])
        if rng.random() >= cfg.p:
            return s, _clean_record(s.round_id)

        if cfg.mode == "per-round":
            dir_pos = _unit(rng, 3)
            axis = _unit(rng, 3)
            dir_vel = _unit(rng, 3)
            dir_bias = _unit(rng, 6)
            scale = 1.0
        else:
            self._spoof_count += 1
            dir_pos, axis = self._dir_pos, self._axis
            dir_vel, dir_bias = self._dir_vel, self._dir_bias
            scale = float(self._spoof_count)

        dp = vec3_of(dir_pos * (scale * cfg.position_drift))
        dv = vec3_of(dir_vel * (scale * cfg.velocity_drift))
        db = dir_bias * (scale * cfg.bias_drift)
        db_acc, db_gyro = vec3_of(db[:3]), vec3_of(db[3:])
        rotvec = vec3_of(axis * (scale * cfg.angle_drift))

        q_spoofed = quat_multiply(quat_from_rotvec(rotvec), s.orientation).normalized()
        spoofed = SlowPoseState(
            timestamp=s.timestamp,
            position=vadd(s.position, dp),
            orientation=q_spoofed,
            velocity=vadd(s.velocity, dv),
            bias_acc=vadd(s.bias_acc, db_acc),
            bias_gyro=vadd(s.bias_gyro, db_gyro),
            round_id=s.round_id,
        )
        record = SpoofRecord(
            round_id=s.round_id,
            was_spoofed=True,
            delta_position=dp,
            delta_rotvec=rotvec,
            delta_velocity=dv,
            delta_bias_acc=db_acc,
            delta_bias_gyro=db_gyro,
        )
        return spoofed, record


def maybe_spoof(s: SlowPoseState, cfg: AttackConfig) -> tuple[SlowPoseState, SpoofRecord]:
    """Stateless per-round spoof; cumulative mode needs a persistent Attacker."""
    if cfg.mode == "cumulative":
        raise ValueError("cumulative mode carries state; use an Attacker instance")
    return Attacker(cfg).maybe_spoof(s)


def default_configs(p: float = 0.5, rng_seed: int = 0, mode: str = "per-round") -> list[AttackConfig]:
    """The four canonical attack configurations, mildest to most aggressive.

    Config 1 equals the server environment-variable defaults; the drift
    magnitudes of the sweep are (bias, velocity, position, angle).
    """
    rows = [
        (0.05, 0.10, 0.02, 0.2),
        (0.10, 0.30, 0.09, 0.5),
        (0.60, 0.80, 0.50, 0.9),
        (1.20, 1.50, 1.00, 2.0),
    ]
    return [
        AttackConfig(
            p=p,
            bias_drift=b,
            velocity_drift=v,
            position_drift=pos,
            angle_drift=ang,
            rng_seed=rng_seed,
            mode=mode,
        )
        for b, v, pos, ang in rows
    ]


def resolve_attack_config(
    cli: Mapping[str, object] | None = None,
    config_file: Mapping[str, object] | None = None,
    environ: Mapping[str, str] | None = None,
    base: AttackConfig | None = None,
) -> AttackConfig:
    """Layer attack settings: CLI > config file > environment > defaults."""
    cfg = base if base is not None else AttackConfig()
    env = os.environ if environ is None else environ
    env_updates = {}
    for field_name, var in ENV_VARS.items():
        if var in env:
            env_updates[field_name] = float(env[var])
    cfg = replace(cfg, **env_updates)
    for layer in (config_file, cli):
        if not layer:
            continue
        known = {k: v for k, v in layer.items() if k in AttackConfig.__dataclass_fields__}
        numeric = {"p", "bias_drift", "velocity_drift", "position_drift", "angle_drift"}
        coerced = {k: (float(v) if k in numeric else v) for k, v in known.items() if v is not None}
        cfg = replace(cfg, **coerced)
    return cfg
