"""The two pose producers: client dead reckoning and the emulated server VIO.

The client integrates bias-corrected IMU from the last accepted anchor
(midpoint-rule strapdown, one fast pose per IMU sample).  The server side
is a stand-in for a real VIO stack: it perturbs exact ground truth with
configurable zero-mean noise, deterministically per (seed, round_id).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import Decision, Verdict
from .geometry import (
    FastPose,
    SlowPoseState,
    quat_from_rotvec,
    quat_integrate,
    quat_multiply,
    rotate_vector,
    vadd,
    vec3_of,
    vscale,
    vsub,
)
from .motion import GRAVITY, ImuSample, TrajectoryProfile, default_noise_model, ground_truth_at

_STREAM_VIO = 21


@dataclass(frozen=True)
class VioEmulatorConfig:
    pos_noise_std: float = 0.001  # m
    ang_noise_std: float = 0.001  # rad
    vel_noise_std: float = 0.005  # m/s
    bias_report_noise_std: float = 0.0005
    rng_seed: int = 0

    def __post_init__(self) -> None:
        stds = (self.pos_noise_std, self.ang_noise_std, self.vel_noise_std, self.bias_report_noise_std)
        if min(stds) < 0:
            raise ValueError("noise stds must be non-negative")


@dataclass(frozen=True)
class FastPoseWindow:
    """One round's dead-reckoned buffer plus the IMU that produced it."""

    window_index: int
    anchor: SlowPoseState
    poses: tuple[FastPose, ...]
    imu: tuple[ImuSample, ...]

    @property
    def degenerate(self) -> bool:
        return len(self.poses) == 0


def integrate_fast_poses(
    anchor: SlowPoseState, imu: list[ImuSample] | tuple[ImuSample, ...], window_index: int = 0
) -> FastPoseWindow:
    """Strapdown-integrate one window of IMU samples from the anchor state.

    Each sample advances the state over (t_prev, t_sample] holding the
    sample's (midpoint-evaluated) rates constant; the world acceleration
    is taken at the orientation midpoint.  Emits one FastPose per sample.
    """
    prev_t = anchor.timestamp
    for s in imu:
        if s.timestamp < prev_t:
            raise ValueError("IMU timestamps must be sorted and not precede the anchor")
        prev_t = s.timestamp

    p = anchor.position
    v = anchor.velocity
    q = anchor.orientation
    ba = anchor.bias_acc
    bg = anchor.bias_gyro
    t_prev = anchor.timestamp

    poses = []
    for s in imu:
        dt = s.timestamp - t_prev
        omega = vsub(s.gyro, bg)
        f_body = vsub(s.accel, ba)
        q_mid = quat_integrate(q, omega, 0.5 * dt)
        a_world = vadd(rotate_vector(q_mid, f_body), GRAVITY)
        p = vadd(p, vadd(vscale(v, dt), vscale(a_world, 0.5 * dt * dt)))
        v = vadd(v, vscale(a_world, dt))
        q = quat_integrate(q, omega, dt)
        t_prev = s.timestamp
        poses.append(FastPose(timestamp=s.timestamp, position=p, orientation=q, velocity=v))

    return FastPoseWindow(
        window_index=window_index, anchor=anchor, poses=tuple(poses), imu=tuple(imu)
    )


def emulate_slow_pose(
    profile: TrajectoryProfile, t: float, cfg: VioEmulatorConfig, round_id: int
) -> SlowPoseState:
    """Server-side slow pose: exact ground truth plus per-round Gaussian noise.

    Deterministic per (cfg.rng_seed, round_id), so replaying a session
    reproduces the identical slow-pose stream regardless of call order.
    """
    truth = ground_truth_at(profile, t)
    p, v, _, q, _ = truth
    noise_model = default_noise_model(profile)
    rng = np.random.default_rng([cfg.rng_seed, _STREAM_VIO, round_id])

    dp = rng.standard_normal(3) * cfg.pos_noise_std
    rot = rng.standard_normal(3) * cfg.ang_noise_std
    dv = rng.standard_normal(3) * cfg.vel_noise_std
    dba = rng.standard_normal(3) * cfg.bias_report_noise_std
    dbg = rng.standard_normal(3) * cfg.bias_report_noise_std

    q_noisy = quat_multiply(q, quat_from_rotvec(vec3_of(rot))).normalized()
    return SlowPoseState(
        timestamp=t,
        position=vadd(p, vec3_of(dp)),
        orientation=q_noisy,
        velocity=vadd(v, vec3_of(dv)),
        bias_acc=vadd(noise_model.accel_bias, vec3_of(dba)),
        bias_gyro=vadd(noise_model.gyro_bias, vec3_of(dbg)),
        round_id=round_id,
    )


def reanchor(
    incoming: SlowPoseState, verdict: Verdict, window: FastPoseWindow
) -> SlowPoseState:
    """Choose the next window's anchor from the detector's decision.

    Accept / force-pass adopt the incoming slow pose wholesale (full
    state, velocity and biases included).  Drop keeps dead-reckoning: the
    anchor advances to the last integrated fast pose, carrying the
    previous anchor's biases.
    """
    if verdict.decision in (Decision.ACCEPT, Decision.FORCE_PASS):
        return incoming
    if window.degenerate:
        return window.anchor._replace(round_id=incoming.round_id)
    last = window.poses[-1]
    return SlowPoseState(
        timestamp=last.timestamp,
        position=last.position,
        orientation=last.orientation.normalized(),
        velocity=last.velocity,
        bias_acc=window.anchor.bias_acc,
        bias_gyro=window.anchor.bias_gyro,
        round_id=incoming.round_id,
    )
