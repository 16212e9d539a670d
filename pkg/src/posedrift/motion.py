"""Synthetic 6-DoF ground truth and analytically consistent IMU streams.

Motion model: per-axis sums of sinusoids for position, and per-axis sums
of sinusoids for the Euler-angle *rates* (roll/pitch/yaw, ZYX order).
Both integrate in closed form, so position, velocity, acceleration,
orientation, and body angular velocity are all exact — any residual seen
downstream comes from injected sensor noise or attacks, never from the
generator.

IMU samples are stamped at t_k = k / imu_rate but carry the signal
evaluated at the midpoint of (t_{k-1}, t_k], which pairs with the
midpoint-rule strapdown integrator in the odometry module (second-order
accurate, sub-mm over seconds at headset rates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Quaternion, SlowPoseState, Vec3, quat_multiply, vec3_of

GRAVITY = Vec3(0.0, 0.0, -9.81)

# RNG sub-stream tags so one session seed yields independent streams
_STREAM_PROFILE = 11
_STREAM_IMU = 12
_STREAM_BIAS = 13


class SinusoidTerm(NamedTuple):
    amplitude: float
    frequency_hz: float
    phase_rad: float


class ImuSample(NamedTuple):
    timestamp: float
    accel: Vec3  # specific force, gravity included, body frame, m/s^2
    gyro: Vec3  # body angular rate, rad/s


AxisTerms = tuple[tuple[SinusoidTerm, ...], tuple[SinusoidTerm, ...], tuple[SinusoidTerm, ...]]


@dataclass(frozen=True)
class TrajectoryProfile:
    """Closed-form motion recipe plus session timing and seed."""

    position_terms: AxisTerms
    euler_rate_terms: AxisTerms  # roll, pitch, yaw rate sinusoids, rad/s
    duration_s: float = 30.0
    imu_rate_hz: float = 500.0
    slow_pose_rate_hz: float = 20.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not self.duration_s > 0.0:
            raise ValueError("duration must be positive")
        if not self.imu_rate_hz > self.slow_pose_rate_hz > 0.0:
            raise ValueError("need imu_rate > slow_pose_rate > 0")
        for axes in (self.position_terms, self.euler_rate_terms):
            for terms in axes:
                for term in terms:
                    if not all(map(math.isfinite, term)):
                        raise ValueError(f"non-finite sinusoid term {term}")

    def imu_samples_per_window(self) -> int:
        """Fast poses per slow-pose round; rates must divide evenly."""
        ratio = self.imu_rate_hz / self.slow_pose_rate_hz
        k = round(ratio)
        if abs(ratio - k) > 1e-9:
            raise ValueError("imu_rate must be an integer multiple of slow_pose_rate")
        return k

    def num_rounds(self) -> int:
        n_samples = int(round(self.duration_s * self.imu_rate_hz))
        return n_samples // self.imu_samples_per_window()


@dataclass(frozen=True)
class ImuNoiseModel:
    accel_noise_std: float = 0.02  # m/s^2, white, per sample
    gyro_noise_std: float = 0.002  # rad/s, white, per sample
    accel_bias: Vec3 = Vec3(0.0, 0.0, 0.0)
    gyro_bias: Vec3 = Vec3(0.0, 0.0, 0.0)
    bias_random_walk_std: float = 0.0  # per-sample walk increment std

    def __post_init__(self) -> None:
        if min(self.accel_noise_std, self.gyro_noise_std, self.bias_random_walk_std) < 0:
            raise ValueError("noise stds must be non-negative")


def _sum_terms(terms: Sequence[SinusoidTerm], t):
    """Value, first and second derivative of sum_i A sin(2 pi f t + ph)."""
    val = np.zeros_like(np.asarray(t, dtype=float))
    d1 = np.zeros_like(val)
    d2 = np.zeros_like(val)
    for amp, freq, ph in terms:
        w = 2.0 * math.pi * freq
        arg = w * np.asarray(t, dtype=float) + ph
        val = val + amp * np.sin(arg)
        d1 = d1 + amp * w * np.cos(arg)
        d2 = d2 - amp * w * w * np.sin(arg)
    return val, d1, d2


def _rate_and_angle(terms: Sequence[SinusoidTerm], t):
    """Rate sum_i A sin(2 pi f t + ph) and its exact integral from 0 (angle)."""
    tt = np.asarray(t, dtype=float)
    rate = np.zeros_like(tt)
    angle = np.zeros_like(tt)
    for amp, freq, ph in terms:
        w = 2.0 * math.pi * freq
        rate = rate + amp * np.sin(w * tt + ph)
        if freq == 0.0:
            angle = angle + amp * math.sin(ph) * tt
        else:
            angle = angle + (amp / w) * (math.cos(ph) - np.cos(w * tt + ph))
    return rate, angle


def _euler_arrays(profile: TrajectoryProfile, t):
    """(roll, pitch, yaw) angles and rates for scalar or array t."""
    angles = []
    rates = []
    for axis in range(3):
        rate, angle = _rate_and_angle(profile.euler_rate_terms[axis], t)
        angles.append(angle)
        rates.append(rate)
    return angles, rates


def _body_angular_velocity(angles, rates):
    """Body rates from ZYX Euler angles and their time derivatives."""
    roll, pitch, _ = angles
    droll, dpitch, dyaw = rates
    sr, cr = np.sin(roll), np.cos(roll)
    sp, cp = np.sin(pitch), np.cos(pitch)
    wx = droll - dyaw * sp
    wy = dpitch * cr + dyaw * cp * sr
    wz = dyaw * cp * cr - dpitch * sr
    return wx, wy, wz


def _quat_from_euler_zyx(roll: float, pitch: float, yaw: float) -> Quaternion:
    qz = Quaternion(math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2))
    qy = Quaternion(math.cos(pitch / 2), 0.0, math.sin(pitch / 2), 0.0)
    qx = Quaternion(math.cos(roll / 2), math.sin(roll / 2), 0.0, 0.0)
    return quat_multiply(quat_multiply(qz, qy), qx).normalized()


def ground_truth_at(
    profile: TrajectoryProfile, t: float
) -> tuple[Vec3, Vec3, Vec3, Quaternion, Vec3]:
    """Exact (position, velocity, acceleration, orientation, body angular rate) at t."""
    if not 0.0 <= t <= profile.duration_s:
        raise ValueError(f"t={t} outside session [0, {profile.duration_s}]")
    p, v, a = [], [], []
    for axis in range(3):
        val, d1, d2 = _sum_terms(profile.position_terms[axis], t)
        p.append(float(val))
        v.append(float(d1))
        a.append(float(d2))
    angles, rates = _euler_arrays(profile, t)
    wx, wy, wz = _body_angular_velocity(angles, rates)
    q = _quat_from_euler_zyx(float(angles[0]), float(angles[1]), float(angles[2]))
    return Vec3(*p), Vec3(*v), Vec3(*a), q, Vec3(float(wx), float(wy), float(wz))


def ground_truth_state(
    profile: TrajectoryProfile, t: float, noise: ImuNoiseModel, round_id: int = 0
) -> SlowPoseState:
    """True full state at t, with the noise model's biases as truth."""
    p, v, _, q, _ = ground_truth_at(profile, t)
    return SlowPoseState(
        timestamp=t,
        position=p,
        orientation=q,
        velocity=v,
        bias_acc=noise.accel_bias,
        bias_gyro=noise.gyro_bias,
        round_id=round_id,
    )


DEFAULT_ACCEL_BIAS_NORM = 0.02  # m/s^2
DEFAULT_GYRO_BIAS_NORM = 0.002  # rad/s


def _random_direction(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def default_noise_model(profile: TrajectoryProfile) -> ImuNoiseModel:
    """Noise model with biases derived deterministically from the profile seed.

    Both simulator ends derive the same model from the profile, so the
    emulated VIO can report the true biases without extra plumbing.  Bias
    magnitudes are fixed at typical MEMS values with a random direction:
    the norm is then the same for every session, so it cannot act as a
    per-session fingerprint, while bias-drift attacks still perturb it.
    """
    rng = np.random.default_rng([profile.rng_seed, _STREAM_BIAS])
    bias_acc = vec3_of(_random_direction(rng) * DEFAULT_ACCEL_BIAS_NORM)
    bias_gyro = vec3_of(_random_direction(rng) * DEFAULT_GYRO_BIAS_NORM)
    return ImuNoiseModel(accel_bias=bias_acc, gyro_bias=bias_gyro)


def synthesize_imu(profile: TrajectoryProfile, noise: ImuNoiseModel) -> list[ImuSample]:
    """Generate the session's IMU stream, deterministic per profile seed.

    gyro  = body angular rate + bias (+ walk) + white noise
    accel = R^T (a_world - g) + bias (+ walk) + white noise
    """
    n = int(round(profile.duration_s * profile.imu_rate_hz))
    dt = 1.0 / profile.imu_rate_hz
    stamps = (np.arange(1, n + 1)) * dt
    mids = stamps - 0.5 * dt

    accel_w = np.zeros((n, 3))
    for axis in range(3):
        _, _, d2 = _sum_terms(profile.position_terms[axis], mids)
        accel_w[:, axis] = d2

    angles, rates = _euler_arrays(profile, mids)
    wx, wy, wz = _body_angular_velocity(angles, rates)

    # world -> body rotation of (a_world - g): rows of R^T for ZYX Euler
    roll, pitch, yaw = angles
    sr, cr = np.sin(roll), np.cos(roll)
    sp, cp = np.sin(pitch), np.cos(pitch)
    sy, cy = np.sin(yaw), np.cos(yaw)
    u = accel_w - np.array([GRAVITY.x, GRAVITY.y, GRAVITY.z])
    ux, uy, uz = u[:, 0], u[:, 1], u[:, 2]
    fbx = cy * cp * ux + sy * cp * uy - sp * uz
    fby = (cy * sp * sr - sy * cr) * ux + (sy * sp * sr + cy * cr) * uy + cp * sr * uz
    fbz = (cy * sp * cr + sy * sr) * ux + (sy * sp * cr - cy * sr) * uy + cp * cr * uz

    rng = np.random.default_rng([profile.rng_seed, _STREAM_IMU])
    accel_noise = rng.standard_normal((n, 3)) * noise.accel_noise_std
    gyro_noise = rng.standard_normal((n, 3)) * noise.gyro_noise_std
    if noise.bias_random_walk_std > 0.0:
        acc_walk = np.cumsum(rng.standard_normal((n, 3)) * noise.bias_random_walk_std, axis=0)
        gyro_walk = np.cumsum(rng.standard_normal((n, 3)) * noise.bias_random_walk_std, axis=0)
    else:
        acc_walk = np.zeros((n, 3))
        gyro_walk = np.zeros((n, 3))

    ba, bg = noise.accel_bias, noise.gyro_bias
    samples = []
    for k in range(n):
        samples.append(
            ImuSample(
                timestamp=float(stamps[k]),
                accel=Vec3(
                    float(fbx[k] + ba.x + acc_walk[k, 0] + accel_noise[k, 0]),
                    float(fby[k] + ba.y + acc_walk[k, 1] + accel_noise[k, 1]),
                    float(fbz[k] + ba.z + acc_walk[k, 2] + accel_noise[k, 2]),
                ),
                gyro=Vec3(
                    float(wx[k] + bg.x + gyro_walk[k, 0] + gyro_noise[k, 0]),
                    float(wy[k] + bg.y + gyro_walk[k, 1] + gyro_noise[k, 1]),
                    float(wz[k] + bg.z + gyro_walk[k, 2] + gyro_noise[k, 2]),
                ),
            )
        )
    return samples


def random_profile(
    seed: int,
    duration_s: float = 30.0,
    imu_rate_hz: float = 500.0,
    slow_pose_rate_hz: float = 20.0,
    n_terms: int = 3,
    pos_amp_range: tuple[float, float] = (0.05, 0.35),
    freq_range: tuple[float, float] = (0.1, 0.8),
    euler_rate_amp_range: tuple[float, float] = (0.1, 0.5),
) -> TrajectoryProfile:
    """Draw a smooth random head-motion profile, deterministic per seed."""
    rng = np.random.default_rng([seed, _STREAM_PROFILE])

    def draw(amp_lo: float, amp_hi: float) -> AxisTerms:
        axes = []
        for _ in range(3):
            terms = tuple(
                SinusoidTerm(
                    amplitude=float(rng.uniform(amp_lo, amp_hi)),
                    frequency_hz=float(rng.uniform(*freq_range)),
                    phase_rad=float(rng.uniform(0.0, 2.0 * math.pi)),
                )
                for _ in range(n_terms)
            )
            axes.append(terms)
        return tuple(axes)  # type: ignore[return-value]

    return TrajectoryProfile(
        position_terms=draw(*pos_amp_range),
        euler_rate_terms=draw(*euler_rate_amp_range),
        duration_s=duration_s,
        imu_rate_hz=imu_rate_hz,
        slow_pose_rate_hz=slow_pose_rate_hz,
        rng_seed=seed,
    )


def static_profile(
    duration_s: float = 5.0,
    imu_rate_hz: float = 500.0,
    slow_pose_rate_hz: float = 20.0,
    rng_seed: int = 0,
) -> TrajectoryProfile:
    """Zero-motion profile: useful for closed-form checks."""
    empty: AxisTerms = ((), (), ())
    return TrajectoryProfile(
        position_terms=empty,
        euler_rate_terms=empty,
        duration_s=duration_s,
        imu_rate_hz=imu_rate_hz,
        slow_pose_rate_hz=slow_pose_rate_hz,
        rng_seed=rng_seed,
    )
