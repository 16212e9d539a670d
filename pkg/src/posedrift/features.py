"""Fixed-order feature vector built per incoming slow pose.

The 41-entry schema below is the frozen contract between extraction,
preprocessing, and the model bundle (its hash is embedded in saved
bundles and checked at load).  Residuals compare the window's fast poses
against the *incoming* (possibly spoofed) slow pose; everything the
window itself contributes was computed before that pose arrived, so the
window content cannot be contaminated by the current round's attack.

Index map
  0      K, fast-pose count in the window
  1      window duration, s (last fast pose minus anchor time)
  2-6    position residual ||p_f - p_s||     mean, std, min, max, l1-sum   (m)
  7-11   velocity residual ||v_f - v_s||     mean, std, min, max, l1-sum   (m/s)
  12-16  orientation geodesic angle(q_f,q_s) mean, std, min, max, sum      (rad)
  17-20  ||b_acc||, ||b_gyro||, ||db_acc||, ||db_gyro|| vs prev accepted
  21-24  IMU accel norm  mean, std, min, max                               (m/s^2)
  25-28  IMU gyro norm   mean, std, min, max                               (rad/s)
  29-34  accel axis-wise mean x,y,z then std x,y,z
  35-40  gyro  axis-wise mean x,y,z then std x,y,z

Stats use population std (K in the denominator): a single-sample window
yields std 0 instead of a singularity.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .geometry import SlowPoseState, geodesic_angle
from .odometry import FastPoseWindow

FEATURE_NAMES: tuple[str, ...] = (
    "window_count",
    "window_duration_s",
    "pos_residual_mean_m",
    "pos_residual_std_m",
    "pos_residual_min_m",
    "pos_residual_max_m",
    "pos_residual_l1sum_m",
    "vel_residual_mean_mps",
    "vel_residual_std_mps",
    "vel_residual_min_mps",
    "vel_residual_max_mps",
    "vel_residual_l1sum_mps",
    "ori_error_mean_rad",
    "ori_error_std_rad",
    "ori_error_min_rad",
    "ori_error_max_rad",
    "ori_error_sum_rad",
    "bias_acc_norm",
    "bias_gyro_norm",
    "bias_acc_delta_norm",
    "bias_gyro_delta_norm",
    "accel_norm_mean",
    "accel_norm_std",
    "accel_norm_min",
    "accel_norm_max",
    "gyro_norm_mean",
    "gyro_norm_std",
    "gyro_norm_min",
    "gyro_norm_max",
    "accel_mean_x",
    "accel_mean_y",
    "accel_mean_z",
    "accel_std_x",
    "accel_std_y",
    "accel_std_z",
    "gyro_mean_x",
    "gyro_mean_y",
    "gyro_mean_z",
    "gyro_std_x",
    "gyro_std_y",
    "gyro_std_z",
)

FEATURE_DIM = len(FEATURE_NAMES)
assert FEATURE_DIM == 41


def schema_hash() -> str:
    """Hash of the feature schema, embedded in model bundles."""
    payload = json.dumps({"version": 1, "names": FEATURE_NAMES}).encode()
    return hashlib.sha256(payload).hexdigest()


class DegenerateWindowError(ValueError):
    """Raised for windows with no fast poses; the policy fails closed."""


def _five_stats(values: np.ndarray) -> list[float]:
    return [
        float(values.mean()),
        float(values.std()),  # population std
        float(values.min()),
        float(values.max()),
        float(values.sum()),
    ]


def extract(
    window: FastPoseWindow, incoming: SlowPoseState, prev_accepted: SlowPoseState
) -> np.ndarray:
    """Build the 41-entry feature vector for one round.

    The window must lie inside (prev_accepted.timestamp, incoming.timestamp].
    """
    if window.degenerate:
        raise DegenerateWindowError(f"window {window.window_index} has no fast poses")

    poses = window.poses
    k = len(poses)
    duration = poses[-1].timestamp - window.anchor.timestamp

    pos_f = np.array([p.position for p in poses])
    vel_f = np.array([p.velocity for p in poses])
    pos_res = np.linalg.norm(pos_f - np.asarray(incoming.position), axis=1)
    vel_res = np.linalg.norm(vel_f - np.asarray(incoming.velocity), axis=1)
    ori_err = np.array([geodesic_angle(p.orientation, incoming.orientation) for p in poses])

    b_acc = np.asarray(incoming.bias_acc)
    b_gyro = np.asarray(incoming.bias_gyro)
    db_acc = b_acc - np.asarray(prev_accepted.bias_acc)
    db_gyro = b_gyro - np.asarray(prev_accepted.bias_gyro)

    accel = np.array([s.accel for s in window.imu])
    gyro = np.array([s.gyro for s in window.imu])
    accel_norm = np.linalg.norm(accel, axis=1)
    gyro_norm = np.linalg.norm(gyro, axis=1)

    out = np.empty(FEATURE_DIM)
    out[0] = float(k)
    out[1] = duration
    out[2:7] = _five_stats(pos_res)
    out[7:12] = _five_stats(vel_res)
    out[12:17] = _five_stats(ori_err)
    out[17] = float(np.linalg.norm(b_acc))
    out[18] = float(np.linalg.norm(b_gyro))
    out[19] = float(np.linalg.norm(db_acc))
    out[20] = float(np.linalg.norm(db_gyro))
    out[21:25] = _five_stats(accel_norm)[:4]
    out[25:29] = _five_stats(gyro_norm)[:4]
    out[29:32] = accel.mean(axis=0)
    out[32:35] = accel.std(axis=0)
    out[35:38] = gyro.mean(axis=0)
    out[38:41] = gyro.std(axis=0)

    if not np.all(np.isfinite(out)):
        bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(out))]
        raise ValueError(f"non-finite features: {bad}")
    return out
