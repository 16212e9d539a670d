"""Offline trajectory error metrics against a paired clean reference.

ATE is the RMSE of per-pose position distance (cm) and geodesic
orientation angle (deg).  RPE compares frame-to-frame relative motion, so
it ignores any constant global offset.  Estimate and reference share the
same world frame by construction, so — unlike most SLAM tooling — there
is deliberately NO Umeyama/SE(3) alignment step before ATE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import IDENTITY, FastPose, geodesic_angle, pose_delta, quat_multiply

MAX_PAIR_GAP_S = 0.002

M_TO_CM = 100.0
RAD_TO_DEG = 180.0 / math.pi


@dataclass(frozen=True)
class TrajectoryLog:
    """Timestamped pose stream at fast-pose rate."""

    poses: tuple[FastPose, ...]

    def __post_init__(self) -> None:
        ts = [p.timestamp for p in self.poses]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timestamps must strictly increase")


@dataclass(frozen=True)
class PairedSamples:
    est: tuple[FastPose, ...]
    ref: tuple[FastPose, ...]
    dropped_est: int
    dropped_ref: int

    def __len__(self) -> int:
        return len(self.est)


@dataclass
class MetricReport:
    t_ate_cm: float
    r_ate_deg: float
    t_rpe_cm: float
    r_rpe_deg: float
    n_pairs: int
    ate_series_cm: np.ndarray = field(default_factory=lambda: np.empty(0))
    rpe_series_deg: np.ndarray = field(default_factory=lambda: np.empty(0))
    smooth_windows: tuple[int, int] = (500, 2000)
    ate_series_smooth_cm: np.ndarray = field(default_factory=lambda: np.empty(0))
    rpe_series_smooth_deg: np.ndarray = field(default_factory=lambda: np.empty(0))


def align_pairs(
    est: TrajectoryLog, ref: TrajectoryLog, max_gap_s: float = MAX_PAIR_GAP_S
) -> PairedSamples:
    """Nearest-timestamp pairing; unpaired samples are dropped and counted."""
    if not est.poses or not ref.poses:
        raise ValueError("empty trajectory")
    if est.poses[-1].timestamp < ref.poses[0].timestamp - max_gap_s or ref.poses[
        -1
    ].timestamp < est.poses[0].timestamp - max_gap_s:
        raise ValueError("trajectories do not overlap in time")

    ref_ts = np.array([p.timestamp for p in ref.poses])
    pairs_est, pairs_ref = [], []
    used_ref: set[int] = set()
    for p in est.poses:
        j = int(np.searchsorted(ref_ts, p.timestamp))
        candidates = []
        for cand in (j - 1, j):
            if 0 <= cand < len(ref_ts):
                gap = abs(ref_ts[cand] - p.timestamp)
                if gap <= max_gap_s:
                    candidates.append((gap, cand))
        for _, cand in sorted(candidates):
            if cand not in used_ref:
                used_ref.add(cand)
                pairs_est.append(p)
                pairs_ref.append(ref.poses[cand])
                break
    if not pairs_est:
        raise ValueError("no samples pair within the gap tolerance")
    return PairedSamples(
        est=tuple(pairs_est),
        ref=tuple(pairs_ref),
        dropped_est=len(est.poses) - len(pairs_est),
        dropped_ref=len(ref.poses) - len(pairs_ref),
    )


def _position_errors_m(pairs: PairedSamples) -> np.ndarray:
    pe = np.array([p.position for p in pairs.est])
    pr = np.array([p.position for p in pairs.ref])
    return np.linalg.norm(pe - pr, axis=1)


def _angle_errors_rad(pairs: PairedSamples) -> np.ndarray:
    return np.array(
        [geodesic_angle(a.orientation, b.orientation) for a, b in zip(pairs.est, pairs.ref)]
    )


def compute_ate(pairs: PairedSamples) -> tuple[float, float]:
    """(translation RMSE in cm, rotation RMSE in deg) over paired poses."""
    if len(pairs) < 1:
        raise ValueError("need at least one pair")
    terr = _position_errors_m(pairs)
    rerr = _angle_errors_rad(pairs)
    t_ate = math.sqrt(float(np.mean(terr**2))) * M_TO_CM
    r_ate = math.sqrt(float(np.mean(rerr**2))) * RAD_TO_DEG
    return t_ate, r_ate


def compute_rpe(pairs: PairedSamples) -> tuple[float, float]:
    """(translation RMSE in cm, rotation RMSE in deg) of per-step deltas."""
    if len(pairs) < 2:
        raise ValueError("need at least two pairs")
    t_sq = []
    r_sq = []
    for k in range(len(pairs) - 1):
        dp_e, dq_e = pose_delta(pairs.est[k], pairs.est[k + 1])
        dp_r, dq_r = pose_delta(pairs.ref[k], pairs.ref[k + 1])
        dd = np.asarray(dp_e) - np.asarray(dp_r)
        t_sq.append(float(dd @ dd))
        ang = geodesic_angle(quat_multiply(dq_r.conjugate(), dq_e).normalized(), IDENTITY)
        r_sq.append(ang * ang)
    t_rpe = math.sqrt(float(np.mean(t_sq))) * M_TO_CM
    r_rpe = math.sqrt(float(np.mean(r_sq))) * RAD_TO_DEG
    return t_rpe, r_rpe


def smooth_series(series: np.ndarray, window_frames: int) -> np.ndarray:
    """Centered moving average with edges truncated to available support."""
    if window_frames < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0 or window_frames == 1:
        return x.copy()
    half_lo = (window_frames - 1) // 2
    half_hi = window_frames - 1 - half_lo
    csum = np.concatenate([[0.0], np.cumsum(x)])
    n = x.size
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half_lo)
        hi = min(n, i + half_hi + 1)
        out[i] = (csum[hi] - csum[lo]) / (hi - lo)
    return out


def report_to_csv(report: MetricReport, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ate_cm", "r_ate_deg", "t_rpe_cm", "r_rpe_deg", "n_pairs"])
        w.writerow(
            [report.t_ate_cm, report.r_ate_deg, report.t_rpe_cm, report.r_rpe_deg, report.n_pairs]
        )


def series_to_csv(report: MetricReport, path) -> None:
    """Per-frame raw and smoothed error series, for external plotting."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "t_ate_cm", "t_ate_smooth_cm", "r_rpe_deg", "r_rpe_smooth_deg"])
        n = len(report.ate_series_cm)
        for i in range(n):
            rpe = report.rpe_series_deg[i] if i < len(report.rpe_series_deg) else ""
            rpe_s = (
                report.rpe_series_smooth_deg[i] if i < len(report.rpe_series_smooth_deg) else ""
            )
            w.writerow([i, report.ate_series_cm[i], report.ate_series_smooth_cm[i], rpe, rpe_s])


def evaluate(
    est: TrajectoryLog,
    ref: TrajectoryLog,
    smooth_windows: tuple[int, int] = (500, 2000),
) -> MetricReport:
    """Full report: scalar ATE/RPE plus raw and smoothed error series."""
    pairs = align_pairs(est, ref)
    t_ate, r_ate = compute_ate(pairs)
    t_rpe, r_rpe = compute_rpe(pairs)

    ate_series = _position_errors_m(pairs) * M_TO_CM
    rpe_series = np.empty(max(0, len(pairs) - 1))
    for k in range(len(pairs) - 1):
        _, dq_e = pose_delta(pairs.est[k], pairs.est[k + 1])
        _, dq_r = pose_delta(pairs.ref[k], pairs.ref[k + 1])
        rpe_series[k] = (
            geodesic_angle(quat_multiply(dq_r.conjugate(), dq_e).normalized(), IDENTITY)
            * RAD_TO_DEG
        )

    w_ate, w_rpe = smooth_windows
    return MetricReport(
        t_ate_cm=t_ate,
        r_ate_deg=r_ate,
        t_rpe_cm=t_rpe,
        r_rpe_deg=r_rpe,
        n_pairs=len(pairs),
        ate_series_cm=ate_series,
        rpe_series_deg=rpe_series,
        smooth_windows=smooth_windows,
        ate_series_smooth_cm=smooth_series(ate_series, min(w_ate, max(1, len(pairs)))),
        rpe_series_smooth_deg=smooth_series(rpe_series, min(w_rpe, max(1, len(pairs) - 1)))
        if len(pairs) > 1
        else np.empty(0),
    )
