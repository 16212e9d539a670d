"""Experiment orchestration: clean-run generation, training, runs, sweeps, bench.

One integer seed per run drives every stochastic element (motion profile,
IMU noise, emulated VIO noise, attacker coin flips) through independent
sub-streams, so the paired clean reference for any attacked run is simply
the same seed with the attack probability set to zero.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .attacker import AttackConfig, default_configs
from .autoencoder import ModelBundle, TrainConfig, train
from .detector import Decision, VerdictClass
from .features import FEATURE_DIM
from .metrics import MetricReport, evaluate
from .modelfile import load_bundle, save_bundle
from .motion import TrajectoryProfile, random_profile
from .odometry import VioEmulatorConfig
from .offload import (
    InprocTransport,
    PoseSessionHandler,
    SessionResult,
    TcpPoseServer,
    TcpTransport,
    run_client,
)
from .sessionlog import load_session

NO_ATTACK = AttackConfig(p=0.0)


def run_session(
    profile: TrajectoryProfile,
    vio_cfg: VioEmulatorConfig,
    attack_cfg: AttackConfig,
    defense: str = "off",
    bundle: ModelBundle | None = None,
    transport: str = "inproc",
    connect: tuple[str, int] | None = None,
    log_path: str | Path | None = None,
) -> SessionResult:
    """Run one session over the chosen transport, spawning a local TCP
    server when none is given to connect to."""
    if transport == "inproc":
        chan = InprocTransport(PoseSessionHandler(vio_cfg, attack_cfg))
        try:
            return run_client(chan, profile, defense=defense, bundle=bundle, log_path=log_path)
        finally:
            chan.close()
    if transport != "tcp":
        raise ValueError(f"unknown transport {transport!r}")

    server = None
    if connect is None:
        server = TcpPoseServer(vio_cfg, attack_cfg).start()
        connect = server.address
    chan = TcpTransport(connect[0], connect[1])
    try:
        return run_client(chan, profile, defense=defense, bundle=bundle, log_path=log_path)
    finally:
        chan.close()
        if server is not None:
            server.stop()


def session_profile(
    seed: int,
    duration_s: float = 30.0,
    imu_rate_hz: float = 500.0,
    slow_pose_rate_hz: float = 20.0,
) -> TrajectoryProfile:
    return random_profile(
        seed, duration_s=duration_s, imu_rate_hz=imu_rate_hz, slow_pose_rate_hz=slow_pose_rate_hz
    )


def generate_clean_logs(
    out_dir: str | Path,
    n_runs: int = 100,
    base_seed: int = 1000,
    duration_s: float = 30.0,
    imu_rate_hz: float = 500.0,
    slow_pose_rate_hz: float = 20.0,
) -> list[Path]:
    """Clean training sessions: distinct motion profiles, no attack, no defense."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j in range(n_runs):
        seed = base_seed + j
        profile = session_profile(seed, duration_s, imu_rate_hz, slow_pose_rate_hz)
        path = out / f"clean_{seed:06d}.jsonl.gz"
        run_session(
            profile,
            VioEmulatorConfig(rng_seed=seed),
            NO_ATTACK,
            defense="off",
            log_path=path,
        )
        paths.append(path)
    return paths


def collect_features(log_paths: Iterable[str | Path]) -> np.ndarray:
    rows = []
    for path in log_paths:
        rows.append(load_session(path).feature_matrix())
    if not rows:
        raise ValueError("no logs given")
    mat = np.vstack(rows)
    if mat.shape[1] != FEATURE_DIM:
        raise ValueError(f"unexpected feature width {mat.shape[1]}")
    return mat


def train_from_logs(
    logs: Sequence[str | Path],
    bundle_path: str | Path | None = None,
    cfg: TrainConfig | None = None,
    verbose: bool = True,
) -> ModelBundle:
    features = collect_features(logs)
    bundle = train(features, cfg)
    if verbose:
        meta = bundle.metadata
        th = bundle.thresholds
        print(
            f"trained on {meta['n_train']} rows (val {meta['n_val']}): "
            f"PCA {meta['pca_d_out']} dims retaining {meta['pca_retained_ratio']:.4f} variance; "
            f"stopped after epoch {meta['epochs_run']} (best {meta['best_epoch']}); "
            f"thresholds soft={th.t_soft:.3e} hard={th.t_hard:.3e}"
        )
    if bundle_path is not None:
        save_bundle(bundle, bundle_path)
    return bundle


# -- single experiment cell ----------------------------------------------------


@dataclass
class CellResult:
    seed: int
    defense: str
    attack: AttackConfig
    result: SessionResult
    reference: SessionResult
    report: MetricReport

    @property
    def hard_fraction(self) -> float:
        v = self.result.data.verdicts_by_round
        if not v:
            return 0.0
        hard = sum(1 for x in v.values() if x.klass is VerdictClass.HARD_ANOMALY)
        return hard / len(v)

    @property
    def normal_fraction(self) -> float:
        v = self.result.data.verdicts_by_round
        if not v:
            return 0.0
        normal = sum(1 for x in v.values() if x.klass is VerdictClass.NORMAL)
        return normal / len(v)

    @property
    def force_passes(self) -> int:
        return sum(
            1
            for x in self.result.data.verdicts_by_round.values()
            if x.decision is Decision.FORCE_PASS
        )

    @property
    def spoofed_rounds(self) -> int:
        return sum(1 for r in self.result.data.spoof_records if r.was_spoofed)


def run_cell(
    seed: int,
    attack_cfg: AttackConfig,
    defense: str,
    bundle: ModelBundle | None,
    duration_s: float = 30.0,
    imu_rate_hz: float = 500.0,
    slow_pose_rate_hz: float = 20.0,
    transport: str = "inproc",
    connect: tuple[str, int] | None = None,
    log_dir: str | Path | None = None,
    reference: SessionResult | None = None,
) -> CellResult:
    """One attacked run plus its paired clean reference and metrics."""
    profile = session_profile(seed, duration_s, imu_rate_hz, slow_pose_rate_hz)
    vio_cfg = VioEmulatorConfig(rng_seed=seed)
    attack = AttackConfig(
        p=attack_cfg.p,
        bias_drift=attack_cfg.bias_drift,
        velocity_drift=attack_cfg.velocity_drift,
        position_drift=attack_cfg.position_drift,
        angle_drift=attack_cfg.angle_drift,
        rng_seed=seed,
        mode=attack_cfg.mode,
    )

    log_path = ref_path = None
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        tag = f"s{seed}_p{attack.p:g}_{defense}"
        log_path = log_dir / f"run_{tag}.jsonl.gz"
        ref_path = log_dir / f"ref_s{seed}.jsonl.gz"

    if reference is None:
        reference = run_session(
            profile, vio_cfg, NO_ATTACK, defense="off", transport=transport, log_path=ref_path
        )
    result = run_session(
        profile,
        vio_cfg,
        attack,
        defense=defense,
        bundle=bundle,
        transport=transport,
        connect=connect,
        log_path=log_path,
    )
    report = evaluate(result.data.trajectory(), reference.data.trajectory())
    return CellResult(
        seed=seed, defense=defense, attack=attack, result=result, reference=reference, report=report
    )


# -- sweep ----------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    spoof_rates: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75)
    attack_configs: tuple[AttackConfig, ...] = tuple(default_configs())
    defenses: tuple[str, ...] = ("off", "on", "passive")
    runs_per_cell: int = 10
    base_seed: int = 7000
    duration_s: float = 30.0
    imu_rate_hz: float = 500.0
    slow_pose_rate_hz: float = 20.0

    def __post_init__(self) -> None:
        if any(not 0.0 <= r <= 1.0 for r in self.spoof_rates):
            raise ValueError("spoof rates must lie in [0, 1]")


def _best(cells: list[CellResult]) -> CellResult:
    """Best-of-N selection: the run with minimum translation ATE."""
    return min(cells, key=lambda c: c.report.t_ate_cm)


def sweep(spec: ExperimentSpec, bundle: ModelBundle, out_dir: str | Path) -> dict[str, Any]:
    """Grid execution over spoof rates, defenses, and attack configs.

    Emits CSV tables (best-of-N per cell, every run retained) plus MSE
    histograms and per-bin time series for each scored cell.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base_attack = spec.attack_configs[0]
    all_rows: list[dict[str, Any]] = []
    rate_tables: dict[str, list[dict[str, Any]]] = {d: [] for d in spec.defenses}
    references: dict[int, SessionResult] = {}

    def cells_for(p: float, defense: str, attack: AttackConfig) -> list[CellResult]:
        cells = []
        for j in range(spec.runs_per_cell):
            seed = spec.base_seed + j
            cell = run_cell(
                seed,
                AttackConfig(
                    p=p,
                    bias_drift=attack.bias_drift,
                    velocity_drift=attack.velocity_drift,
                    position_drift=attack.position_drift,
                    angle_drift=attack.angle_drift,
                    mode=attack.mode,
                ),
                defense,
                bundle if defense != "off" else None,
                duration_s=spec.duration_s,
                imu_rate_hz=spec.imu_rate_hz,
                slow_pose_rate_hz=spec.slow_pose_rate_hz,
                reference=references.get(seed),
            )
            references[seed] = cell.reference
            cells.append(cell)
        return cells

    for defense in spec.defenses:
        for p in spec.spoof_rates:
            cells = cells_for(p, defense, base_attack)
            best = _best(cells)
            for c in cells:
                all_rows.append(_row(c, best is c, phase="rates", config_id=1))
            rate_tables[defense].append(
                {
                    "spoof_rate_pct": round(p * 100),
                    "t_ate_cm": best.report.t_ate_cm,
                    "r_ate_deg": best.report.r_ate_deg,
                    "t_rpe_cm": best.report.t_rpe_cm,
                    "r_rpe_deg": best.report.r_rpe_deg,
                }
            )
            if defense != "off":
                _write_mse_outputs(out, defense, p, best)

    config_rows = []
    for idx, attack in enumerate(spec.attack_configs, start=1):
        cells = cells_for(0.5, "on", attack)
        best = _best(cells)
        for c in cells:
            all_rows.append(_row(c, best is c, phase="configs", config_id=idx))
        config_rows.append(
            {
                "config": idx,
                "bias_drift": attack.bias_drift,
                "velocity_drift": attack.velocity_drift,
                "position_drift": attack.position_drift,
                "angle_drift": attack.angle_drift,
                "t_rpe_cm": best.report.t_rpe_cm,
                "r_rpe_deg": best.report.r_rpe_deg,
            }
        )

    _write_csv(out / "runs.csv", all_rows)
    for defense, rows in rate_tables.items():
        _write_csv(out / f"ate_rpe_{defense}.csv", rows)
    _write_csv(out / "attack_configs_rpe.csv", config_rows)
    return {
        "runs": all_rows,
        "rate_tables": rate_tables,
        "config_table": config_rows,
        "out_dir": str(out),
    }


def _row(c: CellResult, best: bool, phase: str, config_id: int) -> dict[str, Any]:
    return {
        "phase": phase,
        "defense": c.defense,
        "config": config_id,
        "spoof_rate": c.attack.p,
        "seed": c.seed,
        "t_ate_cm": c.report.t_ate_cm,
        "r_ate_deg": c.report.r_ate_deg,
        "t_rpe_cm": c.report.t_rpe_cm,
        "r_rpe_deg": c.report.r_rpe_deg,
        "hard_fraction": c.hard_fraction,
        "normal_fraction": c.normal_fraction,
        "force_passes": c.force_passes,
        "spoofed_rounds": c.spoofed_rounds,
        "best_of_cell": int(best),
    }


def _write_mse_outputs(out: Path, defense: str, p: float, cell: CellResult) -> None:
    scores = [cell.result.data.scores_by_round[r] for r in sorted(cell.result.data.scores_by_round)]
    if not scores:
        return
    arr = np.array(scores)
    counts, edges = np.histogram(arr, bins=100)
    hist_rows = [
        {"bin_lo": edges[i], "bin_hi": edges[i + 1], "count": int(counts[i])} for i in range(100)
    ]
    _write_csv(out / f"mse_hist_{defense}_p{round(p * 100)}.csv", hist_rows)

    bins = np.array_split(arr, min(100, len(arr)))
    series_rows = [{"bin": i, "mean_mse": float(b.mean())} for i, b in enumerate(bins)]
    _write_csv(out / f"mse_series_{defense}_p{round(p * 100)}.csv", series_rows)


def _write_csv(path: Path, rows: list[dict[str, Any]]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


# -- latency bench ----------------------------------------------------------------


def bench(
    bundle_path: str | Path,
    n_windows: int = 1040,
    seed: int = 4242,
    imu_rate_hz: float = 500.0,
    slow_pose_rate_hz: float = 20.0,
) -> dict[str, float]:
    """Per-stage latency over >= n_windows scored rounds, load timed once."""
    t0 = time.perf_counter()
    bundle = load_bundle(bundle_path)
    load_ms = (time.perf_counter() - t0) * 1e3

    duration = n_windows / slow_pose_rate_hz
    profile = session_profile(
        seed, duration_s=duration, imu_rate_hz=imu_rate_hz, slow_pose_rate_hz=slow_pose_rate_hz
    )
    result = run_session(
        profile, VioEmulatorConfig(rng_seed=seed), NO_ATTACK, defense="passive", bundle=bundle
    )
    stages = {
        "load_once_ms": load_ms,
        "features_ms": result.timings.mean_ms("features_ms"),
        "preprocess_ms": result.timings.mean_ms("preprocess_ms"),
        "inference_ms": result.timings.mean_ms("inference_ms"),
        "postprocess_ms": result.timings.mean_ms("postprocess_ms"),
    }
    stages["per_frame_total_ms"] = (
        stages["features_ms"]
        + stages["preprocess_ms"]
        + stages["inference_ms"]
        + stages["postprocess_ms"]
    )
    stages["windows"] = len(result.timings.rows)
    return stages
