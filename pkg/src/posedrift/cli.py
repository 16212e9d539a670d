"""Command-line entry point.

Subcommands: gen-clean, train, run, sweep, eval, bench, serve.

Attack settings layer as CLI flags > --config JSON file > the
ILLIXR_VIO_SPOOF_* environment variables > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attacker import AttackConfig, default_configs, resolve_attack_config
from .autoencoder import TrainConfig
from .harness import (
    ExperimentSpec,
    bench,
    generate_clean_logs,
    run_cell,
    sweep,
    train_from_logs,
)
from .metrics import evaluate, report_to_csv, series_to_csv
from .modelfile import load_bundle
from .odometry import VioEmulatorConfig
from .offload import TcpPoseServer
from .sessionlog import load_session


def _add_rates(p: argparse.ArgumentParser) -> None:
    p.add_argument("--duration", type=float, default=30.0, help="session length, seconds")
    p.add_argument("--imu-rate", type=float, default=500.0, help="IMU rate, Hz")
    p.add_argument("--slow-rate", type=float, default=20.0, help="slow-pose rate, Hz")


def _attack_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=float, default=None, help="spoof probability")
    p.add_argument("--bias-drift", type=float, default=None)
    p.add_argument("--velocity-drift", type=float, default=None)
    p.add_argument("--position-drift", type=float, default=None)
    p.add_argument("--angle-drift", type=float, default=None)
    p.add_argument("--attack-mode", choices=["per-round", "cumulative"], default=None)
    p.add_argument("--attack-config", type=int, choices=[1, 2, 3, 4], default=None,
                   help="preset drift magnitudes (1=mild .. 4=aggressive)")
    p.add_argument("--config", type=Path, default=None, help="JSON config file")


def _resolve_attack(args: argparse.Namespace) -> AttackConfig:
    base = AttackConfig()
    if args.attack_config is not None:
        base = default_configs()[args.attack_config - 1]
    file_cfg = None
    if args.config is not None:
        file_cfg = json.loads(args.config.read_text()).get("attack", {})
    cli = {
        "p": args.p,
        "bias_drift": args.bias_drift,
        "velocity_drift": args.velocity_drift,
        "position_drift": args.position_drift,
        "angle_drift": args.angle_drift,
        "mode": args.attack_mode,
    }
    return resolve_attack_config(cli=cli, config_file=file_cfg, base=base)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="posedrift")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-clean", help="generate clean training sessions")
    p_gen.add_argument("--out", type=Path, required=True)
    p_gen.add_argument("--runs", type=int, default=100)
    p_gen.add_argument("--seed", type=int, default=1000)
    _add_rates(p_gen)

    p_train = sub.add_parser("train", help="fit scaler/PCA, train the autoencoder, calibrate")
    p_train.add_argument("--logs", type=Path, required=True, help="directory of clean logs")
    p_train.add_argument("--out", type=Path, required=True, help="bundle file to write")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--max-epochs", type=int, default=500)
    p_train.add_argument("--batch", type=int, default=64)
    p_train.add_argument("--lr", type=float, default=1e-3)

    p_run = sub.add_parser("run", help="run one attacked session and evaluate it")
    p_run.add_argument("--bundle", type=Path, default=None)
    p_run.add_argument("--defense", choices=["on", "off", "passive"], default="off")
    p_run.add_argument("--seed", type=int, default=1)
    p_run.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    p_run.add_argument("--connect", default=None, help="host:port of a running server")
    p_run.add_argument("--logs", type=Path, default=None, help="directory for session logs")
    p_run.add_argument("--report", type=Path, default=None, help="metric report CSV")
    p_run.add_argument("--series", type=Path, default=None, help="per-frame series CSV")
    _add_rates(p_run)
    _attack_args(p_run)

    p_sweep = sub.add_parser("sweep", help="full experiment grid, CSV outputs")
    p_sweep.add_argument("--bundle", type=Path, required=True)
    p_sweep.add_argument("--out", type=Path, required=True)
    p_sweep.add_argument("--rates", default="0,0.25,0.5,0.75")
    p_sweep.add_argument("--defenses", default="off,on,passive")
    p_sweep.add_argument("--runs-per-cell", type=int, default=10)
    p_sweep.add_argument("--seed", type=int, default=7000)
    _add_rates(p_sweep)

    p_eval = sub.add_parser("eval", help="offline ATE/RPE between two session logs")
    p_eval.add_argument("--est", type=Path, required=True)
    p_eval.add_argument("--ref", type=Path, required=True)
    p_eval.add_argument("--report", type=Path, default=None)
    p_eval.add_argument("--series", type=Path, default=None)

    p_bench = sub.add_parser("bench", help="per-stage detection latency")
    p_bench.add_argument("--bundle", type=Path, required=True)
    p_bench.add_argument("--windows", type=int, default=1040)
    p_bench.add_argument("--seed", type=int, default=4242)

    p_serve = sub.add_parser("serve", help="stand-alone TCP pose server")
    p_serve.add_argument("--bind", default="127.0.0.1:0", help="host:port to listen on")
    p_serve.add_argument("--vio-seed", type=int, default=0)
    _attack_args(p_serve)

    args = parser.parse_args(argv)

    if args.command == "gen-clean":
        paths = generate_clean_logs(
            args.out,
            n_runs=args.runs,
            base_seed=args.seed,
            duration_s=args.duration,
            imu_rate_hz=args.imu_rate,
            slow_pose_rate_hz=args.slow_rate,
        )
        print(f"wrote {len(paths)} clean session logs to {args.out}")
        return 0

    if args.command == "train":
        logs = sorted(list(args.logs.glob("*.jsonl")) + list(args.logs.glob("*.jsonl.gz")))
        if not logs:
            print(f"no session logs under {args.logs}", file=sys.stderr)
            return 2
        cfg = TrainConfig(
            rng_seed=args.seed,
            max_epochs=args.max_epochs,
            batch_size=args.batch,
            learning_rate=args.lr,
        )
        train_from_logs(logs, bundle_path=args.out, cfg=cfg)
        print(f"bundle written to {args.out}")
        return 0

    if args.command == "run":
        bundle = load_bundle(args.bundle) if args.bundle else None
        attack = _resolve_attack(args)
        connect = None
        if args.connect:
            host, _, port = args.connect.partition(":")
            connect = (host, int(port))
        cell = run_cell(
            args.seed,
            attack,
            args.defense,
            bundle,
            duration_s=args.duration,
            imu_rate_hz=args.imu_rate,
            slow_pose_rate_hz=args.slow_rate,
            transport=args.transport,
            connect=connect,
            log_dir=args.logs,
        )
        r = cell.report
        print(
            f"seed {cell.seed} defense={cell.defense} p={attack.p:g}: "
            f"T-ATE {r.t_ate_cm:.3f} cm, R-ATE {r.r_ate_deg:.3f} deg, "
            f"T-RPE {r.t_rpe_cm:.3f} cm, R-RPE {r.r_rpe_deg:.4f} deg"
        )
        if cell.result.data.verdicts_by_round:
            print(
                f"verdicts: normal {cell.normal_fraction:.1%}, hard {cell.hard_fraction:.1%}, "
                f"force passes {cell.force_passes}"
            )
        if args.report:
            report_to_csv(r, args.report)
        if args.series:
            series_to_csv(r, args.series)
        return 0

    if args.command == "sweep":
        bundle = load_bundle(args.bundle)
        spec = ExperimentSpec(
            spoof_rates=tuple(float(x) for x in args.rates.split(",")),
            defenses=tuple(args.defenses.split(",")),
            runs_per_cell=args.runs_per_cell,
            base_seed=args.seed,
            duration_s=args.duration,
            imu_rate_hz=args.imu_rate,
            slow_pose_rate_hz=args.slow_rate,
        )
        summary = sweep(spec, bundle, args.out)
        print(f"sweep complete: {len(summary['runs'])} runs, tables under {summary['out_dir']}")
        return 0

    if args.command == "eval":
        est = load_session(args.est).trajectory()
        ref = load_session(args.ref).trajectory()
        report = evaluate(est, ref)
        print(
            f"T-ATE {report.t_ate_cm:.3f} cm, R-ATE {report.r_ate_deg:.3f} deg, "
            f"T-RPE {report.t_rpe_cm:.3f} cm, R-RPE {report.r_rpe_deg:.4f} deg "
            f"({report.n_pairs} pairs)"
        )
        if args.report:
            report_to_csv(report, args.report)
        if args.series:
            series_to_csv(report, args.series)
        return 0

    if args.command == "bench":
        stages = bench(args.bundle, n_windows=args.windows, seed=args.seed)
        print(f"model + scaler load (once): {stages['load_once_ms']:.2f} ms")
        for name in ("features_ms", "preprocess_ms", "inference_ms", "postprocess_ms"):
            label = name.removesuffix("_ms").replace("_", " ")
            print(f"{label:<22}: {stages[name]:.3f} ms")
        print(
            f"per-frame total: {stages['per_frame_total_ms']:.3f} ms "
            f"over {int(stages['windows'])} windows"
        )
        return 0

    if args.command == "serve":
        host, _, port = args.bind.partition(":")
        attack = _resolve_attack(args)
        server = TcpPoseServer(
            VioEmulatorConfig(rng_seed=args.vio_seed), attack, host=host, port=int(port or 0)
        ).start()
        print(f"serving on {server.address[0]}:{server.address[1]} (ctrl-c to stop)")
        try:
            import time as _time

            while True:
                _time.sleep(1.0)
        except KeyboardInterrupt:
            summaries = server.stop()
            print(f"stopped after {len(summaries)} session(s)")
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
