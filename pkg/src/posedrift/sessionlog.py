"""Self-describing, replayable session logs.

One JSON object per line; the first line is a header carrying the
format version, the motion profile, and the client settings.  Every
float survives a JSON round trip bit-exactly (shortest-repr encoding),
so re-running detection over a log reproduces scores and verdicts
bit-for-bit — that replayability backs every paired comparison in the
evaluation harness.

Logs are deterministic: two runs with identical seeds produce identical
bytes, and `.gz` logs are written with a zeroed gzip timestamp so the
compressed files compare equal too.  Wall-clock stage timings therefore
live in a sidecar CSV, never in the log itself.

Record types: header, anchor, imu, fast, slow, features, score, verdict,
lost, spoof, end.
"""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Iterator

import numpy as np

from .attacker import SpoofRecord
from .detector import Decision, Verdict, VerdictClass
from .geometry import FastPose, Quaternion, SlowPoseState, Vec3
from .metrics import TrajectoryLog
from .motion import ImuSample, SinusoidTerm, TrajectoryProfile

FORMAT_NAME = "posedrift-session"
FORMAT_VERSION = 1


def _dump(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def profile_to_json(profile: TrajectoryProfile) -> dict[str, Any]:
    return {
        "duration_s": profile.duration_s,
        "imu_rate_hz": profile.imu_rate_hz,
        "slow_pose_rate_hz": profile.slow_pose_rate_hz,
        "rng_seed": profile.rng_seed,
        "position_terms": [[list(t) for t in axis] for axis in profile.position_terms],
        "euler_rate_terms": [[list(t) for t in axis] for axis in profile.euler_rate_terms],
    }


def profile_from_json(obj: dict[str, Any]) -> TrajectoryProfile:
    def terms(key: str):
        return tuple(
            tuple(SinusoidTerm(*t) for t in axis) for axis in obj[key]
        )

    return TrajectoryProfile(
        position_terms=terms("position_terms"),
        euler_rate_terms=terms("euler_rate_terms"),
        duration_s=obj["duration_s"],
        imu_rate_hz=obj["imu_rate_hz"],
        slow_pose_rate_hz=obj["slow_pose_rate_hz"],
        rng_seed=obj["rng_seed"],
    )


def _state_to_json(s: SlowPoseState) -> dict[str, Any]:
    return {
        "t": s.timestamp,
        "p": list(s.position),
        "q": list(s.orientation),
        "v": list(s.velocity),
        "ba": list(s.bias_acc),
        "bg": list(s.bias_gyro),
        "round": s.round_id,
    }


def _state_from_json(o: dict[str, Any]) -> SlowPoseState:
    return SlowPoseState(
        timestamp=o["t"],
        position=Vec3(*o["p"]),
        orientation=Quaternion(*o["q"]),
        velocity=Vec3(*o["v"]),
        bias_acc=Vec3(*o["ba"]),
        bias_gyro=Vec3(*o["bg"]),
        round_id=o["round"],
    )


class SessionLogWriter:
    """Streams records to a (optionally gzipped) JSONL file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh: IO[bytes]
        if self.path.suffix == ".gz":
            # fixed mtime keeps identical sessions byte-identical on disk
            self._fh = gzip.GzipFile(filename="", mode="wb", fileobj=open(self.path, "wb"), mtime=0)
        else:
            self._fh = open(self.path, "wb")

    def write(self, record: dict[str, Any]) -> None:
        self._fh.write((_dump(record) + "\n").encode())

    def header(
        self,
        profile: TrajectoryProfile,
        defense: str,
        initial_anchor: SlowPoseState,
        force_pass_limit: int,
        extra: dict[str, Any] | None = None,
    ) -> None:
        rec = {
            "type": "header",
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "profile": profile_to_json(profile),
            "defense": defense,
            "force_pass_limit": force_pass_limit,
            "anchor0": _state_to_json(initial_anchor),
        }
        if extra:
            rec.update(extra)
        self.write(rec)

    def imu(self, s: ImuSample) -> None:
        self.write({"type": "imu", "t": s.timestamp, "a": list(s.accel), "g": list(s.gyro)})

    def anchor(self, round_id: int, state: SlowPoseState) -> None:
        self.write({"type": "anchor", "round": round_id, "state": _state_to_json(state)})

    def fast(self, round_id: int, pose: FastPose) -> None:
        self.write(
            {
                "type": "fast",
                "round": round_id,
                "t": pose.timestamp,
                "p": list(pose.position),
                "q": list(pose.orientation),
                "v": list(pose.velocity),
            }
        )

    def slow(self, round_id: int, state: SlowPoseState) -> None:
        self.write({"type": "slow", "round": round_id, "state": _state_to_json(state)})

    def features(self, round_id: int, x: np.ndarray) -> None:
        self.write({"type": "features", "round": round_id, "x": [float(v) for v in x]})

    def score(self, round_id: int, mse: float) -> None:
        self.write({"type": "score", "round": round_id, "mse": mse})

    def verdict(self, round_id: int, v: Verdict) -> None:
        self.write(
            {
                "type": "verdict",
                "round": round_id,
                "class": v.klass.value,
                "decision": v.decision.value,
                "mse": v.mse,
                "streak": v.hard_streak_after,
            }
        )

    def lost(self, round_id: int) -> None:
        self.write({"type": "lost", "round": round_id})

    def spoof(self, rec: SpoofRecord) -> None:
        self.write(
            {
                "type": "spoof",
                "round": rec.round_id,
                "spoofed": rec.was_spoofed,
                "dp": list(rec.delta_position),
                "drv": list(rec.delta_rotvec),
                "dv": list(rec.delta_velocity),
                "dba": list(rec.delta_bias_acc),
                "dbg": list(rec.delta_bias_gyro),
            }
        )

    def end(self, rounds: int) -> None:
        self.write({"type": "end", "rounds": rounds})

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "SessionLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_records(path: str | Path) -> Iterator[dict[str, Any]]:
    p = Path(path)
    opener = gzip.open if p.suffix == ".gz" else open
    with opener(p, "rt") as fh:  # type: ignore[operator]
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


@dataclass
class SessionData:
    """Parsed session log with typed access per record family."""

    header: dict[str, Any]
    profile: TrajectoryProfile
    defense: str
    initial_anchor: SlowPoseState
    imu: list[ImuSample] = field(default_factory=list)
    anchors: dict[int, SlowPoseState] = field(default_factory=dict)
    fast_by_round: dict[int, list[FastPose]] = field(default_factory=dict)
    slow_by_round: dict[int, SlowPoseState] = field(default_factory=dict)
    features_by_round: dict[int, np.ndarray] = field(default_factory=dict)
    scores_by_round: dict[int, float] = field(default_factory=dict)
    verdicts_by_round: dict[int, Verdict] = field(default_factory=dict)
    lost_rounds: list[int] = field(default_factory=list)
    spoof_records: list[SpoofRecord] = field(default_factory=list)
    rounds: int = 0

    def trajectory(self) -> TrajectoryLog:
        poses = []
        for rid in sorted(self.fast_by_round):
            poses.extend(self.fast_by_round[rid])
        return TrajectoryLog(poses=tuple(poses))

    def feature_matrix(self) -> np.ndarray:
        rounds = sorted(self.features_by_round)
        return np.array([self.features_by_round[r] for r in rounds])


def load_session(path: str | Path) -> SessionData:
    records = iter_records(path)
    header = next(records)
    if header.get("type") != "header" or header.get("format") != FORMAT_NAME:
        raise ValueError(f"{path} is not a session log")
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported session log version {header.get('version')}")

    data = SessionData(
        header=header,
        profile=profile_from_json(header["profile"]),
        defense=header["defense"],
        initial_anchor=_state_from_json(header["anchor0"]),
    )
    for rec in records:
        kind = rec["type"]
        if kind == "imu":
            data.imu.append(ImuSample(rec["t"], Vec3(*rec["a"]), Vec3(*rec["g"])))
        elif kind == "anchor":
            data.anchors[rec["round"]] = _state_from_json(rec["state"])
        elif kind == "fast":
            data.fast_by_round.setdefault(rec["round"], []).append(
                FastPose(rec["t"], Vec3(*rec["p"]), Quaternion(*rec["q"]), Vec3(*rec["v"]))
            )
        elif kind == "slow":
            data.slow_by_round[rec["round"]] = _state_from_json(rec["state"])
        elif kind == "features":
            data.features_by_round[rec["round"]] = np.array(rec["x"])
        elif kind == "score":
            data.scores_by_round[rec["round"]] = rec["mse"]
        elif kind == "verdict":
            data.verdicts_by_round[rec["round"]] = Verdict(
                klass=VerdictClass(rec["class"]),
                decision=Decision(rec["decision"]),
                mse=rec["mse"],
                hard_streak_after=rec["streak"],
            )
        elif kind == "lost":
            data.lost_rounds.append(rec["round"])
        elif kind == "spoof":
            data.spoof_records.append(
                SpoofRecord(
                    round_id=rec["round"],
                    was_spoofed=rec["spoofed"],
                    delta_position=Vec3(*rec["dp"]),
                    delta_rotvec=Vec3(*rec["drv"]),
                    delta_velocity=Vec3(*rec["dv"]),
                    delta_bias_acc=Vec3(*rec["dba"]),
                    delta_bias_gyro=Vec3(*rec["dbg"]),
                )
            )
        elif kind == "end":
            data.rounds = rec["rounds"]
    return data


def replay_detection(data: SessionData, bundle) -> list[tuple[int, float, Verdict]]:
    """Re-run feature extraction, scoring, and classification over a log.

    Windows are rebuilt from the logged anchors, fast poses, and IMU
    samples; the result must match the logged scores and verdicts
    bit-exactly for any log produced with the same bundle.
    """
    from .autoencoder import score as score_reduced
    from .detector import PolicyState, classify
    from .features import extract
    from .odometry import FastPoseWindow
    from .preprocess import transform

    k = data.profile.imu_samples_per_window()
    prev_accepted = data.initial_anchor
    state = PolicyState(force_pass_limit=data.header.get("force_pass_limit", 12))
    out = []
    for rid in sorted(data.slow_by_round):
        anchor = data.anchors[rid]
        window = FastPoseWindow(
            window_index=rid,
            anchor=anchor,
            poses=tuple(data.fast_by_round[rid]),
            imu=tuple(data.imu[(rid - 1) * k : rid * k]),
        )
        incoming = data.slow_by_round[rid]
        x = extract(window, incoming, prev_accepted)
        mse = score_reduced(transform(x, bundle.scaler, bundle.pca), bundle)
        verdict, state = classify(mse, bundle.thresholds, state)
        out.append((rid, mse, verdict))
        # in passive (and off) modes every pose is forwarded, so the
        # feature baseline advances each round regardless of the verdict
        if data.defense != "on" or verdict.accepted:
            prev_accepted = incoming
    return out
