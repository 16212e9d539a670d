"""Client/server offload loop over in-process or TCP transport.

Both transports move the exact same encoded frames in lockstep (one
request, one reply), so a session's log is a pure function of its seeds:
running in-process or across sockets yields byte-identical logs.

The server answers each sensor batch with an emulated slow pose for the
batch's end timestamp, routed through the attacker.  The client
dead-reckons fast poses while "waiting", scores each reply when the
defense is active, and re-anchors according to the verdict.  Per-round
losses (reply timeouts) leave the client dead-reckoning.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .attacker import AttackConfig, Attacker, SpoofRecord
from .autoencoder import ModelBundle, score as score_reduced
from .detector import PolicyState, Verdict, classify
from .features import DegenerateWindowError, extract
from .geometry import SlowPoseState
from .motion import ImuNoiseModel, TrajectoryProfile, default_noise_model, ground_truth_state, synthesize_imu
from .odometry import VioEmulatorConfig, emulate_slow_pose, integrate_fast_poses, reanchor
from .preprocess import transform
from .sessionlog import SessionData, SessionLogWriter, profile_to_json, _state_to_json
from .wire import (
    FrameReader,
    Message,
    SensorBatch,
    SessionEnd,
    SessionStart,
    SlowPoseMsg,
    WireError,
    decode,
    encode,
)

DEFENSE_MODES = ("off", "on", "passive")
DEFAULT_TIMEOUT_S = 1.0


class TransportTimeout(Exception):
    pass


class ProtocolError(Exception):
    pass


# -- server ------------------------------------------------------------------


class PoseSessionHandler:
    """Server-side state for one client session."""

    def __init__(self, vio_cfg: VioEmulatorConfig, attack_cfg: AttackConfig):
        self.vio_cfg = vio_cfg
        self.attack_cfg = attack_cfg
        self.profile: TrajectoryProfile | None = None
        self.attacker: Attacker | None = None
        self.records: list[SpoofRecord] = []

    def handle_message(self, msg: Message) -> Message:
        if isinstance(msg, SessionStart):
            self.profile = msg.profile
            self.attacker = Attacker(self.attack_cfg)
            self.records = []
            return SessionStart(msg.profile)
        if isinstance(msg, SensorBatch):
            if self.profile is None or self.attacker is None:
                raise ProtocolError("sensor batch before session start")
            t = msg.samples[-1].timestamp if msg.samples else msg.send_timestamp
            s = emulate_slow_pose(self.profile, t, self.vio_cfg, msg.round_id)
            spoofed, record = self.attacker.maybe_spoof(s)
            self.records.append(record)
            return SlowPoseMsg(msg.round_id, spoofed)
        if isinstance(msg, SessionEnd):
            reply = SessionEnd(tuple(self.records))
            self.profile = None
            self.attacker = None
            return reply
        raise ProtocolError(f"unexpected message {type(msg).__name__}")

    def handle_frame(self, data: bytes) -> bytes:
        return encode(self.handle_message(decode(data)))

    def summary(self) -> dict[str, Any]:
        spoofed = sum(1 for r in self.records if r.was_spoofed)
        return {"rounds": len(self.records), "spoofed": spoofed}


class TcpPoseServer:
    """Serves one session handler per connection until stopped."""

    def __init__(
        self,
        vio_cfg: VioEmulatorConfig,
        attack_cfg: AttackConfig,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.vio_cfg = vio_cfg
        self.attack_cfg = attack_cfg
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self.address: tuple[str, int] = self._sock.getsockname()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._accept_thread: threading.Thread | None = None
        self.session_summaries: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def start(self) -> "TcpPoseServer":
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self

    def _accept_loop(self) -> None:
        self._sock.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_connection(self, conn: socket.socket) -> None:
        handler = PoseSessionHandler(self.vio_cfg, self.attack_cfg)
        reader = FrameReader()
        try:
            conn.settimeout(0.2)
            while not self._stop.is_set():
                try:
                    chunk = conn.recv(65536)
                except socket.timeout:
                    continue
                if not chunk:
                    break
                reader.feed(chunk)
                while True:
                    try:
                        msg = reader.read()
                    except WireError:
                        conn.close()
                        return
                    if msg is None:
                        break
                    conn.sendall(encode(handler.handle_message(msg)))
        finally:
            with self._lock:
                self.session_summaries.append(handler.summary())
            conn.close()

    def stop(self) -> list[dict[str, Any]]:
        self._stop.set()
        self._sock.close()
        if self._accept_thread:
            self._accept_thread.join(timeout=2.0)
        for t in self._threads:
            t.join(timeout=2.0)
        return self.session_summaries


def run_server(
    bind: str, vio_cfg: VioEmulatorConfig, attack_cfg: AttackConfig
) -> TcpPoseServer:
    """Bind and serve; returns the started server (blocking wrapper in cli)."""
    host, _, port = bind.partition(":")
    server = TcpPoseServer(vio_cfg, attack_cfg, host=host or "127.0.0.1", port=int(port or 0))
    return server.start()


# -- transports ---------------------------------------------------------------


class InprocTransport:
    """Loopback transport: frames pass through encode/decode like TCP."""

    def __init__(self, handler: PoseSessionHandler):
        self.handler = handler

    def request(self, data: bytes) -> bytes:
        return self.handler.handle_frame(data)

    def receive(self) -> bytes:
        raise TransportTimeout("loopback transport has no unsolicited frames")

    def close(self) -> None:
        pass


class TcpTransport:
    def __init__(self, host: str, port: int, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.sock = socket.create_connection((host, port), timeout=5.0)
        self.sock.settimeout(timeout_s)
        self.timeout_s = timeout_s
        self.reader = FrameReader()

    def request(self, data: bytes) -> bytes:
        self.sock.sendall(data)
        return self.receive()

    def receive(self) -> bytes:
        deadline = time.monotonic() + self.timeout_s
        while True:
            msg = self.reader.read()
            if msg is not None:
                return encode(msg)
            if time.monotonic() > deadline:
                raise TransportTimeout("no reply within timeout")
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout as exc:
                raise TransportTimeout("no reply within timeout") from exc
            if not chunk:
                raise ProtocolError("server closed the connection")
            self.reader.feed(chunk)

    def close(self) -> None:
        self.sock.close()


# -- client ------------------------------------------------------------------


@dataclass
class StageTimings:
    """Wall-clock per-stage means in milliseconds (sidecar data only)."""

    rows: list[dict[str, float]] = field(default_factory=list)

    def add(self, round_id: int, **stages_ms: float) -> None:
        self.rows.append({"round": round_id, **stages_ms})

    def mean_ms(self, stage: str) -> float:
        vals = [r[stage] for r in self.rows if stage in r]
        return float(np.mean(vals)) if vals else 0.0

    def write_csv(self, path: str | Path) -> None:
        import csv

        if not self.rows:
            return
        keys = list(self.rows[0].keys())
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(self.rows)


@dataclass
class SessionResult:
    data: SessionData
    timings: StageTimings
    log_path: Path | None


def run_client(
    transport,
    profile: TrajectoryProfile,
    defense: str = "off",
    bundle: ModelBundle | None = None,
    noise: ImuNoiseModel | None = None,
    log_path: str | Path | None = None,
    force_pass_limit: int = 12,
) -> SessionResult:
    """Execute one full offload session through the given transport."""
    if defense not in DEFENSE_MODES:
        raise ValueError(f"defense must be one of {DEFENSE_MODES}")
    if defense != "off":
        if bundle is None or bundle.thresholds is None:
            raise ValueError("defense requires a trained, calibrated bundle")
        if bundle.pca.d_out < 1:
            raise ValueError("bundle has no PCA components")

    noise = noise if noise is not None else default_noise_model(profile)
    imu = synthesize_imu(profile, noise)
    anchor0 = ground_truth_state(profile, 0.0, noise, round_id=0)
    k = profile.imu_samples_per_window()
    n_rounds = len(imu) // k

    writer = SessionLogWriter(log_path) if log_path else None
    header_extra = {"noise": {
        "accel_noise_std": noise.accel_noise_std,
        "gyro_noise_std": noise.gyro_noise_std,
        "accel_bias": list(noise.accel_bias),
        "gyro_bias": list(noise.gyro_bias),
        "bias_random_walk_std": noise.bias_random_walk_std,
    }}
    data = SessionData(
        header={
            "type": "header",
            "profile": profile_to_json(profile),
            "defense": defense,
            "force_pass_limit": force_pass_limit,
            "anchor0": _state_to_json(anchor0),
            **header_extra,
        },
        profile=profile,
        defense=defense,
        initial_anchor=anchor0,
    )
    if writer:
        writer.header(profile, defense, anchor0, force_pass_limit, extra=header_extra)
        for s in imu:
            writer.imu(s)
    data.imu = list(imu)

    start_reply = decode(transport.request(encode(SessionStart(profile))))
    if not isinstance(start_reply, SessionStart) or start_reply.profile != profile:
        raise ProtocolError("server did not acknowledge the session profile")

    timings = StageTimings()
    state = PolicyState(0, force_pass_limit)
    anchor = anchor0
    prev_accepted = anchor0

    for rid in range(1, n_rounds + 1):
        window_samples = imu[(rid - 1) * k : rid * k]
        window = integrate_fast_poses(anchor, window_samples, window_index=rid)
        data.anchors[rid] = anchor
        data.fast_by_round[rid] = list(window.poses)
        if writer:
            writer.anchor(rid, anchor)
            for p in window.poses:
                writer.fast(rid, p)

        batch = SensorBatch(rid, window_samples[-1].timestamp, tuple(window_samples))
        try:
            reply = decode(transport.request(encode(batch)))
        except TransportTimeout:
            data.lost_rounds.append(rid)
            if writer:
                writer.lost(rid)
            anchor = _advance_anchor_on_drop(anchor, window, rid)
            continue
        # a reply for an earlier, timed-out round may still be in flight;
        # discard stale frames until this round's reply (or timeout) arrives
        while isinstance(reply, SlowPoseMsg) and reply.round_id < rid:
            try:
                reply = decode(transport.receive())
            except TransportTimeout:
                reply = None
                break
        if reply is None:
            data.lost_rounds.append(rid)
            if writer:
                writer.lost(rid)
            anchor = _advance_anchor_on_drop(anchor, window, rid)
            continue
        if not isinstance(reply, SlowPoseMsg) or reply.round_id != rid:
            raise ProtocolError(f"expected slow pose for round {rid}, got {reply!r}")
        slow = reply.state
        data.slow_by_round[rid] = slow
        if writer:
            writer.slow(rid, slow)

        t0 = time.perf_counter()
        try:
            feats = extract(window, slow, prev_accepted)
            degenerate = False
        except DegenerateWindowError:
            feats = None
            degenerate = True
        t1 = time.perf_counter()

        verdict = None
        mse = None
        t2 = t3 = t4 = t1
        if defense != "off":
            assert bundle is not None
            if degenerate:
                mse = float("inf")
                t2 = t3 = time.perf_counter()
            else:
                reduced = transform(feats, bundle.scaler, bundle.pca)
                t2 = time.perf_counter()
                mse = score_reduced(reduced, bundle)
                t3 = time.perf_counter()
            verdict, state = classify(mse, bundle.thresholds, state)
            t4 = time.perf_counter()

        if feats is not None:
            data.features_by_round[rid] = feats
            if writer:
                writer.features(rid, feats)
        if mse is not None:
            data.scores_by_round[rid] = mse
            if writer:
                writer.score(rid, mse)
        if verdict is not None:
            data.verdicts_by_round[rid] = verdict
            if writer:
                writer.verdict(rid, verdict)

        if defense == "on":
            assert verdict is not None
            anchor = reanchor(slow, verdict, window)
            if verdict.accepted:
                prev_accepted = slow
        else:
            # off and passive modes forward every slow pose unchanged
            anchor = slow
            prev_accepted = slow

        timings.add(
            rid,
            features_ms=(t1 - t0) * 1e3,
            preprocess_ms=(t2 - t1) * 1e3,
            inference_ms=(t3 - t2) * 1e3,
            postprocess_ms=(t4 - t3) * 1e3,
        )

    end_reply = decode(transport.request(encode(SessionEnd(()))))
    if not isinstance(end_reply, SessionEnd):
        raise ProtocolError("expected session-end acknowledgement")
    data.spoof_records = list(end_reply.records)
    data.rounds = n_rounds
    if writer:
        for rec in end_reply.records:
            writer.spoof(rec)
        writer.end(n_rounds)
        writer.close()
        timings.write_csv(timings_path_for(log_path))

    return SessionResult(data=data, timings=timings, log_path=Path(log_path) if log_path else None)


def timings_path_for(log_path: str | Path) -> Path:
    """Sidecar CSV path; wall-clock data never lives inside the log itself."""
    p = Path(log_path)
    name = p.name
    for suffix in (".gz", ".jsonl"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return p.with_name(name + ".timings.csv")


def _advance_anchor_on_drop(anchor: SlowPoseState, window, rid: int) -> SlowPoseState:
    if window.degenerate:
        return anchor._replace(round_id=rid)
    last = window.poses[-1]
    return SlowPoseState(
        timestamp=last.timestamp,
        position=last.position,
        orientation=last.orientation.normalized(),
        velocity=last.velocity,
        bias_acc=anchor.bias_acc,
        bias_gyro=anchor.bias_gyro,
        round_id=rid,
    )
