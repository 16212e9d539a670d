"""Binary client/server wire format.

Every frame is

    magic        4 bytes  b"PDS1"
    version      u8       currently 1
    kind         u8       1=SensorBatch 2=SlowPose 3=SessionStart 4=SessionEnd
    payload_len  u32 LE
    payload      payload_len bytes, fixed little-endian layout per kind

All floats are IEEE-754 binary64, so decode(encode(m)) == m bit-exactly.

Payloads:
  SensorBatch   round_id u32, send_timestamp f64, count u32,
                count x (t f64, accel 3xf64, gyro 3xf64)
  SlowPose      round_id u32, t f64, position 3xf64, quaternion 4xf64 (w,x,y,z),
                velocity 3xf64, bias_acc 3xf64, bias_gyro 3xf64
  SessionStart  duration f64, imu_rate f64, slow_rate f64, rng_seed u64,
                then two term blocks (position, euler rates), each:
                u32 count, count x (axis u8, amplitude f64, freq f64, phase f64)
  SessionEnd    empty, or u32 count, count x spoof record
                (round u32, spoofed u8, pos 3xf64, rotvec 3xf64, vel 3xf64,
                 bias_acc 3xf64, bias_gyro 3xf64)

The SessionEnd reply from the server carries the round-by-round spoof
records, which exist purely for post-hoc audit: the client only sees
them after the session is over.
"""

from __future__ import annotations

import struct
from typing import NamedTuple, Union

from .attacker import SpoofRecord
from .geometry import Quaternion, SlowPoseState, Vec3
from .motion import ImuSample, SinusoidTerm, TrajectoryProfile

MAGIC = b"PDS1"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
MAX_PAYLOAD = 16 * 1024 * 1024

KIND_SENSOR_BATCH = 1
KIND_SLOW_POSE = 2
KIND_SESSION_START = 3
KIND_SESSION_END = 4


class WireError(Exception):
    pass


class BadMagicError(WireError):
    pass


class VersionMismatchError(WireError):
    pass


class UnknownKindError(WireError):
    pass


class TruncatedFrameError(WireError):
    pass


class LengthOverflowError(WireError):
    pass


class PayloadError(WireError):
    pass


class SensorBatch(NamedTuple):
    round_id: int
    send_timestamp: float
    samples: tuple[ImuSample, ...]


class SlowPoseMsg(NamedTuple):
    round_id: int
    state: SlowPoseState


class SessionStart(NamedTuple):
    profile: TrajectoryProfile


class SessionEnd(NamedTuple):
    records: tuple[SpoofRecord, ...] = ()


Message = Union[SensorBatch, SlowPoseMsg, SessionStart, SessionEnd]

_VEC3 = struct.Struct("<3d")
_IMU = struct.Struct("<7d")
_TERM = struct.Struct("<B3d")
_SPOOF = struct.Struct("<IB15d")
_SLOW = struct.Struct("<I17d")


def _encode_terms(axes) -> bytes:
    out = [struct.pack("<I", sum(len(terms) for terms in axes))]
    for axis, terms in enumerate(axes):
        for t in terms:
            out.append(_TERM.pack(axis, t.amplitude, t.frequency_hz, t.phase_rad))
    return b"".join(out)


def _decode_terms(r: "_PayloadReader"):
    count = r.u32()
    axes: list[list[SinusoidTerm]] = [[], [], []]
    for _ in range(count):
        axis, amp, freq, phase = r.unpack(_TERM)
        if axis > 2:
            raise PayloadError(f"term axis {axis} out of range")
        axes[axis].append(SinusoidTerm(amp, freq, phase))
    return tuple(tuple(t) for t in axes)


def _encode_payload(msg: Message) -> tuple[int, bytes]:
    if isinstance(msg, SensorBatch):
        ts = [s.timestamp for s in msg.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise PayloadError("sensor batch samples must be sorted by timestamp")
        parts = [struct.pack("<IdI", msg.round_id, msg.send_timestamp, len(msg.samples))]
        for s in msg.samples:
            parts.append(_IMU.pack(s.timestamp, *s.accel, *s.gyro))
        return KIND_SENSOR_BATCH, b"".join(parts)

    if isinstance(msg, SlowPoseMsg):
        st = msg.state
        payload = _SLOW.pack(
            msg.round_id,
            st.timestamp,
            *st.position,
            *st.orientation,
            *st.velocity,
            *st.bias_acc,
            *st.bias_gyro,
        )
        return KIND_SLOW_POSE, payload

    if isinstance(msg, SessionStart):
        p = msg.profile
        head = struct.pack(
            "<dddQ", p.duration_s, p.imu_rate_hz, p.slow_pose_rate_hz, p.rng_seed
        )
        return KIND_SESSION_START, head + _encode_terms(p.position_terms) + _encode_terms(
            p.euler_rate_terms
        )

    if isinstance(msg, SessionEnd):
        if not msg.records:
            return KIND_SESSION_END, b""
        parts = [struct.pack("<I", len(msg.records))]
        for rec in msg.records:
            parts.append(
                _SPOOF.pack(
                    rec.round_id,
                    1 if rec.was_spoofed else 0,
                    *rec.delta_position,
                    *rec.delta_rotvec,
                    *rec.delta_velocity,
                    *rec.delta_bias_acc,
                    *rec.delta_bias_gyro,
                )
            )
        return KIND_SESSION_END, b"".join(parts)

    raise TypeError(f"not a wire message: {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    kind, payload = _encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise LengthOverflowError(f"payload of {len(payload)} bytes exceeds cap")
    return HEADER.pack(MAGIC, VERSION, kind, len(payload)) + payload


class _PayloadReader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def unpack(self, s: struct.Struct):
        if self.off + s.size > len(self.data):
            raise PayloadError("payload shorter than its declared contents")
        vals = s.unpack_from(self.data, self.off)
        self.off += s.size
        return vals

    def u32(self) -> int:
        (v,) = self.unpack(struct.Struct("<I"))
        return v

    def done(self) -> None:
        if self.off != len(self.data):
            raise PayloadError(f"{len(self.data) - self.off} trailing payload bytes")


def _decode_payload(kind: int, payload: bytes) -> Message:
    r = _PayloadReader(payload)
    if kind == KIND_SENSOR_BATCH:
        round_id, send_ts, count = r.unpack(struct.Struct("<IdI"))
        samples = []
        for _ in range(count):
            vals = r.unpack(_IMU)
            samples.append(ImuSample(vals[0], Vec3(*vals[1:4]), Vec3(*vals[4:7])))
        r.done()
        ts = [s.timestamp for s in samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise PayloadError("sensor batch samples must be sorted by timestamp")
        return SensorBatch(round_id, send_ts, tuple(samples))

    if kind == KIND_SLOW_POSE:
        vals = r.unpack(_SLOW)
        r.done()
        return SlowPoseMsg(
            round_id=vals[0],
            state=SlowPoseState(
                timestamp=vals[1],
                position=Vec3(*vals[2:5]),
                orientation=Quaternion(*vals[5:9]),
                velocity=Vec3(*vals[9:12]),
                bias_acc=Vec3(*vals[12:15]),
                bias_gyro=Vec3(*vals[15:18]),
                round_id=vals[0],
            ),
        )

    if kind == KIND_SESSION_START:
        duration, imu_rate, slow_rate, seed = r.unpack(struct.Struct("<dddQ"))
        pos_terms = _decode_terms(r)
        rate_terms = _decode_terms(r)
        r.done()
        try:
            profile = TrajectoryProfile(
                position_terms=pos_terms,
                euler_rate_terms=rate_terms,
                duration_s=duration,
                imu_rate_hz=imu_rate,
                slow_pose_rate_hz=slow_rate,
                rng_seed=seed,
            )
        except ValueError as exc:
            raise PayloadError(f"invalid profile: {exc}") from exc
        return SessionStart(profile)

    if kind == KIND_SESSION_END:
        if not payload:
            return SessionEnd(())
        count = r.u32()
        records = []
        for _ in range(count):
            vals = r.unpack(_SPOOF)
            records.append(
                SpoofRecord(
                    round_id=vals[0],
                    was_spoofed=bool(vals[1]),
                    delta_position=Vec3(*vals[2:5]),
                    delta_rotvec=Vec3(*vals[5:8]),
                    delta_velocity=Vec3(*vals[8:11]),
                    delta_bias_acc=Vec3(*vals[11:14]),
                    delta_bias_gyro=Vec3(*vals[14:17]),
                )
            )
        r.done()
        return SessionEnd(tuple(records))

    raise UnknownKindError(f"unknown message kind {kind}")


def parse_header(data: bytes) -> tuple[int, int]:
    """Validate a frame header; returns (kind, payload_len)."""
    if len(data) < HEADER.size:
        raise TruncatedFrameError("incomplete header")
    magic, version, kind, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported protocol version {version}")
    if kind not in (KIND_SENSOR_BATCH, KIND_SLOW_POSE, KIND_SESSION_START, KIND_SESSION_END):
        raise UnknownKindError(f"unknown message kind {kind}")
    if payload_len > MAX_PAYLOAD:
        raise LengthOverflowError(f"declared payload of {payload_len} bytes exceeds cap")
    return kind, payload_len


def decode(data: bytes) -> Message:
    """Parse exactly one frame; trailing or missing bytes are errors."""
    kind, payload_len = parse_header(data)
    end = HEADER.size + payload_len
    if len(data) < end:
        raise TruncatedFrameError(f"frame needs {end} bytes, got {len(data)}")
    if len(data) > end:
        raise PayloadError(f"{len(data) - end} trailing bytes after frame")
    return _decode_payload(kind, data[HEADER.size : end])


class FrameReader:
    """Incremental frame splitter for byte streams.

    feed() appends bytes; read() returns the next message, or None when
    more bytes are needed.  A corrupted header raises, and the buffer is
    advanced to the next occurrence of the magic so reading can resume.
    """

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def _resync(self) -> None:
        nxt = self._buf.find(MAGIC, 1)
        del self._buf[: nxt if nxt >= 0 else len(self._buf)]

    def read(self) -> Message | None:
        if len(self._buf) < HEADER.size:
            return None
        try:
            kind, payload_len = parse_header(bytes(self._buf[: HEADER.size]))
        except TruncatedFrameError:
            return None
        except WireError:
            self._resync()
            raise
        end = HEADER.size + payload_len
        if len(self._buf) < end:
            return None
        frame = bytes(self._buf[:end])
        try:
            msg = _decode_payload(kind, frame[HEADER.size :])
        except WireError:
            del self._buf[:end]
            raise
        del self._buf[:end]
        return msg

    def pending_bytes(self) -> int:
        return len(self._buf)
