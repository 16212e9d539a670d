import numpy as np
import pytest

from posedrift.attacker import SpoofRecord
from posedrift.geometry import Quaternion, SlowPoseState, Vec3
from posedrift.motion import ImuSample, random_profile, static_profile
from posedrift.wire import (
    HEADER,
    MAGIC,
    BadMagicError,
    FrameReader,
    LengthOverflowError,
    PayloadError,
    SensorBatch,
    SessionEnd,
    SessionStart,
    SlowPoseMsg,
    TruncatedFrameError,
    UnknownKindError,
    VersionMismatchError,
    decode,
    encode,
)


def sample_batch(n=25, round_id=3) -> SensorBatch:
    rng = np.random.default_rng(round_id)
    samples = tuple(
        ImuSample(0.002 * (k + 1), Vec3(*rng.standard_normal(3)), Vec3(*rng.standard_normal(3)))
        for k in range(n)
    )
    return SensorBatch(round_id=round_id, send_timestamp=0.05, samples=samples)


def sample_slow(round_id=4) -> SlowPoseMsg:
    rng = np.random.default_rng(round_id)
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    state = SlowPoseState(
        timestamp=0.2,
        position=Vec3(*rng.standard_normal(3)),
        orientation=Quaternion(*q),
        velocity=Vec3(*rng.standard_normal(3)),
        bias_acc=Vec3(*rng.standard_normal(3)),
        bias_gyro=Vec3(*rng.standard_normal(3)),
        round_id=round_id,
    )
    return SlowPoseMsg(round_id=round_id, state=state)


def sample_records(n=5) -> tuple[SpoofRecord, ...]:
    rng = np.random.default_rng(n)
    recs = []
    for rid in range(1, n + 1):
        spoofed = rid % 2 == 0
        v = (lambda: Vec3(*rng.standard_normal(3))) if spoofed else (lambda: Vec3(0, 0, 0))
        recs.append(SpoofRecord(rid, spoofed, v(), v(), v(), v(), v()))
    return tuple(recs)


class TestRoundtrip:
    def test_session_end_empty(self):
        msg = SessionEnd(())
        assert decode(encode(msg)) == msg
        assert len(encode(msg)) == HEADER.size

    def test_session_end_with_records(self):
        msg = SessionEnd(sample_records())
        assert decode(encode(msg)) == msg

    def test_sensor_batch(self):
        msg = sample_batch()
        assert decode(encode(msg)) == msg

    def test_slow_pose(self):
        msg = sample_slow()
        assert decode(encode(msg)) == msg

    def test_session_start_profiles(self):
        for profile in (random_profile(3), static_profile()):
            msg = SessionStart(profile)
            assert decode(encode(msg)) == msg

    def test_randomized_roundtrip_exactness(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            n = int(rng.integers(0, 30))
            msg = sample_batch(n=max(n, 1), round_id=int(rng.integers(0, 10_000)))
            assert decode(encode(msg)) == msg


class TestErrors:
    def test_truncated_by_one_byte(self):
        frame = encode(sample_batch())
        with pytest.raises(TruncatedFrameError):
            decode(frame[:-1])

    def test_trailing_bytes_rejected(self):
        frame = encode(sample_slow())
        with pytest.raises(PayloadError):
            decode(frame + b"\x00")

    def test_bad_magic(self):
        frame = bytearray(encode(sample_slow()))
        frame[0] = ord("X")
        with pytest.raises(BadMagicError):
            decode(bytes(frame))

    def test_version_mismatch(self):
        frame = bytearray(encode(sample_slow()))
        frame[4] = 99
        with pytest.raises(VersionMismatchError):
            decode(bytes(frame))

    def test_unknown_kind(self):
        frame = bytearray(encode(sample_slow()))
        frame[5] = 77
        with pytest.raises(UnknownKindError):
            decode(bytes(frame))

    def test_length_overflow(self):
        import struct

        header = HEADER.pack(MAGIC, 1, 2, 1 << 30)
        with pytest.raises(LengthOverflowError):
            decode(header)

    def test_unsorted_batch_rejected(self):
        samples = (
            ImuSample(0.2, Vec3(0, 0, 0), Vec3(0, 0, 0)),
            ImuSample(0.1, Vec3(0, 0, 0), Vec3(0, 0, 0)),
        )
        with pytest.raises(PayloadError):
            encode(SensorBatch(1, 0.2, samples))


class TestFrameReader:
    def test_incremental_feed(self):
        frame = encode(sample_batch())
        reader = FrameReader()
        reader.feed(frame[:7])
        assert reader.read() is None
        reader.feed(frame[7:20])
        assert reader.read() is None
        reader.feed(frame[20:])
        assert reader.read() == sample_batch()
        assert reader.read() is None

    def test_multiple_frames_in_one_feed(self):
        frames = encode(sample_slow(1)) + encode(sample_slow(2))
        reader = FrameReader()
        reader.feed(frames)
        assert reader.read() == sample_slow(1)
        assert reader.read() == sample_slow(2)

    def test_resync_after_garbage(self):
        reader = FrameReader()
        reader.feed(b"garbagegarbage" + encode(sample_slow(7)))
        with pytest.raises(BadMagicError):
            reader.read()
        # stream resynchronizes at the next magic
        assert reader.read() == sample_slow(7)

    def test_corrupted_frame_then_valid(self):
        good = encode(sample_slow(8))
        corrupted = bytearray(encode(sample_slow(9)))
        corrupted[5] = 55  # unknown kind
        reader = FrameReader()
        reader.feed(bytes(corrupted) + good)
        with pytest.raises(UnknownKindError):
            reader.read()
        assert reader.read() == sample_slow(8)
