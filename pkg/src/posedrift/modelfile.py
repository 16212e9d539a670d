"""Versioned binary container for trained model bundles.

Byte layout (all integers little-endian, all floats IEEE-754 binary64,
matrices row-major):

    magic            4 bytes  b"PDSB"
    version          u16      currently 1
    schema_hash      32 bytes sha256 of the feature schema
    scaler           u32 dim, dim x f64 mean, dim x f64 std, f64 epsilon
    pca              u32 d_out, u32 d_in, d_out*d_in x f64 components,
                     d_out x f64 explained variance, f64 retained ratio
    squash           d_out x f64 lo, d_out x f64 hi
    arch             u32 input_dim, 3 x u32 hidden, u32 latent, f64 slope
    weights          per layer i in 0..7: fan_in*fan_out x f64 W, fan_out x f64 b
    batchnorm        per bn j in 0..2: dim x f64 gamma, beta, run_mean, run_var
    thresholds       u8 present, f64 t_soft, f64 t_hard_raw
    metadata         u32 length, JSON utf-8

Loading refuses files whose schema hash does not match the running
feature schema: a bundle is only meaningful for the exact feature layout
it was trained on.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autoencoder import AeArchitecture, AutoencoderNet, ModelBundle, SquashBounds
from .detector import Thresholds
from .features import schema_hash
from .preprocess import FittedPca, FittedScaler

MAGIC = b"PDSB"
VERSION = 1


class BundleFormatError(ValueError):
    pass


class SchemaMismatchError(BundleFormatError):
    """The bundle was trained against a different feature schema."""


def _pack_array(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise BundleFormatError("bundle file truncated")
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, *shape: int) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        buf = self.take(8 * count)
        return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    parts = [MAGIC, struct.pack("<H", VERSION), bytes.fromhex(bundle.feature_schema_hash)]

    scaler = bundle.scaler
    dim = scaler.mean.shape[0]
    parts.append(struct.pack("<I", dim))
    parts.append(_pack_array(scaler.mean))
    parts.append(_pack_array(scaler.std))
    parts.append(struct.pack("<d", scaler.epsilon))

    pca = bundle.pca
    parts.append(struct.pack("<II", pca.d_out, pca.components.shape[1]))
    parts.append(_pack_array(pca.components))
    parts.append(_pack_array(pca.explained_variance))
    parts.append(struct.pack("<d", pca.retained_ratio))

    parts.append(_pack_array(bundle.squash.lo))
    parts.append(_pack_array(bundle.squash.hi))

    arch = bundle.net.arch
    parts.append(struct.pack("<IIIII", arch.input_dim, *arch.hidden, arch.latent_dim))
    parts.append(struct.pack("<d", arch.lrelu_slope))
    for i in range(AutoencoderNet.N_LAYERS):
        parts.append(_pack_array(bundle.net.params[f"W{i}"]))
        parts.append(_pack_array(bundle.net.params[f"b{i}"]))
    for j in range(len(AutoencoderNet.BN_LAYERS)):
        parts.append(_pack_array(bundle.net.params[f"gamma{j}"]))
        parts.append(_pack_array(bundle.net.params[f"beta{j}"]))
        parts.append(_pack_array(bundle.net.buffers[f"run_mean{j}"]))
        parts.append(_pack_array(bundle.net.buffers[f"run_var{j}"]))

    if bundle.thresholds is not None:
        parts.append(struct.pack("<Bdd", 1, bundle.thresholds.t_soft, bundle.thresholds.t_hard_raw))
    else:
        parts.append(struct.pack("<Bdd", 0, 0.0, 0.0))

    meta = json.dumps(bundle.metadata, sort_keys=True).encode()
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)

    Path(path).write_bytes(b"".join(parts))


def load_bundle(path: str | Path) -> ModelBundle:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise BundleFormatError("not a model bundle (bad magic)")
    version = r.u16()
    if version != VERSION:
        raise BundleFormatError(f"unsupported bundle version {version}")
    file_hash = r.take(32).hex()
    if file_hash != schema_hash():
        raise SchemaMismatchError(
            f"bundle schema {file_hash[:12]}... does not match current schema "
            f"{schema_hash()[:12]}..."
        )

    dim = r.u32()
    mean = r.array(dim)
    std = r.array(dim)
    epsilon = r.f64()
    scaler = FittedScaler(mean=mean, std=std, epsilon=epsilon)

    d_out = r.u32()
    d_in = r.u32()
    components = r.array(d_out, d_in)
    explained = r.array(d_out)
    retained = r.f64()
    pca = FittedPca(
        components=components, explained_variance=explained, retained_ratio=retained, d_out=d_out
    )

    squash = SquashBounds(lo=r.array(d_out), hi=r.array(d_out))

    input_dim, h1, h2, h3, latent = struct.unpack("<IIIII", r.take(20))
    slope = r.f64()
    arch = AeArchitecture(input_dim=input_dim, hidden=(h1, h2, h3), latent_dim=latent, lrelu_slope=slope)
    net = AutoencoderNet(arch)
    widths = arch.widths()
    for i in range(AutoencoderNet.N_LAYERS):
        net.params[f"W{i}"] = r.array(widths[i], widths[i + 1])
        net.params[f"b{i}"] = r.array(widths[i + 1])
    for j, layer in enumerate(AutoencoderNet.BN_LAYERS):
        d = widths[layer + 1]
        net.params[f"gamma{j}"] = r.array(d)
        net.params[f"beta{j}"] = r.array(d)
        net.buffers[f"run_mean{j}"] = r.array(d)
        net.buffers[f"run_var{j}"] = r.array(d)

    present = r.u8()
    t_soft = r.f64()
    t_hard_raw = r.f64()
    thresholds = Thresholds(t_soft=t_soft, t_hard_raw=t_hard_raw) if present else None

    meta_len = r.u32()
    metadata = json.loads(r.take(meta_len).decode())

    return ModelBundle(
        scaler=scaler,
        pca=pca,
        squash=squash,
        net=net,
        thresholds=thresholds,
        feature_schema_hash=file_hash,
        metadata=metadata,
    )
