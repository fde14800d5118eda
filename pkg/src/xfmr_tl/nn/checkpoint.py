"""Model checkpoints and their binary file format.

Layout (little-endian)::

    'XCKP' | u32 version | u64 len | architecture JSON
    | u64 n_params | params (f4, or f8 for float64 models)
    | u64 n_buffers | batch-norm running stats (same dtype)
    | u8 has_norm [| u64 n | n f8 mean | n f8 std]
    | u64 len | provenance JSON
    | u64 checksum (blake2b-64 over everything before it)
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Architecture, ArchitectureMismatch, SynthesisModel

MAGIC = b"XCKP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    arch: Architecture
    params: np.ndarray
    buffers: np.ndarray
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: SynthesisModel, norm_mean=None, norm_std=None,
                   provenance: dict | None = None) -> "ModelCheckpoint":
        return cls(
            arch=model.arch,
            params=model.params.copy(),
            buffers=model.buffers.copy(),
            norm_mean=None if norm_mean is None else np.array(norm_mean, dtype=np.float64),
            norm_std=None if norm_std is None else np.array(norm_std, dtype=np.float64),
            provenance=dict(provenance or {}),
        )

    def to_model(self) -> SynthesisModel:
        model = SynthesisModel(self.arch, seed=None)
        model.load_state(self.params, self.buffers)
        return model

    def same_weights(self, other: "ModelCheckpoint") -> bool:
        return (self.arch == other.arch
                and self.params.tobytes() == other.params.tobytes()
                and self.buffers.tobytes() == other.buffers.tobytes())

    def equals(self, other: "ModelCheckpoint") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.tobytes() == b.tobytes()

        return (self.same_weights(other) and same(self.norm_mean, other.norm_mean)
                and same(self.norm_std, other.norm_std) and self.provenance == other.provenance)

    def fingerprint(self) -> str:
        return hashlib.blake2b(dumps_checkpoint(self), digest_size=16).hexdigest()


def check_compatible(model_arch: Architecture, ckpt: ModelCheckpoint) -> None:
    diff = model_arch.diff(ckpt.arch)
    if diff:
        raise ArchitectureMismatch("architecture mismatch: " + "; ".join(diff))


def _checksum(buf: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(buf, digest_size=8).digest(), "little")


def _blob_dtype(arch: Architecture) -> str:
    return "<f8" if arch.dtype == "float64" else "<f4"


def dumps_checkpoint(ckpt: ModelCheckpoint) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC + struct.pack("<I", FORMAT_VERSION))
    arch = json.dumps(ckpt.arch.to_dict(), sort_keys=True).encode()
    out.write(struct.pack("<Q", len(arch)) + arch)
    dt = _blob_dtype(ckpt.arch)
    for arr in (ckpt.params, ckpt.buffers):
        out.write(struct.pack("<Q", arr.size))
        out.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    if ckpt.norm_mean is None:
        out.write(b"\x00")
    else:
        out.write(b"\x01" + struct.pack("<Q", ckpt.norm_mean.size))
        out.write(np.ascontiguousarray(ckpt.norm_mean, dtype="<f8").tobytes())
        out.write(np.ascontiguousarray(ckpt.norm_std, dtype="<f8").tobytes())
    prov = json.dumps(ckpt.provenance, sort_keys=True).encode()
    out.write(struct.pack("<Q", len(prov)) + prov)
    body = out.getvalue()
    return body + struct.pack("<Q", _checksum(body))


def loads_checkpoint(buf: bytes) -> ModelCheckpoint:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    if len(buf) < 16:
        raise CheckpointError("truncated checkpoint")
    body, tail = buf[:-8], buf[-8:]
    (version,) = struct.unpack("<I", body[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if struct.unpack("<Q", tail)[0] != _checksum(body):
        raise CheckpointError("checkpoint checksum mismatch (corrupted or truncated file)")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError("truncated checkpoint")
        b = body[pos:pos + n]
        pos += n
        return b

    def u64():
        return struct.unpack("<Q", take(8))[0]

    arch = Architecture(**json.loads(take(u64())))
    dt = np.dtype(_blob_dtype(arch))
    native = np.dtype(arch.dtype)
    params = np.frombuffer(take(u64() * dt.itemsize), dtype=dt).astype(native)
    buffers = np.frombuffer(take(u64() * dt.itemsize), dtype=dt).astype(native)
    mean = std = None
    if take(1) == b"\x01":
        n = u64()
        mean = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
        std = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
    provenance = json.loads(take(u64()))
    if pos != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    ckpt = ModelCheckpoint(arch, params, buffers, mean, std, provenance)
    expected = SynthesisModel(arch, seed=None)
    if expected.params.size != params.size or expected.buffers.size != buffers.size:
        raise CheckpointError("checkpoint blob sizes disagree with its architecture")
    return ckpt


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    Path(path).write_bytes(dumps_checkpoint(ckpt))


def load_checkpoint(path) -> ModelCheckpoint:
    return loads_checkpoint(Path(path).read_bytes())
