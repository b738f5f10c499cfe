"""Binary checkpoints for masked models.

Layout (all little-endian)::

    b"SAFC"  u32 version
    u32 n_dims, u32 dims[n_dims]
    f64 omega, u64 active_count, u64 iterations_done, u32 round_counter
    per layer: f64 weights[n_prev * n_cur] (row-major), f64 biases[n_cur],
               u8 mask_bits[ceil(n_prev * n_cur / 8)]  (packbits, little bit order)
    u32 len, rng state as JSON  (len 0 = absent)
    u32 len, trace as JSON      (len 0 = absent)
    u32 crc32 of everything above
"""
from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .framework import RunTrace
from .model import TargetModel
from .sparse import SparseMask

MAGIC = b"SAFC"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: TargetModel
    trace: RunTrace | None = None
    rng_state: dict | None = None
    round_counter: int = 0


def _pack_mask(mask: np.ndarray) -> bytes:
    return np.packbits(mask.ravel(), bitorder="little").tobytes()


def encode(model: TargetModel, trace: RunTrace | None = None, rng_state: dict | None = None,
           round_counter: int | None = None) -> bytes:
    if round_counter is None:
        round_counter = len(trace.rounds) if trace is not None else 0
    dims = model.layer_dims
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(dims)), struct.pack(f"<{len(dims)}I", *dims),
           struct.pack("<dQQI", model.mask.omega, model.mask.active_count, model.iterations_done, round_counter)]
    for w, b, m in zip(model.weights, model.biases, model.mask.layers):
        out.append(np.ascontiguousarray(w.data, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(b.data, dtype="<f8").tobytes())
        out.append(_pack_mask(m))
    for blob in (rng_state, trace.to_dict() if trace is not None else None):
        payload = b"" if blob is None else json.dumps(blob, sort_keys=True).encode()
        out += [struct.pack("<I", len(payload)), payload]
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    (n_dims,) = r.unpack("<I", "dims")
    if n_dims < 2:
        raise CheckpointError("checkpoint has fewer than two layer dims")
    dims = list(r.unpack(f"<{n_dims}I", "dims"))
    omega, active, iters, round_counter = r.unpack("<dQQI", "header")
    weights, biases, layers = [], [], []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        weights.append(np.frombuffer(r.take(8 * a * b, f"W{i}"), dtype="<f8").reshape(a, b).astype(np.float64))
        biases.append(np.frombuffer(r.take(8 * b, f"b{i}"), dtype="<f8").astype(np.float64))
        bits = np.frombuffer(r.take(math.ceil(a * b / 8), f"mask{i}"), dtype=np.uint8)
        layers.append(np.unpackbits(bits, count=a * b, bitorder="little").astype(bool).reshape(a, b))
    blobs = []
    for what in ("rng state", "trace"):
        (n,) = r.unpack("<I", what)
        raw = r.take(n, what)
        blobs.append(json.loads(raw) if n else None)
    body_end = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after checksum")
    if zlib.crc32(buf[:body_end]) != crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    mask = SparseMask(layers, omega)
    if mask.active_count != active:
        raise CheckpointError(f"mask has {mask.active_count} active bits, header says {active}")
    model = TargetModel(dims, weights, biases, mask, iters)
    trace = RunTrace.from_dict(blobs[1]) if blobs[1] is not None else None
    return Checkpoint(model, trace, blobs[0], round_counter)


def save_checkpoint(model: TargetModel, trace: RunTrace | None, path, rng_state: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(model, trace, rng_state))
    return path


def read_checkpoint(path) -> Checkpoint:
    return decode(Path(path).read_bytes())


def load_checkpoint(path) -> TargetModel:
    return read_checkpoint(path).model
