"""Binary checkpoint container.

Layout (all integers unsigned 32-bit little-endian)::

    b"DRGD" | version | config length | config JSON (UTF-8, sorted keys)
    | tensor count | per tensor: name length, name, rows, cols,
      rows*cols float64 little-endian values in row-major order
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

from .model import ModelConfig, ModelParams

MAGIC = b"DRGD"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def to_bytes(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_u32(VERSION))
    cfg = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(_u32(len(cfg)))
    buf.write(cfg)
    named = params.named_tensors()
    buf.write(_u32(len(named)))
    for name, t in named:
        raw = name.encode("utf-8")
        rows, cols = t.value.shape
        buf.write(_u32(len(raw)))
        buf.write(raw)
        buf.write(_u32(rows))
        buf.write(_u32(cols))
        buf.write(np.ascontiguousarray(t.value, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def from_bytes(data: bytes) -> ModelParams:
    if data[:4] != MAGIC:
        raise CheckpointError("bad checkpoint header")
    r = _Reader(data)
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        config = ModelConfig.from_dict(json.loads(r.take(r.u32()).decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as e:
        raise CheckpointError(f"unreadable checkpoint config: {e}") from None
    params = ModelParams(config, 0)
    expected = dict(params.named_tensors())
    count = r.u32()
    if count != len(expected):
        raise CheckpointError(f"checkpoint holds {count} tensors, model needs {len(expected)}")
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rows, cols = r.u32(), r.u32()
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name!r} in checkpoint")
        t = expected[name]
        if t.value.shape != (rows, cols):
            raise CheckpointError(f"tensor {name!r}: checkpoint shape {(rows, cols)} vs model {t.value.shape}")
        values = np.frombuffer(r.take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        t.value = values.astype(np.float64)
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")
    params.zero_grad()
    return params


def save_checkpoint(params: ModelParams, path: str | os.PathLike) -> None:
    data = to_bytes(params)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> ModelParams:
    with open(path, "rb") as f:
        return from_bytes(f.read())
