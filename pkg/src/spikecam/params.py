"""Seeded weight containers and their flat binary serialization.

Blob layout (little-endian)::

    b"PRM1"  u32 count
    count x { u16 name_len, name (utf-8), u8 ndim, ndim x u32 dims }
    float64 payload, arrays in directory order, row-major
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Mapping

import numpy as np

PARAM_MAGIC = b"PRM1"


class ParamSet(dict):
    """Ordered ``name -> float64 array`` mapping with a deep ``copy``."""

    def copy(self) -> "ParamSet":
        return type(self)((k, v.copy()) for k, v in self.items())

    def zero(self, *names: str) -> "ParamSet":
        """Return a copy with the named arrays set to zero."""
        out = self.copy()
        for n in names:
            out[n][...] = 0.0
        return out


class Initializer:
    """Draws each tensor from U(-s, s) with ``s = 1/sqrt(fan_in)``."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def conv(self, cout: int, cin: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        s = 1.0 / np.sqrt(cin * k * k)
        return self.rng.uniform(-s, s, (cout, cin, k, k)), self.rng.uniform(-s, s, cout)

    def dense(self, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
        s = 1.0 / np.sqrt(fan_in)
        return self.rng.uniform(-s, s, (fan_in, fan_out)), self.rng.uniform(-s, s, fan_out)


def write_params(params: Mapping[str, np.ndarray], sink: BinaryIO) -> int:
    head = [PARAM_MAGIC, struct.pack("<I", len(params))]
    body = []
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        key = name.encode("utf-8")
        head.append(struct.pack("<HB", len(key), arr.ndim) + key)
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.append(arr.tobytes())
    data = b"".join(head + body)
    sink.write(data)
    return len(data)


def read_params(source: BinaryIO) -> ParamSet:
    if source.read(4) != PARAM_MAGIC:
        raise ValueError("not a PRM1 parameter blob")
    (count,) = struct.unpack("<I", source.read(4))
    directory = []
    for _ in range(count):
        klen, ndim = struct.unpack("<HB", source.read(3))
        name = source.read(klen).decode("utf-8")
        dims = struct.unpack(f"<{ndim}I", source.read(4 * ndim))
        directory.append((name, dims))
    out = ParamSet()
    for name, dims in directory:
        n = int(np.prod(dims, dtype=np.int64))
        raw = source.read(8 * n)
        if len(raw) != 8 * n:
            raise ValueError(f"parameter blob truncated inside {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
    return out


def save_params(params, path) -> int:
    with open(path, "wb") as fh:
        return write_params(params, fh)


def load_params(path) -> ParamSet:
    with open(path, "rb") as fh:
        return read_params(fh)
