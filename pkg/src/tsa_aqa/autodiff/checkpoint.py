"""Flat binary parameter checkpoints.

Layout: magic "TSAW", version u32, tensor count u32, then per tensor
name length u32, utf-8 name, rank u32, one u32 per dim, float64 values.
All integers and floats are little-endian.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from .tensor import NonFiniteValueError, Tensor

MAGIC = b"TSAW"
VERSION = 1


class BadMagicError(ValueError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(ValueError):
    """File ended before the declared payload."""


def save_checkpoint(params: Mapping[str, Tensor | np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name in sorted(params):
            value = params[name]
            arr = np.asarray(value.data if isinstance(value, Tensor) else value,
                             dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes(order="C"))


def _read(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"expected {n} bytes, got {len(buf)}")
    return buf


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise BadMagicError(f"not a TSAW checkpoint: {path}")
        version, count = struct.unpack("<II", _read(fh, 8))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read(fh, 4))
            name = _read(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read(fh, 4))
            shape = struct.unpack(f"<{rank}I", _read(fh, 4 * rank))
            n = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(_read(fh, 8 * n), dtype="<f8").reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise NonFiniteValueError(f"checkpoint tensor {name!r} is non-finite")
            params[name] = arr.copy()
    return params
