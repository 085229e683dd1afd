"""Flat little-endian checkpoint files.

Layout::

    b"FPLK"  u32 version  u32 tensor_count
    repeated: u32 name_len, name (utf-8), u32 rank, rank * u32 extents,
              prod(extents) * f64 values (row-major)
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

MAGIC = b"FPLK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_checkpoint(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(getattr(value, "data", value), dtype="<f8", order="C")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)) + encoded)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def load_checkpoint_bytes(raw: bytes) -> dict[str, np.ndarray]:
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {raw[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", raw, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", raw, pos)
            pos += 4 * rank
            n = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * n > len(raw):
                raise CheckpointError(f"tensor {name!r} is truncated")
            out[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * n
    except struct.error as exc:
        raise CheckpointError("truncated checkpoint") from exc
    return out


def save_checkpoint(path: Union[str, os.PathLike], tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dump_checkpoint(tensors))


def load_checkpoint(path: Union[str, os.PathLike]) -> dict[str, np.ndarray]:
    return load_checkpoint_bytes(Path(path).read_bytes())


def restore(model, tensors: Mapping[str, np.ndarray]) -> None:
    """Copy checkpoint values into ``model``'s named parameters (names must match)."""
    named = model.named_parameters()
    missing = set(named) - set(tensors)
    if missing:
        raise CheckpointError(f"checkpoint lacks {sorted(missing)}")
    for name, param in named.items():
        param.data = tensors[name]
