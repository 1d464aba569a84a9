"""MARF binary tensor files.

Layout: b"MARF", version u8, dtype u8 (0 = f32, 1 = f64), rank u8,
rank little-endian u32 extents, then raw little-endian values (row-major).
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from maskmar.errors import UsageError

MAGIC = b"MARF"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def encode(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.dtype not in _CODES:
        if np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool:
            arr = arr.astype(np.float64)
        else:
            raise UsageError(f"cannot store dtype {arr.dtype} in MARF")
    code = _CODES[arr.dtype]
    if arr.ndim > 255:
        raise UsageError("MARF rank is limited to 255")
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise UsageError("not a MARF stream (bad magic)")
    version, code, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION:
        raise UsageError(f"unsupported MARF version {version}")
    if code not in _DTYPES:
        raise UsageError(f"unknown MARF dtype code {code}")
    offset = 7
    shape = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    dtype = _DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64))
    if len(blob) - offset != count * dtype.itemsize:
        raise UsageError(f"MARF payload size mismatch: expected {count * dtype.itemsize} bytes, got {len(blob) - offset}")
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
    return arr.astype(dtype.newbyteorder("="))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save(path: str | os.PathLike, array: np.ndarray) -> None:
    atomic_write_bytes(path, encode(array))


def load(path: str | os.PathLike) -> np.ndarray:
    return decode(Path(path).read_bytes())
