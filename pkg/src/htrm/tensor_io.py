"""Binary tensor files: magic "HTRM", u32 rank, u32 extents, f32 row-major.

All integers and floats are little-endian. Values are stored at 32-bit
precision regardless of the in-memory precision; loading always yields
float64 arrays.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormatError

MAGIC = b"HTRM"

_U32 = struct.Struct("<I")


def tensor_to_bytes(array: np.ndarray) -> bytes:
    # not ascontiguousarray: that silently promotes rank-0 tensors to rank 1
    arr = np.asarray(array, dtype=np.float32)
    if not arr.flags.c_contiguous:
        arr = arr.copy(order="C")
    header = MAGIC + _U32.pack(arr.ndim)
    for ext in arr.shape:
        header += _U32.pack(ext)
    return header + arr.tobytes(order="C")


def tensor_from_bytes(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one tensor starting at `offset`; returns (array, next offset)."""
    start = offset
    if len(blob) < offset + 4:
        raise DataFormatError(f"truncated tensor header at offset {offset}")
    if blob[offset : offset + 4] != MAGIC:
        raise DataFormatError(
            f"bad magic {blob[offset:offset + 4]!r} at offset {offset}, expected {MAGIC!r}"
        )
    offset += 4
    if len(blob) < offset + 4:
        raise DataFormatError(f"truncated rank field at offset {offset}")
    (rank,) = _U32.unpack_from(blob, offset)
    offset += 4
    if rank > 16:
        raise DataFormatError(f"implausible tensor rank {rank} at offset {start}")
    shape = []
    for _ in range(rank):
        if len(blob) < offset + 4:
            raise DataFormatError(f"truncated extent field at offset {offset}")
        (ext,) = _U32.unpack_from(blob, offset)
        offset += 4
        shape.append(ext)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    nbytes = count * 4
    if len(blob) < offset + nbytes:
        raise DataFormatError(
            f"truncated tensor payload at offset {offset}: "
            f"need {nbytes} bytes, have {len(blob) - offset}"
        )
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    offset += nbytes
    return flat.astype(np.float64).reshape(shape), offset


def save_tensor(path, array: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(array))


def load_tensor(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    array, end = tensor_from_bytes(blob)
    if end != len(blob):
        raise DataFormatError(f"trailing garbage after tensor at offset {end}")
    return array
