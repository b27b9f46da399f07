"""Binary tensor and checkpoint files.

Tensor file (``.brt``)::

    b"BRT1" | u32 ndim | u32 dims[ndim] | f32 data[prod(dims)]

Checkpoint file::

    b"BRW1" | u32 count | count x record
    record = u32 name_len | name (utf-8) | u32 ndim | u32 dims[ndim] | f32 data

All integers and floats are little-endian; data is row-major.  Records are
written in the parameter dict's key order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"BRT1"
CHECKPOINT_MAGIC = b"BRW1"
_MAX_ELEMENTS = 1 << 31


class FormatError(ValueError):
    """Malformed tensor or checkpoint file."""


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf = buf
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated (need {n} bytes at offset {self.pos})")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self) -> np.ndarray:
        ndim = self.u32()
        if ndim == 0 or ndim > 16:
            raise FormatError(f"{self.what}: invalid ndim {ndim}")
        dims = [self.u32() for _ in range(ndim)]
        count = 1
        for d in dims:
            count *= d
            if count > _MAX_ELEMENTS:
                raise FormatError(f"{self.what}: dims {dims} overflow")
        data = np.frombuffer(self.take(4 * count), dtype="<f4")
        return data.reshape(dims).astype(np.float32)


def _encode_array(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim == 0:
        raise FormatError("cannot store a tensor with empty dims")
    head = struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def write_tensor(path, tensor) -> None:
    Path(path).write_bytes(TENSOR_MAGIC + _encode_array(tensor))


def read_tensor(path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), str(path))
    if r.take(4) != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic")
    arr = r.array()
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return arr


def write_checkpoint(path, params: dict) -> None:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw + _encode_array(value))
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> dict:
    r = _Reader(Path(path).read_bytes(), str(path))
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic")
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        params[name] = r.array()
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return params
