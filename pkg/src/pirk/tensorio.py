"""Binary tensor files and named-tensor bundles.

Single tensor layout: a 16-byte little-endian header
``magic "PIRK" | u8 version | u8 dtype (1=f64, 2=f32) | u16 rank | 4*u16 dims``
followed by the row-major payload. Rank is at most 4; unused dims are 0.

A bundle (used for model parameters) is ``magic "PKB1" | u32 meta_len |
meta JSON (utf-8)`` followed by repeated ``u16 name_len | name | tensor``
records until end of file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

_HEADER = struct.Struct("<4sBBH4H")
_MAGIC = b"PIRK"
_BUNDLE_MAGIC = b"PKB1"
_DTYPES = {1: "<f8", 2: "<f4"}
_CODES = {np.dtype(np.float64): 1, np.dtype(np.float32): 2}


def write_tensor(fh, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        arr = arr.astype(np.float64)
    if arr.ndim > 4:
        raise InvalidArgumentError(f"rank {arr.ndim} > 4 unsupported")
    if any(d > 0xFFFF for d in arr.shape):
        raise InvalidArgumentError("dimension exceeds uint16")
    dims = list(arr.shape) + [0] * (4 - arr.ndim)
    fh.write(_HEADER.pack(_MAGIC, 1, _CODES[arr.dtype], arr.ndim, *dims))
    fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_tensor(fh) -> np.ndarray:
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise InvalidArgumentError("truncated tensor header")
    magic, version, code, rank, *dims = _HEADER.unpack(raw)
    if magic != _MAGIC or version != 1 or code not in _DTYPES:
        raise InvalidArgumentError("bad tensor header")
    shape = tuple(dims[:rank])
    dtype = np.dtype(_DTYPES[code])
    n = int(np.prod(shape)) if rank else 1
    data = np.frombuffer(fh.read(n * dtype.itemsize), dtype=dtype)
    return data.reshape(shape).astype(np.float64)


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_bundle(path, meta: dict, tensors: dict) -> None:
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BUNDLE_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in sorted(tensors):
            enc = name.encode("utf-8")
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            write_tensor(fh, tensors[name])


def load_bundle(path):
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != _BUNDLE_MAGIC:
            raise InvalidArgumentError(f"{path} is not a parameter bundle")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        tensors = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            (n,) = struct.unpack("<H", head)
            name = fh.read(n).decode("utf-8")
            tensors[name] = read_tensor(fh)
    return meta, tensors
