"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic       4 bytes   b"DSAW"
    version     u32       currently 1
    count       u32       number of parameters
    per parameter:
        name_len  u32
        name      name_len bytes, UTF-8
        dtype     u8        0 = float32, 1 = float64
        rank      u32
        dims      rank x u64
        data      prod(dims) scalars, little-endian, row-major
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from ..errors import FormatError

MAGIC = b"DSAW"
VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_checkpoint(path, params: Mapping[str, np.ndarray]):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr)
            if arr.dtype not in _DTYPE_TAGS:
                raise FormatError(f"unsupported dtype {arr.dtype} for {name!r}", path)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BI", _DTYPE_TAGS[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError("not a DSAW checkpoint (bad magic)", path)
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError("truncated checkpoint", path)
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, count = take("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", path)
    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = take("<I")
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        tag, rank = take("<BI")
        if tag not in _TAG_DTYPES:
            raise FormatError(f"unknown dtype tag {tag} for {name!r}", path)
        dims = take(f"<{rank}Q") if rank else ()
        dt = _TAG_DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if pos + nbytes > len(buf):
            raise FormatError(f"truncated data for {name!r}", path)
        arr = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos)
        pos += nbytes
        out[name] = arr.reshape(dims).astype(dt.newbyteorder("="))
    return out
