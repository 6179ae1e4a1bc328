"""Byte layout for model state kept in non-volatile slots.

A blob is one version byte, an array count, then each array as
``dtype code (u8), ndim (u8), shape (u32 each), little-endian data``.
"""

from __future__ import annotations

import struct

import numpy as np

VERSION = 1

_CODES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_DTYPES = {np.dtype("<f8"): 0, np.dtype("<i8"): 1}


class CodecError(ValueError):
    pass


def pack(*arrays) -> bytes:
    out = [struct.pack("<BI", VERSION, len(arrays))]
    for a in arrays:
        a = np.asarray(a)
        dt = np.dtype("<i8") if a.dtype.kind in "biu" else np.dtype("<f8")
        a = np.ascontiguousarray(a, dtype=dt)
        out.append(struct.pack("<BB", _DTYPES[dt], a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    return b"".join(out)


def unpack(blob: bytes) -> list[np.ndarray]:
    version, count = struct.unpack_from("<BI", blob, 0)
    if version != VERSION:
        raise CodecError(f"unsupported blob version {version}")
    off = 5
    arrays = []
    for _ in range(count):
        code, ndim = struct.unpack_from("<BB", blob, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        dt = _CODES[code]
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype=dt, count=n, offset=off).reshape(shape)
        off += n * dt.itemsize
        arrays.append(arr.copy())
    if off != len(blob):
        raise CodecError("trailing bytes in blob")
    return arrays
