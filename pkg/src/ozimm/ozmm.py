"""OZMM binary matrix files.

Layout (little-endian): magic ``b"OZMM"``, u32 version, u64 rows,
u64 cols, u8 flag (0 real, 1 complex), then row-major FP64 payload with
(re, im) interleaved for complex matrices.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"OZMM"
VERSION = 1
_HEADER = struct.Struct("<4sIQQB")


def write_ozmm(path: os.PathLike | str, m) -> None:
    m = np.asarray(m)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError("only matrices and vectors can be stored")
    cpx = np.iscomplexobj(m)
    payload = np.ascontiguousarray(m, dtype="<c16" if cpx else "<f8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1], int(cpx)))
        f.write(payload.tobytes())


def read_ozmm(path: os.PathLike | str) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError("truncated OZMM header")
        magic, version, rows, cols, flag = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported OZMM version {version}")
        if flag not in (0, 1):
            raise ValueError(f"bad type flag {flag}")
        dtype = np.dtype("<c16" if flag else "<f8")
        data = f.read()
    if len(data) != rows * cols * dtype.itemsize:
        raise ValueError("payload size does not match header")
    return np.frombuffer(data, dtype=dtype).reshape(rows, cols).astype(dtype.newbyteorder("="))
