"""ELPT binary format for PropagatedTensor.

Layout, all little-endian::

    magic    4 bytes  b"ELPT"
    version  u16      1
    flags    u16      bit0 = column 0 is a retention column
    rows     u64
    cols     u64
    dtype    u8       0 = f32, 1 = f64
    payload  rows * cols values, row-major

Metadata goes to a JSON sidecar at ``<path>.json``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError
from .propagation import PropagatedTensor

MAGIC = b"ELPT"
VERSION = 1
FLAG_RETENTION = 0x1
_HEADER = struct.Struct("<4sHHQQB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}


def sidecar_path(path) -> str:
    return f"{path}.json"


def write_elpt(path, tensor: PropagatedTensor, dtype="f8", meta: dict | None = None):
    dt = np.dtype(dtype).newbyteorder("<")
    if dt not in _CODES:
        raise FormatError(f"unsupported dtype {dtype!r}; ELPT stores f4 or f8")
    values = np.ascontiguousarray(tensor.values, dtype=dt)
    if values.ndim != 2:
        raise FormatError("ELPT stores 2-d tensors only")
    rows, cols = values.shape
    flags = FLAG_RETENTION if tensor.has_retention else 0
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, flags, rows, cols, _CODES[dt]))
            fh.write(values.tobytes(order="C"))
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump({**tensor.meta, **(meta or {})}, fh, indent=2, sort_keys=True, default=str)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_elpt(path, with_meta: bool = True) -> PropagatedTensor:
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise FormatError(f"{path}: truncated header")
            magic, version, flags, rows, cols, code = _HEADER.unpack(head)
            if magic != MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}")
            if version != VERSION:
                raise FormatError(f"{path}: unsupported version {version}")
            if code not in _DTYPES:
                raise FormatError(f"{path}: unknown dtype code {code}")
            dt = _DTYPES[code]
            payload = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(payload) != rows * cols * dt.itemsize:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, header promises {rows * cols * dt.itemsize}")
    values = np.frombuffer(payload, dtype=dt).reshape(rows, cols).astype(np.float64)
    meta = {}
    if with_meta:
        try:
            with open(sidecar_path(path), encoding="utf-8") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            pass
    return PropagatedTensor(values, bool(flags & FLAG_RETENTION), meta)
