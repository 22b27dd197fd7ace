"""Versioned binary checkpoint container.

Layout (little-endian)::

    b"ASMA" | u32 version | u32 record count
    per record: u32 name length | name (utf-8) | u8 kind | payload
      kind 0 (array): u8 dtype code | u32 ndim | u64 dims[ndim] | u64 nbytes | raw bytes
      kind 1 (json):  u64 nbytes | utf-8 JSON
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"ASMA"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_CODES = {v: k for k, v in _DTYPES.items()}


class CheckpointError(ValueError):
    pass


def _dtype_code(a: np.ndarray) -> int:
    dt = a.dtype.newbyteorder("<") if a.dtype.byteorder not in ("|",) else a.dtype
    try:
        return _CODES[np.dtype(dt)]
    except KeyError:
        raise CheckpointError(f"unsupported dtype {a.dtype}") from None


def encode(records: dict) -> bytes:
    """Serialize {name: ndarray | json-able} to bytes."""
    parts = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, value in records.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)) + nb)
        if isinstance(value, np.ndarray):
            code = _dtype_code(value)
            arr = np.asarray(value, dtype=_DTYPES[code], order="C")  # ascontiguousarray would promote rank 0
            parts.append(struct.pack("<BBI", 0, code, arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            raw = arr.tobytes()
            parts.append(struct.pack("<Q", len(raw)) + raw)
        else:
            raw = json.dumps(value, sort_keys=True).encode("utf-8")
            parts.append(struct.pack("<BQ", 1, len(raw)) + raw)
    return b"".join(parts)


def decode(buf: bytes) -> "OrderedDict[str, object]":
    if buf[:4] != MAGIC:
        raise CheckpointError("not an ASMA checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out: OrderedDict[str, object] = OrderedDict()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (kind,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            if kind == 0:
                code, ndim = struct.unpack_from("<BI", buf, pos)
                pos += 5
                shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
                pos += 8 * ndim
                (nbytes,) = struct.unpack_from("<Q", buf, pos)
                pos += 8
                dt = _DTYPES[code]
                out[name] = np.frombuffer(buf[pos : pos + nbytes], dtype=dt).reshape(shape).copy()
                pos += nbytes
            elif kind == 1:
                (nbytes,) = struct.unpack_from("<Q", buf, pos)
                pos += 8
                out[name] = json.loads(buf[pos : pos + nbytes].decode("utf-8"))
                pos += nbytes
            else:
                raise CheckpointError(f"unknown record kind {kind}")
    except (struct.error, KeyError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return out


def save(path: str | Path, records: dict) -> None:
    """Atomic write: a crash mid-save leaves any previous file intact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(encode(records))
    os.replace(tmp, path)


def load(path: str | Path) -> "OrderedDict[str, object]":
    return decode(Path(path).read_bytes())
