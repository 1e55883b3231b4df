"""Deterministic persistence: CSV series, JSON verdicts, binary snapshots.

Every writer is byte-deterministic for identical inputs: column order is the
caller's insertion order, JSON keys are sorted, floats are rendered in their
shortest round-trip form (17 significant digits for CSV), and snapshots are
raw little-endian buffers behind a self-describing header.
"""

from __future__ import annotations

import json
import struct
from typing import Mapping

import numpy as np

__all__ = [
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
    "format_float",
    "write_series",
    "read_series",
    "write_verdicts",
    "read_verdicts",
    "write_snapshot",
    "read_snapshot",
]

SNAPSHOT_MAGIC = b"NSFB"
SNAPSHOT_VERSION = 1


def format_float(value: float) -> str:
    """Render with 17 significant digits: parses back to the same double."""

    return f"{float(value):.17g}"


# --------------------------------------------------------------------------
# CSV series
# --------------------------------------------------------------------------


def write_series(path, columns: Mapping[str, np.ndarray]) -> None:
    """Write named columns as CSV; order is the mapping's insertion order."""

    names = list(columns)
    if not names:
        raise ValueError("a series needs at least one column")
    arrays = [np.asarray(columns[name], dtype=float).ravel() for name in names]
    length = len(arrays[0])
    for name, arr in zip(names, arrays):
        if len(arr) != length:
            raise ValueError(
                f"column {name!r} has {len(arr)} entries; expected {length}")
    lines = [",".join(names)]
    for k in range(length):
        lines.append(",".join(format_float(arr[k]) for arr in arrays))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series(path) -> dict[str, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty series file")
    names = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    for k, row in enumerate(rows):
        if len(row) != len(names):
            raise ValueError(
                f"{path}: row {k + 1} has {len(row)} fields; header has {len(names)}")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    data = data.reshape(-1, len(names))
    return {name: data[:, j].copy() for j, name in enumerate(names)}


# --------------------------------------------------------------------------
# JSON verdicts
# --------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__} into a verdict file")


def write_verdicts(path, verdicts: Mapping) -> None:
    text = json.dumps(verdicts, indent=2, sort_keys=True, default=_jsonable)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")


def read_verdicts(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# binary field snapshots
# --------------------------------------------------------------------------
#
# layout (all little-endian):
#   magic   4 bytes  b"NSFB"
#   version u32
#   nfields u32
#   then per field:
#     name_len  u16, name utf-8
#     dtype_len u16, dtype string (numpy .str, e.g. "<f8")
#     ndim      u32, dims u64 * ndim
#     payload   raw C-order buffer


def write_snapshot(path, fields: Mapping[str, np.ndarray]) -> None:
    chunks = [SNAPSHOT_MAGIC, struct.pack("<II", SNAPSHOT_VERSION, len(fields))]
    for name, raw in fields.items():
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
        # and tobytes(order="C") already emits contiguous bytes
        arr = np.asarray(raw)
        name_b = name.encode("utf-8")
        dtype_b = arr.dtype.str.encode("ascii")
        chunks.append(struct.pack("<H", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<H", len(dtype_b)))
        chunks.append(dtype_b)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Cursor:
    def __init__(self, buf: bytes, label: str):
        self.buf = buf
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ValueError(f"{self.label}: truncated snapshot file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_snapshot(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read(), str(path))
    if cur.take(4) != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    version, nfields = cur.unpack("<II")
    if version != SNAPSHOT_VERSION:
        raise ValueError(
            f"{path}: snapshot format version {version} is not supported; "
            f"this reader handles version {SNAPSHOT_VERSION}")
    fields: dict[str, np.ndarray] = {}
    for _ in range(nfields):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        (dtype_len,) = cur.unpack("<H")
        dtype = np.dtype(cur.take(dtype_len).decode("ascii"))
        (ndim,) = cur.unpack("<I")
        dims = cur.unpack(f"<{ndim}Q") if ndim else ()
        nbytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        payload = cur.take(nbytes)
        arr = np.frombuffer(payload, dtype=dtype)
        fields[name] = arr.reshape(dims).copy() if ndim else arr.copy().reshape(())
    if cur.pos != len(cur.buf):
        raise ValueError(f"{path}: {len(cur.buf) - cur.pos} trailing bytes after the last field")
    return fields
