"""RSFD binary field snapshots.

Layout (little-endian): magic ``b"RSFD"``, version u32 = 1, n_x u32, n_y u32,
representation u8 (0 physical, 1 mixed), L f64, time f64, then the two fields
as n_x * n_y complex values each, stored as (re f64, im f64), x-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .spectral import MIXED, PHYSICAL, LineGrid, ProductField, TorusGrid

MAGIC = b"RSFD"
VERSION = 1
_HEADER = struct.Struct("<4sIIIBdd")
_TAGS = {PHYSICAL: 0, MIXED: 1}


class SnapshotError(ValueError):
    pass


def encode_snapshot(first: ProductField, second: ProductField, t: float) -> bytes:
    if not first.same_grid(second) or first.representation != second.representation:
        raise SnapshotError("snapshot fields must share grid and representation")
    line, torus = first.line, first.torus
    header = _HEADER.pack(MAGIC, VERSION, line.n_x, torus.n_y,
                          _TAGS[first.representation], float(line.L), float(t))
    body = b"".join(np.ascontiguousarray(f.data, dtype="<c16").tobytes() for f in (first, second))
    return header + body


def decode_snapshot(raw: bytes) -> tuple[ProductField, ProductField, float]:
    if len(raw) < _HEADER.size:
        raise SnapshotError("truncated header")
    magic, version, n_x, n_y, tag, L, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"unsupported version {version}")
    if n_y % 2 != 1:
        raise SnapshotError(f"n_y must be odd, got {n_y}")
    rep = {v: k for k, v in _TAGS.items()}.get(tag)
    if rep is None:
        raise SnapshotError(f"unknown representation tag {tag}")
    count = n_x * n_y
    expected = _HEADER.size + 2 * 16 * count
    if len(raw) != expected:
        raise SnapshotError(f"payload size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(2, n_x, n_y)
    line, torus = LineGrid(L, n_x), TorusGrid((n_y - 1) // 2)
    fields = [ProductField(d.astype(complex), line, torus, rep) for d in data]
    return fields[0], fields[1], t


def write_snapshot(path, first: ProductField, second: ProductField, t: float) -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(first, second, t))
    return path


def read_snapshot(path) -> tuple[ProductField, ProductField, float]:
    return decode_snapshot(Path(path).read_bytes())
