"""Binary field snapshots.

Layout: ``b"BNLS1"``, a little-endian uint32 header length, a UTF-8 JSON
header ``{d, n, L, N_x, N_y, alpha, beta, tag}``, then interleaved
``(re, im)`` little-endian float64 samples in row-major order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import Field, make_grid

MAGIC = b"BNLS1"
HEADER_KEYS = ("d", "n", "L", "N_x", "N_y", "alpha", "beta", "tag")


def encode_snapshot(u: Field, alpha: float | None = None, beta: float | None = None, tag: str = "") -> bytes:
    g = u.grid
    header = {**g.to_dict(), "alpha": alpha, "beta": beta, "tag": tag}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(u.values, dtype="<c16").tobytes()
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + body


def decode_snapshot(data: bytes) -> tuple[Field, dict]:
    if data[:5] != MAGIC:
        raise ValueError("not a BNLS1 snapshot (bad magic bytes)")
    (hlen,) = struct.unpack("<I", data[5:9])
    header = json.loads(data[9 : 9 + hlen].decode("utf-8"))
    missing = [k for k in HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"snapshot header missing keys: {missing}")
    grid = make_grid(header["d"], header["n"], header["L"], header["N_x"], header["N_y"])
    raw = np.frombuffer(data[9 + hlen :], dtype="<c16")
    if raw.size != grid.size:
        raise ValueError(f"snapshot body has {raw.size} samples, expected {grid.size}")
    return Field(grid, raw.reshape(grid.shape)), header


def write_snapshot(path, u: Field, alpha=None, beta=None, tag: str = "") -> Path:
    path = Path(path)
    path.write_bytes(encode_snapshot(u, alpha, beta, tag))
    return path


def read_snapshot(path) -> tuple[Field, dict]:
    return decode_snapshot(Path(path).read_bytes())
