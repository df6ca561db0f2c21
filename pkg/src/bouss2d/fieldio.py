"""Binary snapshot format for scalar fields.

Layout (all little-endian):
    bytes  0..11   magic b"TORUS2D.FLD\\0"
    bytes 12..15   uint32 format version (currently 1)
    bytes 16..23   uint64 n (points per axis)
    bytes 24..31   float64 L (box scale; edge is 2*pi*L)
    bytes 32..     n*n float64 physical samples, row-major (values[i, j] =
                   f(x1_i, x2_j))

Round trips are bit-exact: read(write(f)) returns the same samples.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SnapshotFormatError
from .spectral import Grid, ScalarSpectralField, to_physical, to_spectral

MAGIC = b"TORUS2D.FLD\x00"
VERSION = 1
_HEADER = struct.Struct("<12sIQd")


def write_snapshot(path: str | Path, field: ScalarSpectralField) -> None:
    values = np.ascontiguousarray(to_physical(field), dtype="<f8")
    header = _HEADER.pack(MAGIC, VERSION, field.grid.n, field.grid.box_length)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())


def read_samples(path: str | Path) -> tuple[np.ndarray, int, float]:
    """Decode a snapshot to its verbatim samples plus (n, L).

    The format round trip is bit-exact at this level: the returned array holds
    exactly the float64 payload that write_snapshot stored.
    """
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise SnapshotFormatError(f"{path}: truncated header")
        magic, version, n, length = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise SnapshotFormatError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
    if data.size != n * n:
        raise SnapshotFormatError(f"{path}: truncated payload")
    return data.reshape(int(n), int(n)), int(n), float(length)


def read_snapshot(
    path: str | Path, grid: Grid | None = None, dealias_fraction: float = 2.0 / 3.0
) -> ScalarSpectralField:
    """Load a snapshot; pass `grid` to enforce a match with an existing grid."""
    data, n, length = read_samples(path)
    if grid is None:
        grid = Grid(n, length, dealias_fraction)
    elif grid.n != n or grid.box_length != length:
        raise SnapshotFormatError(
            f"{path}: header (n={n}, L={length}) does not match grid "
            f"(n={grid.n}, L={grid.box_length})"
        )
    return to_spectral(data, grid)
