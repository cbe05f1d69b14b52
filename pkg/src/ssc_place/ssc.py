"""Semantic Scan Context: a polar grid holding the most representative class
of each block, and the indicator-based similarity between two grids."""
from __future__ import annotations

import csv
import io
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ShapeError
from .point_model import LabeledCloud, PriorityTable, SemanticClass, default_priority

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class SscParams:
    ns: int = 360
    nr: int = 50
    rmax: float = 50.0

    def __post_init__(self):
        if self.ns < 1 or self.nr < 1:
            raise ValueError("ns and nr must be >= 1")
        if not self.rmax > 0:
            raise ValueError("rmax must be > 0")


@dataclass(frozen=True, eq=False)
class SscDescriptor:
    """``(nr, ns)`` grid of class codes, row ``i`` = ring, column ``j`` = sector.

    Code 0 marks an empty block.
    """

    grid: np.ndarray
    params: SscParams = SscParams()

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.uint8)
        if grid.shape != (self.params.nr, self.params.ns):
            raise ShapeError(
                f"grid shape {grid.shape} does not match (nr, ns) = "
                f"({self.params.nr}, {self.params.ns})"
            )
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def occupancy(self) -> float:
        return float(np.count_nonzero(self.grid)) / self.grid.size

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.grid.reshape(-1), minlength=len(SemanticClass))
        return {
            SemanticClass(c).label_name: int(n)
            for c, n in enumerate(counts[: len(SemanticClass)])
            if c and n
        }

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.params.ns, self.params.nr) + self.grid.tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes, rmax: float = 50.0) -> "SscDescriptor":
        if len(data) < _HEADER.size:
            raise ShapeError("descriptor blob shorter than its header")
        ns, nr = _HEADER.unpack_from(data)
        body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
        if body.size != ns * nr:
            raise ShapeError(f"descriptor body holds {body.size} bytes, expected {ns * nr}")
        return cls(body.reshape(nr, ns).copy(), SscParams(ns, nr, rmax))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path, rmax: float = 50.0) -> "SscDescriptor":
        return cls.from_bytes(Path(path).read_bytes(), rmax)

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.grid.tolist())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, rmax: float = 50.0) -> "SscDescriptor":
        rows = [list(map(int, row)) for row in csv.reader(io.StringIO(text)) if row]
        grid = np.array(rows, dtype=np.uint8)
        return cls(grid, SscParams(grid.shape[1], grid.shape[0], rmax))


def block_index(r: float, phi: float, params: SscParams = SscParams()):
    """1-based ``(ring, sector)`` of a polar coordinate, or ``None`` past ``rmax``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    if r >= params.rmax:
        return None
    if phi >= math.pi:
        phi = -math.pi
    i = int(math.floor(r * params.nr / params.rmax)) + 1
    j = int(math.floor((phi + math.pi) * params.ns / (2 * math.pi))) + 1
    return min(i, params.nr), min(max(j, 1), params.ns)


def _cell_indices(xyz: np.ndarray, params: SscParams, keep: np.ndarray | None = None):
    """Flat cell index of the points inside ``rmax`` (and ``keep``), plus
    the indices of those points into ``xyz``."""
    x, y = xyz[:, 0], xyz[:, 1]
    r = np.sqrt(x * x + y * y)
    valid = r < params.rmax
    if keep is not None:
        valid &= keep
    idx = np.flatnonzero(valid)
    x, y, r = x.take(idx), y.take(idx), r.take(idx)
    phi = np.arctan2(y, x)
    phi[phi >= math.pi] = -math.pi
    ring = np.minimum((r * (params.nr / params.rmax)).astype(np.int64), params.nr - 1)
    # truncation is floor here since the shifted angle is non-negative
    sector = ((phi + math.pi) * (params.ns / (2 * math.pi))).astype(np.int64)
    np.minimum(sector, params.ns - 1, out=sector)
    return ring * params.ns + sector, idx


def encode(
    cloud: LabeledCloud,
    params: SscParams = SscParams(),
    priority: PriorityTable | None = None,
) -> SscDescriptor:
    """Each block takes the highest-priority class among its points."""
    priority = priority or default_priority()
    cells, idx = _cell_indices(cloud.xyz, params, cloud.labels != SemanticClass.UNLABELED)
    ranks = priority.as_array()[cloud.labels.take(idx)]
    best = np.zeros(params.nr * params.ns, dtype=np.uint8)
    np.maximum.at(best, cells, ranks)
    grid = priority.class_by_rank()[best]
    return SscDescriptor(grid.reshape(params.nr, params.ns), params)


def encode_height(
    cloud: LabeledCloud,
    params: SscParams = SscParams(),
    z_range: tuple[float, float] = (-4.0, 12.0),
    n_bins: int = 20,
) -> SscDescriptor:
    """Label-free variant: each block holds its quantised maximum height.

    Codes ``1..n_bins`` are uniform bins over ``z_range`` (heights outside are
    clamped); 0 still marks an empty block.
    """
    if not 1 <= n_bins <= 255:
        raise ValueError("n_bins must fit in a byte")
    cells, idx = _cell_indices(cloud.xyz, params)
    lo, hi = z_range
    z = np.clip(cloud.xyz[:, 2].take(idx), lo, hi)
    codes = np.minimum(((z - lo) / (hi - lo) * n_bins).astype(np.int64), n_bins - 1) + 1
    grid = np.zeros(params.nr * params.ns, dtype=np.uint8)
    np.maximum.at(grid, cells, codes.astype(np.uint8))
    return SscDescriptor(grid.reshape(params.nr, params.ns), params)


def _check_shapes(s1: SscDescriptor, s2: SscDescriptor):
    if s1.grid.shape != s2.grid.shape:
        raise ShapeError(f"descriptor shapes differ: {s1.grid.shape} vs {s2.grid.shape}")


def similarity(s1: SscDescriptor, s2: SscDescriptor) -> float:
    """Fraction of jointly-relevant blocks whose codes agree.

    Blocks empty in both descriptors are ignored on both sides of the ratio,
    so the score lies in ``[0, 1]``.  Two empty descriptors score 0.
    """
    _check_shapes(s1, s2)
    a, b = s1.grid, s2.grid
    union = (a != 0) | (b != 0)
    n_union = int(np.count_nonzero(union))
    if n_union == 0:
        logger.debug("similarity of two empty descriptors")
        return 0.0
    matches = int(np.count_nonzero((a == b) & union))
    return matches / n_union


def best_column_shift(s1: SscDescriptor, s2: SscDescriptor) -> tuple[int, float]:
    """Column roll of ``s2`` maximising similarity to ``s1`` (smallest on ties).

    Returns ``(shift, score)`` where ``np.roll(s2.grid, -shift, axis=1)`` is
    the best-aligned grid.
    """
    _check_shapes(s1, s2)
    a, b = s1.grid, s2.grid
    ns = a.shape[1]
    cols = (np.arange(ns)[:, None] + np.arange(ns)[None, :]) % ns  # (shift, col)
    bs = b[:, cols]  # (nr, shift, col)
    a_nz = (a != 0)[:, None, :]
    b_nz = bs != 0
    union = (a_nz | b_nz).sum(axis=(0, 2))
    matches = ((a[:, None, :] == bs) & b_nz).sum(axis=(0, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(union > 0, matches / np.maximum(union, 1), 0.0)
    shift = int(np.argmax(scores))
    return shift, float(scores[shift])
