"""Representative-class filtering and the nearest-point azimuth ring."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DegeneratePointError
from .point_model import LabeledCloud, SemanticClass

REPRESENTATIVE_CLASSES = frozenset(
    {SemanticClass.BUILDING, SemanticClass.TRUNK, SemanticClass.TRAFFIC_SIGN, SemanticClass.POLE}
)


@dataclass(frozen=True)
class SicpParams:
    """Ring size, correspondence window and ICP stopping rule.

    ``refine_passes`` extra yaw + translation passes run on the second cloud
    after moving it by the running estimate (0 gives a single pass).
    """

    na: int = 360
    nl: int = 20
    max_iters: int = 30
    converge_eps: float = 1e-3
    refine_passes: int = 1

    def __post_init__(self):
        if self.na < 4:
            raise ValueError("na must be >= 4")
        if not 0 < self.nl <= self.na:
            raise ValueError("nl must satisfy 0 < nl <= na")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.converge_eps > 0:
            raise ValueError("converge_eps must be > 0")
        if self.refine_passes < 0:
            raise ValueError("refine_passes must be >= 0")


@dataclass(frozen=True, eq=False)
class RingProjection:
    """One slot per azimuth sector, holding that sector's nearest point.

    Arrays are indexed by sector ``k`` (sector 0 starts at -pi):
    ``occupied`` (bool), ``radius`` (NaN when empty), ``xy`` (NaN when empty)
    and ``labels`` (0 when empty).
    """

    occupied: np.ndarray
    radius: np.ndarray
    xy: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        for name in ("occupied", "radius", "xy", "labels"):
            getattr(self, name).setflags(write=False)

    @property
    def na(self) -> int:
        return self.occupied.shape[0]

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    @classmethod
    def from_arrays(cls, occupied, xy, labels) -> "RingProjection":
        occupied = np.asarray(occupied, dtype=bool).copy()
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2).copy()
        labels = np.asarray(labels, dtype=np.uint8).copy()
        xy[~occupied] = np.nan
        labels[~occupied] = 0
        radius = np.hypot(xy[:, 0], xy[:, 1])
        return cls(occupied, radius, xy, labels)

    def shifted(self, m: int) -> "RingProjection":
        """Cyclic shift: slot ``(k + m) % na`` of the result holds slot ``k``."""
        return RingProjection(
            np.roll(self.occupied, m), np.roll(self.radius, m),
            np.roll(self.xy, m, axis=0), np.roll(self.labels, m),
        )


def filter_representative(cloud: LabeledCloud, classes=REPRESENTATIVE_CLASSES) -> LabeledCloud:
    """Keep points whose class is in ``classes``, preserving order."""
    keep = np.zeros(len(cloud), dtype=bool)
    for c in classes:
        keep |= cloud.labels == int(c)
    return cloud.subset(keep)


class PlanarPoints(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray


def planar_points(cloud: LabeledCloud, classes=REPRESENTATIVE_CLASSES) -> PlanarPoints:
    """Planar coordinates and labels of the points whose class is in ``classes``.

    Same selection as :func:`filter_representative` without building a cloud.
    """
    keep = np.zeros(len(cloud), dtype=bool)
    for c in classes:
        keep |= cloud.labels == int(c)
    idx = np.flatnonzero(keep)
    return PlanarPoints(cloud.xyz[:, 0].take(idx), cloud.xyz[:, 1].take(idx), cloud.labels.take(idx))


def to_polar(x, y):
    """Polar radius and quadrant-aware angle in ``[-pi, pi)``.

    Works on scalars and arrays; the origin has no angle and is rejected.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = np.hypot(x, y)
    if np.any(r == 0):
        raise DegeneratePointError("the origin has no polar angle")
    phi = np.arctan2(y, x)
    phi = np.where(phi >= math.pi, -math.pi, phi)
    if phi.ndim == 0:
        return float(r), float(phi)
    return r, phi


def sector_index(phi, n: int) -> np.ndarray:
    """Sector of angle ``phi`` in ``[-pi, pi)`` for ``n`` equal sectors."""
    k = np.floor((np.asarray(phi) + math.pi) * (n / (2 * math.pi))).astype(np.int64)
    return np.clip(k, 0, n - 1)


def build_ring(cloud: LabeledCloud, na: int = 360) -> RingProjection:
    """Reduce a filtered cloud to its minimum-radius point per sector.

    Points at the origin carry no azimuth and are skipped.  Radius ties are
    broken by ``(x, y, label)`` so the result ignores input order.
    """
    return ring_from_arrays(cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.labels, na)


def ring_from_arrays(x: np.ndarray, y: np.ndarray, lab: np.ndarray, na: int = 360) -> RingProjection:
    """:func:`build_ring` on planar coordinate and label arrays."""
    occupied = np.zeros(na, dtype=bool)
    xy = np.full((na, 2), np.nan)
    labels = np.zeros(na, dtype=np.uint8)
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    r = np.sqrt(x * x + y * y)
    keep = r > 0
    if not keep.all():
        if not keep.any():
            return RingProjection.from_arrays(occupied, xy, labels)
        x, y, r, lab = x[keep], y[keep], r[keep], lab[keep]
    phi = np.arctan2(y, x)
    phi[phi >= math.pi] = -math.pi
    # truncation is floor here since the shifted angle is non-negative
    k = ((phi + math.pi) * (na / (2 * math.pi))).astype(np.int64)
    np.minimum(k, na - 1, out=k)

    min_r = np.full(na, np.inf)
    np.minimum.at(min_r, k, r)
    cand = np.flatnonzero(r == min_r[k])
    sectors = np.flatnonzero(min_r < np.inf)
    if len(cand) > len(sectors):
        # ties within a sector: lowest x, then y, then label, then scan order
        for key in (x, y, lab):
            kc, v = k[cand], key[cand].astype(np.float64)
            best = np.full(na, np.inf)
            np.minimum.at(best, kc, v)
            cand = cand[v == best[kc]]
        first = np.full(na, len(x), dtype=np.int64)
        np.minimum.at(first, k[cand], cand)
        winners = first[sectors]
    else:
        winners = cand[np.argsort(k[cand])]
    occupied[sectors] = True
    xy[sectors, 0] = x[winners]
    xy[sectors, 1] = y[winners]
    labels[sectors] = lab[winners]
    radius = np.full(na, np.nan)
    radius[sectors] = r[winners]
    return RingProjection(occupied, radius, xy, labels)
