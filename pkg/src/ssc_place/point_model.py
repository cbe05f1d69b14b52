"""Semantic class taxonomy, labeled point clouds and class priorities.

Raw SemanticKITTI labels are 32-bit: the low 16 bits hold the semantic id and
the high 16 bits an instance id.  Raw ids are folded onto the 19 training
classes (moving objects onto their static counterparts) plus ``UNLABELED``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np


class SemanticClass(enum.IntEnum):
    UNLABELED = 0
    CAR = 1
    BICYCLE = 2
    MOTORCYCLE = 3
    TRUCK = 4
    OTHER_VEHICLE = 5
    PERSON = 6
    BICYCLIST = 7
    MOTORCYCLIST = 8
    ROAD = 9
    PARKING = 10
    SIDEWALK = 11
    OTHER_GROUND = 12
    BUILDING = 13
    FENCE = 14
    VEGETATION = 15
    TRUNK = 16
    TERRAIN = 17
    POLE = 18
    TRAFFIC_SIGN = 19

    @property
    def label_name(self) -> str:
        """Dataset spelling, e.g. ``traffic-sign``."""
        return self.name.lower().replace("_", "-")

    @classmethod
    def from_name(cls, name: str) -> "SemanticClass":
        return cls[name.strip().upper().replace("-", "_")]

    @property
    def raw_id(self) -> int:
        """Canonical (static) raw SemanticKITTI id of the class."""
        return _CANONICAL_RAW[self]


N_CLASSES = len(SemanticClass)

# SemanticKITTI learning map (semantic-kitti.yaml, ``learning_map``).
LEARNING_MAP: dict[int, SemanticClass] = {
    0: SemanticClass.UNLABELED,
    1: SemanticClass.UNLABELED,  # outlier
    10: SemanticClass.CAR,
    11: SemanticClass.BICYCLE,
    13: SemanticClass.OTHER_VEHICLE,  # bus
    15: SemanticClass.MOTORCYCLE,
    16: SemanticClass.OTHER_VEHICLE,  # on-rails
    18: SemanticClass.TRUCK,
    20: SemanticClass.OTHER_VEHICLE,
    30: SemanticClass.PERSON,
    31: SemanticClass.BICYCLIST,
    32: SemanticClass.MOTORCYCLIST,
    40: SemanticClass.ROAD,
    44: SemanticClass.PARKING,
    48: SemanticClass.SIDEWALK,
    49: SemanticClass.OTHER_GROUND,
    50: SemanticClass.BUILDING,
    51: SemanticClass.FENCE,
    52: SemanticClass.UNLABELED,  # other-structure
    60: SemanticClass.ROAD,  # lane-marking
    70: SemanticClass.VEGETATION,
    71: SemanticClass.TRUNK,
    72: SemanticClass.TERRAIN,
    80: SemanticClass.POLE,
    81: SemanticClass.TRAFFIC_SIGN,
    99: SemanticClass.UNLABELED,  # other-object
    252: SemanticClass.CAR,
    253: SemanticClass.BICYCLIST,
    254: SemanticClass.PERSON,
    255: SemanticClass.MOTORCYCLIST,
    256: SemanticClass.OTHER_VEHICLE,
    257: SemanticClass.OTHER_VEHICLE,
    258: SemanticClass.TRUCK,
    259: SemanticClass.OTHER_VEHICLE,
}

_CANONICAL_RAW = {
    SemanticClass.UNLABELED: 0,
    SemanticClass.CAR: 10,
    SemanticClass.BICYCLE: 11,
    SemanticClass.MOTORCYCLE: 15,
    SemanticClass.TRUCK: 18,
    SemanticClass.OTHER_VEHICLE: 20,
    SemanticClass.PERSON: 30,
    SemanticClass.BICYCLIST: 31,
    SemanticClass.MOTORCYCLIST: 32,
    SemanticClass.ROAD: 40,
    SemanticClass.PARKING: 44,
    SemanticClass.SIDEWALK: 48,
    SemanticClass.OTHER_GROUND: 49,
    SemanticClass.BUILDING: 50,
    SemanticClass.FENCE: 51,
    SemanticClass.VEGETATION: 70,
    SemanticClass.TRUNK: 71,
    SemanticClass.TERRAIN: 72,
    SemanticClass.POLE: 80,
    SemanticClass.TRAFFIC_SIGN: 81,
}

# Dense lookup over the full 16-bit semantic id space.
_LUT = np.zeros(1 << 16, dtype=np.uint8)
for _raw, _cls in LEARNING_MAP.items():
    _LUT[_raw] = _cls


def remap_label(raw: int) -> SemanticClass:
    """Map a raw 32-bit label to its class; unknown ids become UNLABELED."""
    return SemanticClass(int(_LUT[int(raw) & 0xFFFF]))


def remap_labels(raw: np.ndarray) -> np.ndarray:
    """Vectorised :func:`remap_label` returning ``uint8`` class codes."""
    raw = np.asarray(raw, dtype=np.uint32)
    return _LUT[raw & 0xFFFF]


class SemanticPoint(NamedTuple):
    x: float
    y: float
    z: float
    label: SemanticClass


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    """Points in the sensor frame with one class code per point.

    ``xyz`` is an ``(n, 3)`` float64 array, ``labels`` an ``(n,)`` uint8 array
    of :class:`SemanticClass` codes.  Order is the scan order.
    """

    xyz: np.ndarray
    labels: np.ndarray
    frame_id: int = 0

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if xyz.shape[0] != labels.shape[0]:
            raise ValueError(
                f"{xyz.shape[0]} points but {labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        if labels.size and labels.max() >= N_CLASSES:
            raise ValueError("label codes must be SemanticClass values")
        if self.frame_id < 0:
            raise ValueError("frame_id must be non-negative")
        xyz.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, frame_id: int = 0) -> "LabeledCloud":
        return cls(np.empty((0, 3)), np.empty(0, dtype=np.uint8), frame_id)

    @classmethod
    def from_points(cls, points: Iterable[SemanticPoint], frame_id: int = 0) -> "LabeledCloud":
        pts = list(points)
        if not pts:
            return cls.empty(frame_id)
        xyz = np.array([(p.x, p.y, p.z) for p in pts], dtype=np.float64)
        labels = np.array([int(p.label) for p in pts], dtype=np.uint8)
        return cls(xyz, labels, frame_id)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def __getitem__(self, i: int) -> SemanticPoint:
        x, y, z = self.xyz[i]
        return SemanticPoint(float(x), float(y), float(z), SemanticClass(int(self.labels[i])))

    def __iter__(self) -> Iterator[SemanticPoint]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, mask: np.ndarray) -> "LabeledCloud":
        """Points selected by a boolean mask or an index array, in order."""
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return LabeledCloud(self.xyz.take(idx, axis=0), self.labels.take(idx), self.frame_id)

    def with_labels(self, labels: np.ndarray) -> "LabeledCloud":
        return LabeledCloud(self.xyz, labels, self.frame_id)


@dataclass(frozen=True)
class PriorityTable:
    """Representativeness rank per class code (higher wins a block).

    ``ranks[c]`` is the rank of class code ``c``; the ranks are a permutation
    of ``0..19`` and ``UNLABELED`` always holds rank 0.
    """

    ranks: tuple[int, ...] = field(default_factory=lambda: tuple(_DEFAULT_RANKS))

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        if sorted(ranks) != list(range(N_CLASSES)):
            raise ValueError("priority ranks must be a permutation of 0..19")
        if ranks[SemanticClass.UNLABELED] != 0:
            raise ValueError("unlabeled must hold the lowest rank")
        object.__setattr__(self, "ranks", ranks)

    def rank(self, cls: SemanticClass | int) -> int:
        return self.ranks[int(cls)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ranks, dtype=np.uint8)

    def class_by_rank(self) -> np.ndarray:
        """Inverse permutation: class code holding each rank."""
        inv = np.empty(N_CLASSES, dtype=np.uint8)
        inv[self.as_array()] = np.arange(N_CLASSES, dtype=np.uint8)
        return inv

    def ordered(self) -> list[SemanticClass]:
        """Classes from most to least representative."""
        return [SemanticClass(int(c)) for c in self.class_by_rank()[::-1]]

    def to_text(self) -> str:
        return "".join(f"{c.label_name} {self.rank(c)}\n" for c in self.ordered())

    @classmethod
    def from_text(cls, text: str) -> "PriorityTable":
        ranks = {}
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {line_no}: expected 'class-name rank'")
            try:
                ranks[SemanticClass.from_name(parts[0])] = int(parts[1])
            except KeyError:
                raise ValueError(f"line {line_no}: unknown class {parts[0]!r}") from None
        if len(ranks) != N_CLASSES:
            missing = sorted(c.label_name for c in SemanticClass if c not in ranks)
            raise ValueError(f"priority file misses classes: {', '.join(missing)}")
        return cls(tuple(ranks[c] for c in SemanticClass))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PriorityTable":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


# Most to least representative; rare street furniture above surfaces.
DEFAULT_ORDER = (
    SemanticClass.TRAFFIC_SIGN,
    SemanticClass.POLE,
    SemanticClass.TRUNK,
    SemanticClass.PERSON,
    SemanticClass.BICYCLIST,
    SemanticClass.MOTORCYCLIST,
    SemanticClass.BICYCLE,
    SemanticClass.MOTORCYCLE,
    SemanticClass.TRUCK,
    SemanticClass.OTHER_VEHICLE,
    SemanticClass.CAR,
    SemanticClass.FENCE,
    SemanticClass.BUILDING,
    SemanticClass.OTHER_GROUND,
    SemanticClass.PARKING,
    SemanticClass.SIDEWALK,
    SemanticClass.TERRAIN,
    SemanticClass.VEGETATION,
    SemanticClass.ROAD,
    SemanticClass.UNLABELED,
)

_DEFAULT_RANKS = [0] * N_CLASSES
for _i, _cls in enumerate(DEFAULT_ORDER):
    _DEFAULT_RANKS[_cls] = N_CLASSES - 1 - _i


def default_priority() -> PriorityTable:
    return PriorityTable(tuple(_DEFAULT_RANKS))
