"""Readers and writers for KITTI odometry / SemanticKITTI files.

* ``velodyne/NNNNNN.bin``: little-endian float32 ``(x, y, z, reflectance)``
* ``labels/NNNNNN.label``: little-endian uint32 per point, low 16 bits = class
* ``poses.txt``: 12 floats per line, row-major 3x4 camera pose
* ``calib.txt``: a ``Tr:`` line holding the 3x4 LiDAR-to-camera transform
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import CalibError, LabelMismatchError, MalformedFileError, PoseParseError
from .point_model import LabeledCloud, SemanticClass, _CANONICAL_RAW, remap_labels

_SCAN_DTYPE = np.dtype("<f4")
_LABEL_DTYPE = np.dtype("<u4")
_RAW_OF_CODE = np.array([_CANONICAL_RAW[c] for c in SemanticClass], dtype=np.uint32)


def load_scan(path, frame_id: int = 0) -> LabeledCloud:
    """Read a velodyne ``.bin`` scan; every point comes back UNLABELED."""
    size = os.path.getsize(path)
    if size % 16:
        raise MalformedFileError(path, size - size % 16)
    data = np.fromfile(path, dtype=_SCAN_DTYPE).reshape(-1, 4)
    return LabeledCloud(data[:, :3], np.zeros(len(data), dtype=np.uint8), frame_id)


def load_labels(path, cloud: LabeledCloud) -> LabeledCloud:
    size = os.path.getsize(path)
    if size % 4:
        raise MalformedFileError(path, size - size % 4, "size is not a multiple of 4 bytes")
    n_labels = size // 4
    if n_labels != len(cloud):
        raise LabelMismatchError(path, n_labels, len(cloud))
    raw = np.fromfile(path, dtype=_LABEL_DTYPE)
    return cloud.with_labels(remap_labels(raw))


def write_scan(path, cloud: LabeledCloud, reflectance: float = 0.0) -> None:
    data = np.empty((len(cloud), 4), dtype=_SCAN_DTYPE)
    data[:, :3] = cloud.xyz
    data[:, 3] = reflectance
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    data.tofile(path)


def write_labels(path, cloud: LabeledCloud) -> None:
    """Write class codes as their canonical raw SemanticKITTI ids."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _RAW_OF_CODE[cloud.labels].astype(_LABEL_DTYPE).tofile(path)


def _parse_floats(tokens, path, line_no, expected=12):
    if len(tokens) != expected:
        raise PoseParseError(path, line_no, f"expected {expected} floats, got {len(tokens)}")
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise PoseParseError(path, line_no, str(exc)) from None


def _homogeneous(m34: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    out[:3, :] = m34
    return out


def orthonormalize(pose: np.ndarray) -> np.ndarray:
    """Project the rotation block onto SO(3) (nearest rotation via SVD)."""
    out = np.array(pose, dtype=np.float64, copy=True)
    u, _, vt = np.linalg.svd(out[:3, :3])
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        u[:, -1] *= -1
        rot = u @ vt
    out[:3, :3] = rot
    return out


def is_se3(pose: np.ndarray, tol: float = 1e-6) -> bool:
    rot = np.asarray(pose)[:3, :3]
    return bool(
        np.allclose(rot @ rot.T, np.eye(3), atol=tol) and abs(np.linalg.det(rot) - 1.0) < tol
    )


def load_calib(calib_path) -> np.ndarray:
    """Return the 3x4 LiDAR-to-camera ``Tr`` matrix."""
    with open(calib_path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if line.startswith("Tr:"):
                vals = _parse_floats(line[3:].split(), calib_path, line_no)
                return np.array(vals).reshape(3, 4)
    raise CalibError(f"{calib_path}: no 'Tr:' line")


def load_poses(poses_path, calib_path) -> np.ndarray:
    """Load camera-frame poses and convert them to the LiDAR frame.

    Returns an ``(n, 3, 4)`` array of ``Tr^-1 . T_cam . Tr`` with each rotation
    projected back onto SO(3).
    """
    tr = _homogeneous(load_calib(calib_path))
    tr_inv = np.linalg.inv(tr)
    poses = []
    with open(poses_path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            cam = _homogeneous(np.array(_parse_floats(line.split(), poses_path, line_no)).reshape(3, 4))
            poses.append(orthonormalize((tr_inv @ cam @ tr)[:3, :]))
    return np.array(poses).reshape(-1, 3, 4)


def write_poses(path, poses: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for pose in np.asarray(poses).reshape(-1, 3, 4):
            f.write(" ".join(f"{v:.9e}" for v in pose.reshape(-1)) + "\n")


def write_calib(path, tr: np.ndarray | None = None) -> None:
    tr = np.eye(4)[:3] if tr is None else np.asarray(tr).reshape(3, 4)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("Tr: " + " ".join(f"{v:.9e}" for v in tr.reshape(-1)) + "\n")


@dataclass(frozen=True)
class SequenceIndex:
    scans: list
    labels: list
    poses: np.ndarray

    def __post_init__(self):
        if not (len(self.scans) == len(self.labels) == len(self.poses)):
            raise ValueError(
                f"sequence has {len(self.scans)} scans, {len(self.labels)} label files "
                f"and {len(self.poses)} poses"
            )

    def __len__(self) -> int:
        return len(self.scans)

    def load_frame(self, i: int) -> LabeledCloud:
        return load_labels(self.labels[i], load_scan(self.scans[i], frame_id=i))


def open_sequence(root, sequence: str) -> SequenceIndex:
    """Index ``<root>/sequences/<seq>/{velodyne,labels,poses.txt,calib.txt}``.

    Poses are also looked up at ``<root>/poses/<seq>.txt`` (KITTI odometry
    layout) when the sequence folder has none.
    """
    seq_dir = Path(root) / "sequences" / f"{int(sequence):02d}"
    scans = sorted((seq_dir / "velodyne").glob("*.bin"))
    labels = sorted((seq_dir / "labels").glob("*.label"))
    poses_path = seq_dir / "poses.txt"
    if not poses_path.exists():
        poses_path = Path(root) / "poses" / f"{int(sequence):02d}.txt"
    if not poses_path.exists():
        raise FileNotFoundError(f"no poses file for sequence {sequence} under {root}")
    poses = load_poses(poses_path, seq_dir / "calib.txt")
    return SequenceIndex(scans, labels, poses)
