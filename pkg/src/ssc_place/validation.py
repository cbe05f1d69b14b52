"""Input coercion for the estimator API."""
from __future__ import annotations

import numpy as np

from .point_model import N_CLASSES, LabeledCloud


def check_cloud(obj, frame_id: int = 0) -> LabeledCloud:
    """Accept a LabeledCloud or an ``(n, 4)`` array of ``x, y, z, class``."""
    if isinstance(obj, LabeledCloud):
        return obj
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected a LabeledCloud or an (n, 4) array, got shape {arr.shape}")
    codes = arr[:, 3]
    if np.any(codes != np.round(codes)) or np.any((codes < 0) | (codes >= N_CLASSES)):
        raise ValueError(f"column 3 must hold integer class codes in [0, {N_CLASSES})")
    return LabeledCloud(arr[:, :3], codes.astype(np.uint8), frame_id)


def check_clouds(X) -> list[LabeledCloud]:
    """A non-empty sequence of clouds; a single cloud is rejected."""
    if isinstance(X, LabeledCloud) or (isinstance(X, np.ndarray) and X.ndim == 2):
        raise ValueError("expected a sequence of clouds; wrap a single cloud in a list")
    clouds = [check_cloud(c, i) for i, c in enumerate(X)]
    if not clouds:
        raise ValueError("expected at least one cloud")
    return clouds
