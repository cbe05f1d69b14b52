"""Loop-closure evaluation: pair sampling from ground-truth poses, exact
precision-recall curves, F1-max, extended precision, pose error statistics
and per-stage timing summaries.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .exceptions import DegenerateLabelsError, EmptyPositivesError
from .global_sicp import RelativePose, wrap_deg
from .pipeline import AblationConfig, MatchResult, match_pair
from .projection import SicpParams
from .ssc import SscParams

logger = logging.getLogger(__name__)

POSITIVE_DIST = 3.0
NEGATIVE_DIST = 20.0
STAGES = ("yaw", "icp", "describe", "retrieve")


def _homogeneous(pose) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape == (4, 4):
        return pose
    if pose.shape != (3, 4):
        raise ValueError(f"pose must be 3x4 or 4x4, got {pose.shape}")
    out = np.eye(4)
    out[:3] = pose
    return out


def gt_relative_pose(t1, t2) -> RelativePose:
    """Planar part of ``T1^-1 T2``: the pose of frame 2 expressed in frame 1."""
    t = np.linalg.solve(_homogeneous(t1), _homogeneous(t2))
    theta = wrap_deg(math.degrees(math.atan2(t[1, 0], t[0, 0])))
    return RelativePose(float(t[0, 3]), float(t[1, 3]), theta)


@dataclass(frozen=True)
class LabeledPair:
    i: int
    j: int
    is_positive: bool
    gt_pose: RelativePose
    distance: float

    def __post_init__(self):
        if not self.i < self.j:
            raise ValueError(f"pair indices must satisfy i < j, got ({self.i}, {self.j})")


def _translations(poses) -> np.ndarray:
    poses = np.asarray(poses, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[1:] not in ((3, 4), (4, 4)):
        raise ValueError(f"poses must be (n, 3, 4) or (n, 4, 4), got {poses.shape}")
    return poses[:, :2, 3]


def sample_pairs(
    poses,
    alpha: float,
    seed: int = 0,
    min_gap: int = 100,
    positive_dist: float = POSITIVE_DIST,
    negative_dist: float = NEGATIVE_DIST,
) -> list[LabeledPair]:
    """All positives plus ``floor(alpha * n_pos)`` random negatives.

    Positives are pairs closer than ``positive_dist`` (planar) whose frame
    indices differ by at least ``min_gap``.  Negatives are pairs farther
    than ``negative_dist``, drawn without replacement.  Anything in between
    is never emitted.  Positives come first, each group in ``(i, j)`` order.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if min_gap < 0:
        raise ValueError("min_gap must be >= 0")
    xy = _translations(poses)
    n = len(xy)
    if n < 2:
        raise ValueError("need at least two poses")

    pos, neg_rows = [], []
    neg_counts = np.zeros(n, dtype=np.int64)
    for i in range(n - 1):
        d = np.hypot(*(xy[i + 1:] - xy[i]).T)
        near = np.flatnonzero(d < positive_dist)
        near = near[near + 1 >= min_gap]
        pos.extend((i, i + 1 + k) for k in near)
        far = np.flatnonzero(d > negative_dist)
        neg_counts[i] = len(far)
        neg_rows.append(far)
    if not pos:
        raise EmptyPositivesError(
            f"no pair is closer than {positive_dist} m with a frame gap >= {min_gap}"
        )

    wanted = int(math.floor(alpha * len(pos)))
    total = int(neg_counts.sum())
    if wanted > total:
        warnings.warn(
            f"requested {wanted} negatives but only {total} exist; using all of them",
            stacklevel=2,
        )
        wanted = total
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=wanted, replace=False)) if wanted else np.empty(0, int)
    starts = np.concatenate(([0], np.cumsum(neg_counts)))
    rows = np.searchsorted(starts, flat, side="right") - 1
    neg = [(int(r), int(r + 1 + neg_rows[r][f - starts[r]])) for r, f in zip(rows, flat)]

    out = []
    for (i, j), positive in [(p, True) for p in pos] + [(p, False) for p in neg]:
        out.append(LabeledPair(
            int(i), int(j), positive, gt_relative_pose(poses[i], poses[j]),
            float(np.hypot(*(xy[j] - xy[i]))),
        ))
    return out


class PrCurve(NamedTuple):
    """Exact curve, one point per distinct score, thresholds descending."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray


def pr_curve(scores, labels) -> PrCurve:
    """Predict positive when ``score >= threshold`` for every distinct score."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=bool).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise DegenerateLabelsError("need at least one positive and one negative pair")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    # last index of every run of equal scores
    last = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = tp[last].astype(np.float64)
    predicted = last + 1.0
    return PrCurve(s[last], tp / predicted, tp / n_pos)


def f1_max(curve: PrCurve) -> float:
    p, r = curve.precision, curve.recall
    if len(p) == 0:
        raise ValueError("empty curve")
    denom = p + r
    f1 = np.divide(2 * p * r, denom, out=np.zeros_like(denom), where=denom > 0)
    return float(f1.max())


def f1_max_threshold(curve: PrCurve) -> float:
    """Highest threshold attaining :func:`f1_max`."""
    p, r = curve.precision, curve.recall
    denom = p + r
    f1 = np.divide(2 * p * r, denom, out=np.zeros_like(denom), where=denom > 0)
    return float(curve.thresholds[int(np.argmax(f1))])


def extended_precision(curve: PrCurve) -> float:
    """Mean of the precision at the lowest-recall point (the strictest
    threshold) and the largest recall reached at precision 1."""
    if len(curve.precision) == 0:
        raise ValueError("empty curve")
    p_r0 = float(curve.precision[0])
    perfect = curve.precision == 1.0
    r_p100 = float(curve.recall[perfect].max()) if perfect.any() else 0.0
    return 0.5 * (p_r0 + r_p100)


class PoseError(NamedTuple):
    yaw_deg: float
    translation_m: float


def pose_error(est: RelativePose, gt: RelativePose) -> PoseError:
    return PoseError(
        abs(wrap_deg(est.theta_deg - gt.theta_deg)),
        math.hypot(est.dx - gt.dx, est.dy - gt.dy),
    )


def pose_error_stats(estimates: Sequence[RelativePose], truths: Sequence[RelativePose]):
    """Mean absolute wrapped yaw error (deg) and mean translation error (m)."""
    if len(estimates) != len(truths):
        raise ValueError("estimates and ground truth differ in length")
    if not estimates:
        raise ValueError("no pairs to compute pose errors on")
    errs = np.array([pose_error(e, g) for e, g in zip(estimates, truths)])
    return float(errs[:, 0].mean()), float(errs[:, 1].mean())


@dataclass(frozen=True)
class ScoredPair:
    pair: LabeledPair
    result: MatchResult


@dataclass(frozen=True)
class EvalReport:
    curve: PrCurve
    f1_max: float
    extended_precision: float
    threshold: float
    mean_yaw_err_deg: float | None
    mean_translation_err_m: float | None
    pose_errors: list = field(default_factory=list)  # (i, j, yaw_err, trans_err)
    timing_means_us: dict = field(default_factory=dict)
    n_positive: int = 0
    n_negative: int = 0
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "f1_max": self.f1_max,
            "extended_precision": self.extended_precision,
            "threshold": self.threshold,
            "mean_yaw_err_deg": self.mean_yaw_err_deg,
            "mean_translation_err_m": self.mean_translation_err_m,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "timing_means_us": dict(self.timing_means_us),
        }

    def to_dict(self) -> dict:
        out = self.summary()
        out["config"] = dict(self.config)
        out["pr_curve"] = [
            {"threshold": float(t), "precision": float(p), "recall": float(r)}
            for t, p, r in zip(*self.curve)
        ]
        return out

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        with open(out / "pr_curve.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["threshold", "precision", "recall"])
            w.writerows(zip(*(a.tolist() for a in self.curve)))
        with open(out / "pose_errors.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["frame_a", "frame_b", "yaw_err_deg", "translation_err_m"])
            w.writerows(self.pose_errors)
        with open(out / "timings.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["stage", "mean_us"])
            w.writerows(self.timing_means_us.items())
        return out


def build_report(scored: Sequence[ScoredPair], threshold: float | None = None,
                 config: dict | None = None) -> EvalReport:
    """Metrics over scored pairs.  Pose errors use true positives at
    ``threshold`` (default: the F1-max threshold)."""
    scores = [s.result.score for s in scored]
    labels = [s.pair.is_positive for s in scored]
    curve = pr_curve(scores, labels)
    if threshold is None:
        threshold = f1_max_threshold(curve)
    tps = [s for s in scored if s.pair.is_positive and s.result.score >= threshold]
    rows = []
    for s in tps:
        e = pose_error(s.result.pose, s.pair.gt_pose)
        rows.append((s.pair.i, s.pair.j, e.yaw_deg, e.translation_m))
    yaw = float(np.mean([r[2] for r in rows])) if rows else None
    trans = float(np.mean([r[3] for r in rows])) if rows else None
    timings = {k: float(np.mean([s.result.timings_us.get(k, 0.0) for s in scored])) for k in STAGES}
    return EvalReport(
        curve, f1_max(curve), extended_precision(curve), float(threshold), yaw, trans, rows,
        timings, sum(labels), len(labels) - sum(labels), dict(config or {}),
    )


def score_pairs(
    load_frame: Callable[[int], object],
    pairs: Sequence[LabeledPair],
    sicp_params: SicpParams = SicpParams(),
    ssc_params: SscParams = SscParams(),
    ablation: AblationConfig = AblationConfig(),
    priority=None,
    workers: int = 1,
    cache_size: int = 256,
) -> list[ScoredPair]:
    """Run :func:`match_pair` on every pair, loading frames through an LRU cache.

    Results keep the order of ``pairs`` regardless of ``workers``.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    cached = lru_cache(maxsize=cache_size)(load_frame)

    def run(pair: LabeledPair) -> ScoredPair:
        res = match_pair(cached(pair.i), cached(pair.j), sicp_params, ssc_params, ablation, priority)
        if res.diagnostic:
            logger.info("pair (%d, %d): %s", pair.i, pair.j, res.diagnostic)
        return ScoredPair(pair, res)

    # pairs sharing a frame sit next to each other, which keeps the cache warm
    if workers == 1:
        return [run(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, pairs))


def evaluate(
    load_frame: Callable[[int], object],
    poses,
    alpha: float = 100.0,
    seed: int = 0,
    min_gap: int = 100,
    sicp_params: SicpParams = SicpParams(),
    ssc_params: SscParams = SscParams(),
    ablation: AblationConfig = AblationConfig(),
    priority=None,
    workers: int = 1,
    threshold: float | None = None,
) -> EvalReport:
    """Sample pairs from ``poses``, score them and summarise."""
    pairs = sample_pairs(poses, alpha, seed, min_gap)
    logger.info("%d positive and %d negative pairs",
                sum(p.is_positive for p in pairs), sum(not p.is_positive for p in pairs))
    scored = score_pairs(load_frame, pairs, sicp_params, ssc_params, ablation, priority, workers)
    config = {
        "alpha": alpha, "seed": seed, "min_gap": min_gap,
        "na": sicp_params.na, "nl": sicp_params.nl,
        "ns": ssc_params.ns, "nr": ssc_params.nr, "rmax": ssc_params.rmax,
        "use_yaw_align": ablation.use_yaw_align, "use_icp": ablation.use_icp,
        "use_semantic_encoding": ablation.use_semantic_encoding,
    }
    return build_report(scored, threshold, config)
