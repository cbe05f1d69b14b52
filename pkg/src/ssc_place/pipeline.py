"""Pair matching: estimate the planar pose, align, describe and score."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SSCError
from .global_sicp import (
    RelativePose,
    YawEstimate,
    estimate_pose_planar,
    transform_cloud,
    wrap_deg,
)
from .point_model import LabeledCloud, PriorityTable
from .projection import REPRESENTATIVE_CLASSES, SicpParams, planar_points
from .ssc import SscDescriptor, SscParams, best_column_shift, encode, encode_height, similarity


@dataclass(frozen=True)
class AblationConfig:
    use_yaw_align: bool = True
    use_icp: bool = True
    use_semantic_encoding: bool = True


@dataclass(frozen=True)
class MatchResult:
    score: float
    pose: RelativePose
    timings_us: dict = field(default_factory=dict)
    diagnostic: str | None = None

    def to_dict(self, frame_a=None, frame_b=None) -> dict:
        out = {}
        if frame_a is not None:
            out["frame_a"] = int(frame_a)
        if frame_b is not None:
            out["frame_b"] = int(frame_b)
        out.update(score=self.score, pose=self.pose.to_dict(), timings_us=dict(self.timings_us))
        if self.diagnostic:
            out["diagnostic"] = self.diagnostic
        return out


def align_cloud(cloud: LabeledCloud, pose: RelativePose) -> LabeledCloud:
    """Rotate by ``theta`` about z, then translate by ``(dx, dy)``; z and labels kept."""
    return transform_cloud(cloud, pose)


def _describe(cloud, ssc_params, priority, ablation):
    if ablation.use_semantic_encoding:
        return encode(cloud, ssc_params, priority)
    return encode_height(cloud, ssc_params)


def match_pair(
    cloud_a: LabeledCloud,
    cloud_b: LabeledCloud,
    sicp_params: SicpParams = SicpParams(),
    ssc_params: SscParams = SscParams(),
    ablation: AblationConfig = AblationConfig(),
    priority: PriorityTable | None = None,
    representative=REPRESENTATIVE_CLASSES,
) -> MatchResult:
    """Score how likely ``cloud_b`` was taken at ``cloud_a``'s place.

    A failed pose estimate (no overlap or no label-matched correspondence)
    yields score 0 with a diagnostic instead of raising.
    """
    timings = {"yaw": 0.0, "icp": 0.0, "describe": 0.0, "retrieve": 0.0}
    clock = time.perf_counter_ns

    t0 = clock()
    points_a = planar_points(cloud_a, representative)
    points_b = planar_points(cloud_b, representative)
    yaw = None
    desc_a = None
    if not ablation.use_yaw_align:
        # scan-context fallback: yaw from the best descriptor column roll
        desc_a = _describe(cloud_a, ssc_params, priority, ablation)
        col, _ = best_column_shift(desc_a, _describe(cloud_b, ssc_params, priority, ablation))
        ring_shift = int(round(col * sicp_params.na / ssc_params.ns)) % sicp_params.na
        yaw = YawEstimate(ring_shift, wrap_deg(-360.0 * col / ssc_params.ns), 0.0)
    t1 = clock()
    try:
        pose = estimate_pose_planar(
            points_a, points_b, sicp_params, yaw=yaw, use_icp=ablation.use_icp
        )
    except SSCError as exc:
        timings["yaw"] = (clock() - t0) / 1e3
        return MatchResult(0.0, RelativePose(), timings, f"pose estimation failed: {exc}")
    timings["yaw"] = (t1 - t0) / 1e3
    timings["icp"] = (clock() - t1) / 1e3

    t2 = clock()
    if desc_a is None:
        desc_a = _describe(cloud_a, ssc_params, priority, ablation)
    desc_b = _describe(align_cloud(cloud_b, pose), ssc_params, priority, ablation)
    t3 = clock()
    if ablation.use_yaw_align:
        score = similarity(desc_a, desc_b)
    else:
        _, score = best_column_shift(desc_a, desc_b)
    t4 = clock()
    timings["describe"] = (t3 - t2) / 1e3
    timings["retrieve"] = (t4 - t3) / 1e3
    diagnostic = None
    if not np.any(desc_a.grid) and not np.any(desc_b.grid):
        diagnostic = "both descriptors are empty"
    return MatchResult(float(score), pose, timings, diagnostic)


def describe(cloud, ssc_params=SscParams(), priority=None, semantic=True) -> SscDescriptor:
    return _describe(cloud, ssc_params, priority, AblationConfig(use_semantic_encoding=semantic))

