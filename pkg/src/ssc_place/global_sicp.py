"""Two-step global semantic ICP: ring-shift yaw search, then label-gated
windowed ICP for the planar translation.  No initial guess is needed.

Pose convention: a :class:`RelativePose` maps points of the second cloud into
the frame of the first, ``p_a = R(theta) @ p_b + (dx, dy)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import NoCorrespondenceError, NoOverlapError
from .point_model import LabeledCloud
from .projection import (
    REPRESENTATIVE_CLASSES,
    PlanarPoints,
    RingProjection,
    SicpParams,
    planar_points,
    ring_from_arrays,
)


def wrap_deg(angle: float) -> float:
    """Normalise degrees into ``(-180, 180]``."""
    a = math.fmod(float(angle) + 180.0, 360.0)
    if a < 0:
        a += 360.0
    a -= 180.0
    return 180.0 if a == -180.0 else a


class YawEstimate(NamedTuple):
    shift: int
    theta_deg: float
    residual: float


@dataclass(frozen=True)
class RelativePose:
    dx: float = 0.0
    dy: float = 0.0
    theta_deg: float = 0.0
    yaw_residual: float = 0.0
    icp_loss: float = 0.0

    def __post_init__(self):
        vals = (self.dx, self.dy, self.theta_deg, self.yaw_residual, self.icp_loss)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("pose fields must be finite")

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous planar transform."""
        t = math.radians(self.theta_deg)
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -s, self.dx], [s, c, self.dy], [0.0, 0.0, 1.0]])

    def apply(self, xy: np.ndarray) -> np.ndarray:
        m = self.matrix()
        return np.asarray(xy) @ m[:2, :2].T + m[:2, 2]

    def inverse(self) -> "RelativePose":
        m = np.linalg.inv(self.matrix())
        return RelativePose(float(m[0, 2]), float(m[1, 2]), wrap_deg(-self.theta_deg))

    def to_dict(self) -> dict:
        return {
            "dx": self.dx, "dy": self.dy, "theta_deg": self.theta_deg,
            "yaw_residual": self.yaw_residual, "icp_loss": self.icp_loss,
        }


class IcpResult(NamedTuple):
    dx: float
    dy: float
    loss: float


def shift_to_theta(shift: int, na: int) -> float:
    return wrap_deg(360.0 - 360.0 * shift / na)


def compute_yaw(ring1: RingProjection, ring2: RingProjection) -> YawEstimate:
    """Cyclic shift of ``ring2`` minimising the mean L1 radius gap to ``ring1``.

    Shift ``i`` compares ``ring1[k]`` with ``ring2[(k + i) % na]`` over the
    slots occupied in both; shifts with no such slot are never chosen.  Ties
    go to the smallest shift.
    """
    na = ring1.na
    if ring2.na != na:
        raise ValueError(f"ring sizes differ: {na} vs {ring2.na}")
    if ring1.n_occupied == 0 or ring2.n_occupied == 0:
        raise NoOverlapError("a ring has no occupied sector")
    # row i of each window view is ring2 rolled so that column k holds slot (k + i) % na;
    # empty slots carry zero weight in the matrix-vector products
    o1 = ring1.occupied.astype(np.float64)
    r1 = np.where(ring1.occupied, ring1.radius, 0.0)
    o2 = ring2.occupied.astype(np.float64)
    r2 = np.where(ring2.occupied, ring2.radius, 0.0)
    window = np.lib.stride_tricks.sliding_window_view
    occ_view = window(np.concatenate((o2, o2[:-1])), na)
    gap = np.abs(window(np.concatenate((r2, r2[:-1])), na) - r1)
    gap *= occ_view
    count = occ_view @ o1
    total = gap @ o1
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = np.where(count > 0, total / count, np.inf)
    if not np.isfinite(psi).any():
        raise NoOverlapError("no cyclic shift has jointly occupied sectors")
    shift = int(np.argmin(psi))
    return YawEstimate(shift, shift_to_theta(shift, na), float(psi[shift]))


def rotate_ring(ring: RingProjection, theta_deg: float) -> RingProjection:
    """Rotate every stored point by ``theta_deg``; slots are not re-bucketed."""
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    x, y = ring.xy[:, 0], ring.xy[:, 1]
    xy = np.column_stack((x * c - y * s, x * s + y * c))
    return RingProjection(ring.occupied, ring.radius, xy, ring.labels)


def semantic_icp(
    target: RingProjection,
    rotated: RingProjection,
    shift: int,
    params: SicpParams = SicpParams(),
    history: list | None = None,
) -> IcpResult:
    """Planar translation taking ``rotated`` onto ``target``.

    Each occupied slot of ``rotated`` is matched to the nearest equal-label
    target point inside a circular window of ``nl + 1`` slots.  The first
    window of rotated slot ``j`` is centred on target slot ``j - shift``;
    later windows follow the sector the translated point currently falls in,
    and a point's previous correspondent always stays a candidate.  Only
    points matched in the first iteration take part.  The quadratic loss is
    minimised in closed form by the mean residual each iteration.

    When given, ``history`` receives the loss at the start of every
    iteration followed by the final loss; the sequence is non-increasing.
    """
    na = target.na
    half = params.nl // 2
    width = 2 * half + 1
    t_slots = np.flatnonzero(target.occupied)
    tx = np.where(target.occupied, target.xy[:, 0], np.inf)
    ty = np.where(target.occupied, target.xy[:, 1], np.inf)
    present = np.unique(target.labels[t_slots])
    lut = np.full(256, -1, dtype=np.int64)
    lut[present] = np.arange(len(present))

    # per label: target coordinates with other labels masked to inf, padded
    # for wraparound and cut into one window row per centre slot
    def windows(coord):
        table = np.full((len(present), na), np.inf)
        table[lut[target.labels[t_slots]], t_slots] = coord[t_slots]
        ext = np.concatenate((table[:, na - half:], table, table[:, :half]), axis=1)
        view = np.lib.stride_tricks.sliding_window_view(ext, width, axis=1)
        return view.reshape(len(present) * na, width)

    slots = np.flatnonzero(rotated.occupied)
    li = lut[rotated.labels[slots]]
    slots = slots[li >= 0]
    li = li[li >= 0]
    if len(slots) == 0:
        raise NoCorrespondenceError(0)
    wx, wy = windows(tx), windows(ty)
    sx, sy = rotated.xy[slots, 0], rotated.xy[slots, 1]
    base = li * na

    def nearest(centers, mx, my):
        rows = base + centers
        d2 = wx.take(rows, axis=0)
        d2 -= mx[:, None]
        d2 *= d2
        ey = wy.take(rows, axis=0)
        ey -= my[:, None]
        ey *= ey
        d2 += ey
        j = np.argmin(d2, axis=1)
        return (centers - half + j) % na, np.take_along_axis(d2, j[:, None], axis=1)[:, 0]

    matched, best = nearest((slots - shift) % na, sx, sy)
    has = np.isfinite(best)
    if not has.any():
        raise NoCorrespondenceError(0)
    sx, sy, base, matched, best = sx[has], sy[has], base[has], matched[has], best[has]
    n = len(sx)
    scale = na / (2 * math.pi)

    dx = dy = 0.0
    mx, my = sx, sy
    loss = 0.5 * float(best.sum())
    for _ in range(params.max_iters):
        if history is not None:
            history.append(loss)
        step_x = float((tx[matched] - mx).sum()) / n
        step_y = float((ty[matched] - my).sum()) / n
        dx += step_x
        dy += step_y
        mx, my = sx + dx, sy + dy
        # recentre each window on the sector the moved point now falls in
        ang = np.arctan2(my, mx)
        ang[ang >= math.pi] = -math.pi
        centers = np.minimum(((ang + math.pi) * scale).astype(np.int64), na - 1)
        cand, best = nearest(centers, mx, my)
        prev = (tx[matched] - mx) ** 2 + (ty[matched] - my) ** 2
        keep_prev = prev < best
        matched = np.where(keep_prev, matched, cand)
        best = np.where(keep_prev, prev, best)
        loss = 0.5 * float(best.sum())
        if math.hypot(step_x, step_y) < params.converge_eps:
            break
    if history is not None:
        history.append(loss)
    return IcpResult(float(dx), float(dy), loss)


def full_loss(target: RingProjection, rotated: RingProjection, dx: float, dy: float) -> float:
    """Quadratic loss with unwindowed equal-label nearest neighbours.

    Rotated points whose label never occurs in ``target`` contribute nothing.
    """
    total = 0.0
    src_slots = np.flatnonzero(rotated.occupied)
    moved = rotated.xy[src_slots] + (dx, dy)
    src_labels = rotated.labels[src_slots]
    for lab in np.unique(src_labels):
        tgt = target.xy[target.occupied & (target.labels == lab)]
        if len(tgt) == 0:
            continue
        pts = moved[src_labels == lab]
        d2 = np.sum((pts[:, None, :] - tgt[None, :, :]) ** 2, axis=2)
        total += 0.5 * float(d2.min(axis=1).sum())
    return total


def transform_cloud(cloud: LabeledCloud, pose: RelativePose) -> LabeledCloud:
    """Rotate by ``pose.theta_deg`` about z, then translate by ``(dx, dy)``."""
    if len(cloud) == 0:
        return cloud
    xyz = cloud.xyz.copy()
    xyz[:, :2] = pose.apply(cloud.xyz[:, :2])
    return LabeledCloud(xyz, cloud.labels, cloud.frame_id)


def compose(first: RelativePose, second: RelativePose) -> RelativePose:
    """Pose applying ``first`` then ``second``; diagnostics come from ``second``."""
    m = second.matrix() @ first.matrix()
    theta = wrap_deg(math.degrees(math.atan2(m[1, 0], m[0, 0])))
    return RelativePose(float(m[0, 2]), float(m[1, 2]), theta, second.yaw_residual, second.icp_loss)


def rings_for(cloud: LabeledCloud, params: SicpParams = SicpParams(), classes=REPRESENTATIVE_CLASSES):
    return ring_from_arrays(*planar_points(cloud, classes), params.na)


def pose_from_rings(
    ring_a: RingProjection,
    ring_b: RingProjection,
    params: SicpParams = SicpParams(),
    yaw: YawEstimate | None = None,
    use_icp: bool = True,
) -> RelativePose:
    """One yaw + translation pass on precomputed rings.

    ``yaw`` overrides the ring-shift search; ``use_icp=False`` keeps the
    translation at zero.
    """
    if yaw is None:
        yaw = compute_yaw(ring_a, ring_b)
    if not use_icp:
        return RelativePose(0.0, 0.0, yaw.theta_deg, yaw.residual, 0.0)
    rotated = rotate_ring(ring_b, yaw.theta_deg)
    dx, dy, loss = semantic_icp(ring_a, rotated, yaw.shift, params)
    return RelativePose(dx, dy, yaw.theta_deg, yaw.residual, loss)


def estimate_pose_planar(
    points_a: PlanarPoints,
    points_b: PlanarPoints,
    params: SicpParams = SicpParams(),
    yaw: YawEstimate | None = None,
    use_icp: bool = True,
) -> RelativePose:
    """Pose of B's representative points in A's frame.

    After the first pass, ``params.refine_passes`` further passes rebuild B's
    ring from B moved by the running estimate and solve for the residual
    pose.  With an explicit ``yaw`` the refinement only re-runs ICP.
    """
    ring_a = ring_from_arrays(*points_a, params.na)
    pose = pose_from_rings(ring_a, ring_from_arrays(*points_b, params.na), params, yaw, use_icp)
    if not use_icp:
        return pose
    bx, by, blab = points_b
    for _ in range(params.refine_passes):
        m = pose.matrix()
        ring_b = ring_from_arrays(
            m[0, 0] * bx + m[0, 1] * by + m[0, 2],
            m[1, 0] * bx + m[1, 1] * by + m[1, 2],
            blab, params.na,
        )
        fixed = None if yaw is None else YawEstimate(0, 0.0, 0.0)
        pose = compose(pose, pose_from_rings(ring_a, ring_b, params, fixed))
    return pose


def estimate_pose_filtered(
    filtered_a: LabeledCloud,
    filtered_b: LabeledCloud,
    params: SicpParams = SicpParams(),
    yaw: YawEstimate | None = None,
    use_icp: bool = True,
) -> RelativePose:
    """:func:`estimate_pose_planar` on clouds already reduced to representative classes."""
    def planar(c):
        return PlanarPoints(c.xyz[:, 0], c.xyz[:, 1], c.labels)

    return estimate_pose_planar(planar(filtered_a), planar(filtered_b), params, yaw, use_icp)


def estimate_relative_pose(
    cloud_a: LabeledCloud,
    cloud_b: LabeledCloud,
    params: SicpParams = SicpParams(),
    classes=REPRESENTATIVE_CLASSES,
) -> RelativePose:
    """Planar pose ``(dx, dy, theta)`` mapping ``cloud_b`` into ``cloud_a``'s frame."""
    return estimate_pose_planar(planar_points(cloud_a, classes), planar_points(cloud_b, classes), params)
