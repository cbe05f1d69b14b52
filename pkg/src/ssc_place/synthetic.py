"""Seeded urban-like labeled scenes, exact rigid transforms, planted-loop
sequences and a brute-force translation oracle.

Everything here is deterministic under its seed so scenes can stand in for
KITTI frames in tests and benchmarks.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kitti_io
from .global_sicp import RelativePose, wrap_deg
from .point_model import LabeledCloud, SemanticClass as C
from .projection import RingProjection

MAX_DROPOUT = 0.9


@dataclass(frozen=True)
class SceneSpec:
    n_walls: int = 8
    n_trunks: int = 12
    n_poles: int = 6
    n_signs: int = 4
    n_vegetation: int = 6
    n_cars: int = 5
    ground_density: float = 2.0  # points per square meter
    extent: float = 45.0
    seed: int = 0
    wall_spacing: float = 0.15

    def __post_init__(self):
        counts = (self.n_walls, self.n_trunks, self.n_poles, self.n_signs,
                  self.n_vegetation, self.n_cars)
        if min(counts) < 0 or self.ground_density < 0:
            raise ValueError("scene counts must be non-negative")
        if not self.extent > 0:
            raise ValueError("extent must be > 0")
        if not self.wall_spacing > 0:
            raise ValueError("wall_spacing must be > 0")


@dataclass(frozen=True)
class OracleTransform:
    """``p' = R(theta) p + (dx, dy)`` followed by noise and dropout."""

    dx: float = 0.0
    dy: float = 0.0
    theta_deg: float = 0.0
    noise_sigma: float = 0.0
    dropout_rate: float = 0.0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def recovered_pose(self) -> RelativePose:
        """The pose ``estimate_relative_pose(original, transformed)`` should find."""
        t = math.radians(self.theta_deg)
        c, s = math.cos(t), math.sin(t)
        # inverse rigid motion: R^T (p' - d)
        dx = -(c * self.dx + s * self.dy)
        dy = -(-s * self.dx + c * self.dy)
        return RelativePose(dx, dy, wrap_deg(-self.theta_deg))


def _cylinder(rng, cx, cy, radius, height, n_around, dz):
    ang = np.linspace(0, 2 * np.pi, n_around, endpoint=False)
    zs = np.arange(0.0, height, dz)
    a, z = np.meshgrid(ang, zs)
    a = a.ravel() + rng.uniform(-0.05, 0.05, a.size)
    return np.column_stack((cx + radius * np.cos(a), cy + radius * np.sin(a), z.ravel()))


def _wall(cx, cy, heading, length, height, spacing, dz=0.4):
    s = np.arange(-length / 2, length / 2, spacing)
    zs = np.arange(0.0, height, dz)
    ss, z = np.meshgrid(s, zs)
    ss = ss.ravel()
    return np.column_stack(
        (cx + ss * math.cos(heading), cy + ss * math.sin(heading), z.ravel())
    )


def _ground_labels(rng, xy, heading, extent):
    """Road band along ``heading``, sidewalks beside it, Voronoi patches elsewhere."""
    normal = np.array([-math.sin(heading), math.cos(heading)])
    offset = rng.uniform(-1.5, 1.5)
    v = xy @ normal - offset
    n_seeds = 14
    seeds = rng.uniform(-extent, extent, (n_seeds, 2))
    patch_classes = np.array([C.TERRAIN, C.PARKING, C.OTHER_GROUND, C.SIDEWALK, C.TERRAIN, C.ROAD],
                             dtype=np.uint8)
    seed_cls = patch_classes[rng.integers(0, len(patch_classes), n_seeds)]
    d2 = ((xy[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    labels = seed_cls[np.argmin(d2, axis=1)]
    labels[np.abs(v) < 7.0] = C.SIDEWALK
    labels[np.abs(v) < 4.0] = C.ROAD
    return labels, normal, offset


def generate_scene(spec: SceneSpec = SceneSpec(), frame_id: int = 0) -> LabeledCloud:
    """Labeled street scene centred on the sensor origin, ground at z ~ 0."""
    rng = np.random.default_rng(spec.seed)
    heading = rng.uniform(0, np.pi)
    along = np.array([math.cos(heading), math.sin(heading)])
    ext = spec.extent
    chunks, labels = [], []

    def add(points, cls):
        if len(points):
            chunks.append(points)
            labels.append(np.full(len(points), cls, dtype=np.uint8))

    n_ground = int(spec.ground_density * math.pi * ext**2)
    normal, offset = np.array([-along[1], along[0]]), 0.0
    if n_ground:
        r = ext * np.sqrt(rng.uniform(0, 1, n_ground))
        a = rng.uniform(-np.pi, np.pi, n_ground)
        xy = np.column_stack((r * np.cos(a), r * np.sin(a)))
        glab, normal, offset = _ground_labels(rng, xy, heading, ext)
        ground = np.column_stack((xy, rng.normal(0.0, 0.02, n_ground)))
        for cls in np.unique(glab):
            add(ground[glab == cls], int(cls))

    # building blocks line both street sides (facade plus two side walls);
    # the sides differ in setback and block count so the street is not
    # point-symmetric
    n_left = int(rng.binomial(spec.n_walls, 0.5)) if spec.n_walls > 1 else spec.n_walls
    setbacks = rng.permutation([rng.uniform(7.0, 10.0), rng.uniform(12.0, 18.0)])
    for side, n_side, setback in zip((1.0, -1.0), (n_left, spec.n_walls - n_left), setbacks):
        if n_side == 0:
            continue
        slot = 2 * ext / n_side
        for k in range(n_side):
            length = rng.uniform(0.45, 0.85) * slot
            u = -ext + (k + 0.5) * slot + rng.uniform(-0.1, 0.1) * slot
            v = side * (setback + rng.uniform(-1.5, 1.5))
            depth = rng.uniform(6.0, 12.0)
            height = rng.uniform(4.0, 14.0)
            front = u * along + (v + offset) * normal
            add(_wall(front[0], front[1], heading, length, height, spec.wall_spacing), C.BUILDING)
            for end in (-0.5, 0.5):
                mid = front + end * length * along + side * 0.5 * depth * normal
                add(_wall(mid[0], mid[1], heading + np.pi / 2, depth, height,
                          spec.wall_spacing), C.BUILDING)

    def spread(n, rmin, rmax):
        # evenly spread bearings keep every octant populated for n >= 8
        base = rng.uniform(0, 2 * np.pi)
        ang = base + 2 * np.pi * np.arange(n) / max(n, 1) + rng.uniform(-0.3, 0.3, n) * (2 * np.pi / max(n, 1))
        rad = rng.uniform(rmin, rmax, n)
        return np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))

    for cx, cy in spread(spec.n_trunks, 5.0, min(35.0, 0.8 * ext)):
        add(_cylinder(rng, cx, cy, rng.uniform(0.15, 0.3), rng.uniform(2.5, 4.0), 16, 0.25), C.TRUNK)

    pole_xy = spread(spec.n_poles, 4.0, min(30.0, 0.7 * ext))
    pole_heights = rng.uniform(5.0, 8.0, spec.n_poles)
    for (cx, cy), h in zip(pole_xy, pole_heights):
        add(_cylinder(rng, cx, cy, 0.08, h, 8, 0.25), C.POLE)

    for k in range(spec.n_signs):
        if spec.n_poles:
            px, py = pole_xy[k % spec.n_poles]
        else:
            px, py = spread(1, 4.0, min(30.0, 0.7 * ext))[0]
        face = rng.uniform(0, np.pi)
        s, z = np.meshgrid(np.linspace(-0.3, 0.3, 7), np.linspace(0.0, 0.6, 7))
        base_z = rng.uniform(2.2, 3.0)
        plate = np.column_stack((
            px + 0.2 * math.cos(face + np.pi / 2) + s.ravel() * math.cos(face),
            py + 0.2 * math.sin(face + np.pi / 2) + s.ravel() * math.sin(face),
            base_z + z.ravel(),
        ))
        add(plate, C.TRAFFIC_SIGN)

    for cx, cy in spread(spec.n_vegetation, 8.0, 0.9 * ext):
        axes = rng.uniform(1.0, 3.0, 3)
        d = rng.normal(size=(200, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        d *= rng.uniform(0, 1, (200, 1)) ** (1 / 3)
        add(d * axes + (cx, cy, 1.5), C.VEGETATION)

    for _ in range(spec.n_cars):
        u = rng.uniform(-0.8 * ext, 0.8 * ext)
        v = rng.choice([-1.0, 1.0]) * 2.0 + offset
        c = u * along + v * normal
        local = rng.uniform((-2.1, -0.9, 0.2), (2.1, 0.9, 1.5), (250, 3))
        xy = local[:, 0:1] * along + local[:, 1:2] * normal + c
        add(np.column_stack((xy, local[:, 2])), C.CAR)

    if not chunks:
        return LabeledCloud.empty(frame_id)
    return LabeledCloud(np.concatenate(chunks), np.concatenate(labels), frame_id)


def apply_transform(cloud: LabeledCloud, t: OracleTransform, seed: int = 0) -> LabeledCloud:
    """Rigidly move ``cloud`` by ``t``, then add noise and drop points."""
    rng = np.random.default_rng(seed)
    xyz, labels = cloud.xyz, cloud.labels
    if t.dropout_rate > 0:
        keep = rng.uniform(size=len(xyz)) >= t.dropout_rate
        xyz, labels = xyz[keep], labels[keep]
    th = math.radians(t.theta_deg)
    c, s = math.cos(th), math.sin(th)
    out = np.column_stack((
        c * xyz[:, 0] - s * xyz[:, 1] + t.dx,
        s * xyz[:, 0] + c * xyz[:, 1] + t.dy,
        xyz[:, 2],
    ))
    if t.noise_sigma > 0:
        out = out + rng.normal(0.0, t.noise_sigma, out.shape)
    return LabeledCloud(out, labels, cloud.frame_id)


def oracle_translation(
    target: RingProjection,
    rotated: RingProjection,
    shift: int = 0,
    grid_step: float = 0.01,
    bound: float = 3.0,
    return_loss: bool = False,
):
    """Exhaustive grid minimiser of the label-gated quadratic ICP loss.

    Correspondences are the unwindowed nearest equal-label target points,
    recomputed at every grid node, so ``shift`` plays no part.  Ties go to
    the first node in row-major (dx, dy) order.
    """
    del shift
    if not grid_step > 0:
        raise ValueError("grid_step must be > 0")
    n = int(round(2 * bound / grid_step)) + 1
    grid = -bound + grid_step * np.arange(n)
    loss = np.zeros((n, n))
    for j in np.flatnonzero(rotated.occupied):
        mask = target.occupied & (target.labels == rotated.labels[j])
        if not mask.any():
            continue
        cands = target.xy[mask] - rotated.xy[j]  # translations zeroing the residual
        gx = (grid[None, :] - cands[:, 0:1]) ** 2
        gy = (grid[None, :] - cands[:, 1:2]) ** 2
        best = np.full((n, n), np.inf)
        for ax, ay in zip(gx, gy):
            np.minimum(best, ax[:, None] + ay[None, :], out=best)
        loss += 0.5 * best
    ix, iy = np.unravel_index(int(np.argmin(loss)), loss.shape)
    result = (float(grid[ix]), float(grid[iy]))
    if return_loss:
        return result + (float(loss[ix, iy]),)
    return result


def planar_pose(x: float, y: float, yaw_deg: float) -> np.ndarray:
    """3x4 SE(3) matrix of a planar pose."""
    t = math.radians(yaw_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0, x], [s, c, 0.0, y], [0.0, 0.0, 1.0, 0.0]])


def world_to_sensor(x: float, y: float, yaw_deg: float) -> OracleTransform:
    """Transform taking world points into the frame of a sensor at ``(x, y, yaw)``."""
    t = math.radians(-yaw_deg)
    c, s = math.cos(t), math.sin(t)
    return OracleTransform(-(c * x - s * y), -(s * x + c * y), -yaw_deg)


@dataclass(frozen=True)
class PlantedLoop:
    place: int
    offset: tuple[float, float]
    yaw_deg: float


@dataclass
class SyntheticSequence:
    clouds: list
    poses: np.ndarray
    loops: list = field(default_factory=list)

    def __len__(self):
        return len(self.clouds)


DEFAULT_LOOPS = (
    PlantedLoop(place=2, offset=(1.2, -0.8), yaw_deg=180.0),
    PlantedLoop(place=9, offset=(-1.0, 1.5), yaw_deg=37.0),
)


def planted_loop_sequence(
    n_frames: int = 20,
    loops=DEFAULT_LOOPS,
    spacing: float = 120.0,
    noise_sigma: float = 0.0,
    dropout_rate: float = 0.0,
    seed: int = 0,
    spec: SceneSpec = SceneSpec(),
) -> SyntheticSequence:
    """Straight drive through distinct places, then revisits of chosen places.

    Frames ``0 .. n_frames - len(loops) - 1`` each see a fresh scene placed
    ``spacing`` meters apart; the remaining frames revisit ``loop.place`` with
    a planar offset (meters) and a yaw change (degrees).
    """
    loops = list(loops)
    n_places = n_frames - len(loops)
    if n_places < 1 or any(not 0 <= lp.place < n_places for lp in loops):
        raise ValueError("loops must revisit one of the first n_frames - len(loops) frames")
    rng = np.random.default_rng(seed)
    base_yaw = rng.uniform(-180.0, 180.0, n_places)
    scenes = [
        generate_scene(SceneSpec(**{**asdict(spec), "seed": seed * 1000 + p}))
        for p in range(n_places)
    ]
    frames = [(p, p * spacing, 0.0, base_yaw[p]) for p in range(n_places)]
    for lp in loops:
        frames.append((lp.place, lp.place * spacing + lp.offset[0], lp.offset[1],
                       base_yaw[lp.place] + lp.yaw_deg))
    clouds, poses = [], []
    for k, (p, x, y, yaw) in enumerate(frames):
        # scene p is generated around its own origin at world (p * spacing, 0)
        to_sensor = world_to_sensor(x - p * spacing, y, yaw)
        t = OracleTransform(to_sensor.dx, to_sensor.dy, to_sensor.theta_deg,
                            noise_sigma, dropout_rate)
        moved = apply_transform(scenes[p], t, seed=seed * 1000 + 500 + k)
        clouds.append(LabeledCloud(moved.xyz, moved.labels, k))
        poses.append(planar_pose(x, y, yaw))
    return SyntheticSequence(clouds, np.array(poses), loops)


def export_cloud(cloud: LabeledCloud, scan_path, label_path) -> None:
    kitti_io.write_scan(scan_path, cloud)
    kitti_io.write_labels(label_path, cloud)


def export_sequence(seq: SyntheticSequence, root, sequence: str = "00") -> Path:
    """Write ``seq`` in the SemanticKITTI directory layout (identity ``Tr``)."""
    seq_dir = Path(root) / "sequences" / f"{int(sequence):02d}"
    for k, cloud in enumerate(seq.clouds):
        export_cloud(cloud, seq_dir / "velodyne" / f"{k:06d}.bin",
                     seq_dir / "labels" / f"{k:06d}.label")
    kitti_io.write_poses(seq_dir / "poses.txt", seq.poses)
    kitti_io.write_calib(seq_dir / "calib.txt")
    (seq_dir / "loops.json").write_text(
        json.dumps([asdict(lp) for lp in seq.loops], indent=2), encoding="utf-8"
    )
    return seq_dir
