"""``ssc`` command line: describe, match, eval, synth and bench.

Results go to stdout as JSON (CSV for ``bench``); logs and warnings go to
stderr.  Settings resolve as flags, then ``--config`` JSON, then defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kitti_io
from .evaluation import evaluate
from .exceptions import SSCError
from .global_sicp import estimate_relative_pose
from .pipeline import AblationConfig, describe, match_pair
from .point_model import PriorityTable
from .projection import SicpParams
from .ssc import SscParams, similarity
from .synthetic import (
    MAX_DROPOUT,
    OracleTransform,
    SceneSpec,
    apply_transform,
    export_cloud,
    export_sequence,
    generate_scene,
    planted_loop_sequence,
)

logger = logging.getLogger("ssc_place")

DEFAULTS = {
    "dataset_root": None,
    "sequence": "00",
    "alpha": 100.0,
    "seed": 0,
    "na": 360,
    "nl": 20,
    "ns": 360,
    "nr": 50,
    "rmax": 50.0,
    "no_yaw": False,
    "no_icp": False,
    "no_semantic": False,
    "min_gap": 100,
    "workers": 1,
    "out": None,
    "priority": None,
}


@dataclass(frozen=True)
class RunConfig:
    dataset_root: Path | None = None
    sequence: str = "00"
    alpha: float = 100.0
    seed: int = 0
    min_gap: int = 100
    workers: int = 1
    out: Path | None = None
    sicp: SicpParams = field(default_factory=SicpParams)
    ssc: SscParams = field(default_factory=SscParams)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    priority: PriorityTable | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_settings(cls, s: dict) -> "RunConfig":
        return cls(
            dataset_root=Path(s["dataset_root"]) if s["dataset_root"] else None,
            sequence=str(s["sequence"]),
            alpha=float(s["alpha"]),
            seed=int(s["seed"]),
            min_gap=int(s["min_gap"]),
            workers=int(s["workers"]),
            out=Path(s["out"]) if s["out"] else None,
            sicp=SicpParams(na=int(s["na"]), nl=int(s["nl"])),
            ssc=SscParams(ns=int(s["ns"]), nr=int(s["nr"]), rmax=float(s["rmax"])),
            ablation=AblationConfig(not s["no_yaw"], not s["no_icp"], not s["no_semantic"]),
            priority=PriorityTable.load(s["priority"]) if s["priority"] else None,
        )


def resolve_settings(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the optional JSON config and explicit flags."""
    settings = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError(f"{config_path}: config must be a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"{config_path}: unknown keys {sorted(unknown)}")
        settings.update(loaded)
    for key in DEFAULTS:
        if hasattr(args, key):
            settings[key] = getattr(args, key)
    return settings


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def _load(scan, labels, frame_id=0):
    return kitti_io.load_labels(labels, kitti_io.load_scan(scan, frame_id))


def cmd_describe(args, cfg: RunConfig) -> int:
    cloud = _load(args.scan, args.labels)
    if len(cloud) == 0:
        logger.warning("%s: empty scan, descriptor is all zero", args.scan)
    desc = describe(cloud, cfg.ssc, cfg.priority, cfg.ablation.use_semantic_encoding)
    out = Path(args.output) if args.output else Path(args.scan).with_suffix(".ssc")
    desc.save(out)
    summary = {"descriptor": str(out), "bytes": out.stat().st_size, "occupancy": desc.occupancy}
    if cfg.ablation.use_semantic_encoding:
        summary["class_counts"] = desc.class_counts()
    _emit(summary)
    return 0


def cmd_match(args, cfg: RunConfig) -> int:
    a = _load(args.scan_a, args.labels_a, 0)
    b = _load(args.scan_b, args.labels_b, 1)
    res = match_pair(a, b, cfg.sicp, cfg.ssc, cfg.ablation, cfg.priority)
    if res.diagnostic:
        logger.warning("%s", res.diagnostic)
    _emit(res.to_dict(0, 1))
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    if cfg.dataset_root is None:
        raise ValueError("--dataset-root is required for eval")
    if not cfg.dataset_root.is_dir():
        raise FileNotFoundError(f"dataset root {cfg.dataset_root} does not exist")
    seq = kitti_io.open_sequence(cfg.dataset_root, cfg.sequence)
    logger.info("sequence %s: %d frames", cfg.sequence, len(seq))
    report = evaluate(
        seq.load_frame, seq.poses, cfg.alpha, cfg.seed, cfg.min_gap,
        cfg.sicp, cfg.ssc, cfg.ablation, cfg.priority, cfg.workers,
    )
    summary = report.summary()
    if cfg.out is not None:
        report.write(cfg.out)
        summary["out"] = str(cfg.out)
    _emit(summary)
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    if not 0 <= args.dropout <= MAX_DROPOUT:
        raise ValueError(f"dropout {args.dropout} outside [0, {MAX_DROPOUT}]")
    if args.noise < 0:
        raise ValueError("noise must be non-negative")
    out = Path(cfg.out or args.output or ".")
    if args.frames:
        seq = planted_loop_sequence(
            n_frames=args.frames, noise_sigma=args.noise, dropout_rate=args.dropout, seed=cfg.seed
        )
        seq_dir = export_sequence(seq, out, cfg.sequence)
        _emit({"sequence_dir": str(seq_dir), "frames": len(seq),
               "loops": [asdict(lp) for lp in seq.loops]})
        return 0
    spec = SceneSpec(seed=cfg.seed)
    t = OracleTransform(args.dx, args.dy, args.theta, args.noise, args.dropout)
    a = generate_scene(spec, 0)
    b = apply_transform(a, t, seed=cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    export_cloud(a, out / "a.bin", out / "a.label")
    export_cloud(b, out / "b.bin", out / "b.label")
    gt = {
        "transform": asdict(t),
        "expected_pose": _expected_pose(t),
        "scene": asdict(spec),
        "files": ["a.bin", "a.label", "b.bin", "b.label"],
    }
    (out / "gt.json").write_text(json.dumps(gt, indent=2), encoding="utf-8")
    _emit({"out": str(out), "points_a": len(a), "points_b": len(b)})
    return 0


def _expected_pose(t: OracleTransform) -> dict:
    p = t.recovered_pose()
    return {"dx": p.dx, "dy": p.dy, "theta_deg": p.theta_deg}


def _bench_inputs(args, cfg: RunConfig):
    if args.scans:
        if len(args.scans) % 2:
            raise ValueError("--scans takes scan/label path pairs")
        clouds = [_load(s, l, k) for k, (s, l) in enumerate(zip(args.scans[::2], args.scans[1::2]))]
    else:
        base = generate_scene(SceneSpec(seed=cfg.seed))
        rng = np.random.default_rng(cfg.seed)
        clouds = [base]
        for k in range(1, 4):
            t = OracleTransform(*rng.uniform(-3, 3, 2), rng.uniform(-180, 180), 0.05, 0.1)
            clouds.append(apply_transform(base, t, seed=cfg.seed + k))
    if len(clouds) < 2:
        raise ValueError("bench needs at least two scans")
    return clouds


def cmd_bench(args, cfg: RunConfig) -> int:
    if args.iterations < 100:
        raise ValueError("bench needs at least 100 iterations")
    clouds = _bench_inputs(args, cfg)
    descs = [describe(c, cfg.ssc, cfg.priority) for c in clouds]
    n = len(clouds)
    clock = time.perf_counter_ns

    def one(k):
        c = clouds[k % n]
        a, b = k % n, (k + 1) % n
        t0 = clock()
        describe(c, cfg.ssc, cfg.priority)
        t1 = clock()
        similarity(descs[a], descs[b])
        t2 = clock()
        estimate_relative_pose(clouds[a], clouds[b], cfg.sicp)
        t3 = clock()
        return (t1 - t0, t2 - t1, t3 - t2)

    if cfg.workers == 1:
        rows = [one(k) for k in range(args.iterations)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(one, range(args.iterations)))
    ms = np.array(rows, dtype=np.float64) / 1e6
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "unit", "mean_ms", "std_ms", "iterations", "mean_points"])
    mean_points = float(np.mean([len(c) for c in clouds]))
    for col, (stage, unit) in enumerate(
        [("description", "scan"), ("retrieval", "pair"), ("icp", "pair")]
    ):
        w.writerow([stage, unit, f"{ms[:, col].mean():.4f}", f"{ms[:, col].std():.4f}",
                    args.iterations, f"{mean_points:.0f}"])
    text = buf.getvalue()
    if cfg.out is not None:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file of settings (flags take precedence)")
    p.add_argument("--na", type=int, default=s, help="ring sectors (default 360)")
    p.add_argument("--nl", type=int, default=s, help="ICP search window in sectors (default 20)")
    p.add_argument("--ns", type=int, default=s, help="descriptor sectors (default 360)")
    p.add_argument("--nr", type=int, default=s, help="descriptor rings (default 50)")
    p.add_argument("--rmax", type=float, default=s, help="descriptor range in meters (default 50)")
    p.add_argument("--no-yaw", action="store_true", default=s, help="column-shift search instead of yaw alignment")
    p.add_argument("--no-icp", action="store_true", default=s, help="keep the translation at zero")
    p.add_argument("--no-semantic", action="store_true", default=s, help="encode max height instead of class")
    p.add_argument("--priority", default=s, help="class priority file ('class-name rank' lines)")
    p.add_argument("--seed", type=int, default=s)
    p.add_argument("--workers", type=int, default=s)
    p.add_argument("--out", default=s, help="output file or directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="write the descriptor of one labeled scan")
    p.add_argument("scan")
    p.add_argument("labels")
    p.add_argument("-o", "--output", help="descriptor path (default: <scan>.ssc)")
    _add_common(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", help="score two labeled scans")
    for name in ("scan_a", "labels_a", "scan_b", "labels_b"):
        p.add_argument(name)
    _add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="loop-closure evaluation on a sequence")
    _add_common(p)
    s = argparse.SUPPRESS
    p.add_argument("--dataset-root", default=s)
    p.add_argument("--sequence", default=s)
    p.add_argument("--alpha", type=float, default=s, help="negatives per positive (default 100)")
    p.add_argument("--min-gap", type=int, default=s, help="minimum frame gap of positives (default 100)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="export a synthetic pair or planted-loop sequence")
    _add_common(p)
    p.add_argument("-o", "--output", help="output directory (same as --out)")
    p.add_argument("--dx", type=float, default=1.5)
    p.add_argument("--dy", type=float, default=-1.0)
    p.add_argument("--theta", type=float, default=30.0, help="degrees")
    p.add_argument("--noise", type=float, default=0.0, help="per-axis sigma in meters")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--frames", type=int, default=0, help="export a planted-loop sequence instead")
    p.add_argument("--sequence", default=s)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time description, retrieval and ICP")
    _add_common(p)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--scans", nargs="+", help="scan/label path pairs (default: synthetic scenes)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = RunConfig.from_settings(resolve_settings(args))
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args, cfg)
    except (SSCError, OSError, ValueError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"ssc {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
