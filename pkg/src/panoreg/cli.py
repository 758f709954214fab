"""Command-line interface.

Exit codes: 0 success, 1 usage/schema/IO error, 2 registration failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import PanoregError, RegistrationFailure
from .fusion import extruded_obj, fuse
from .geometry import SampleGrid
from .losses import map_losses, total_loss
from .metrics import MetricsReport
from .pipeline import evaluate_pair
from .registration import RansacConfig, register
from .scene import NoiseSpec, ground_truth_maps, perturb_maps, random_scene
from .sweep import SweepConfig, run_sweep

DEFAULT_GRID_N = 256
CONFIG_ENV = "PANOREG_CONFIG"

EXIT_OK, EXIT_ERROR, EXIT_REGISTRATION = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with registration failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _global_flags(parser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default if suppress else 0, help="base random seed")
    parser.add_argument("--grid-n", type=int, default=default, help=f"horizon samples (default {DEFAULT_GRID_N})")
    parser.add_argument("--out", default=default, help="output path (stdout when omitted, where allowed)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panoreg", description="Two-view panorama registration via horizon maps.")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate random scene files")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--vertex-budget", type=int, default=4)
    p.add_argument("--extent", type=float, default=6.0)
    p.add_argument("--non-manhattan", action="store_true")
    p.add_argument("--convex", action="store_true")

    p = sub.add_parser("gt-maps", parents=[common], help="oracle horizon maps of a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--pose-out", help="also write the ground-truth pose file here")

    p = sub.add_parser("perturb", parents=[common], help="add simulated prediction noise to maps")
    p.add_argument("--maps", required=True)
    p.add_argument("--sigma-v", type=float, default=0.0)
    p.add_argument("--sigma-o", type=float, default=0.0)
    p.add_argument("--outlier-frac", type=float, default=0.0)
    p.add_argument("--flip-p", type=float, default=0.0)

    p = sub.add_parser("register", parents=[common], help="estimate the relative pose from maps")
    p.add_argument("--maps", required=True)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--inlier-tol", type=float)
    p.add_argument("--covis-threshold", type=float, default=0.5)
    p.add_argument("--min-inliers", type=int, default=8)
    p.add_argument("--boundary", choices=["ceiling", "floor", "both"], default="ceiling")
    p.add_argument("--interpolation", choices=["ray", "linear"], default="ray")
    p.add_argument("--no-covis", action="store_true", help="skip the covisibility filter")

    p = sub.add_parser("fuse", parents=[common], help="fuse both layouts into the pano-1 frame")
    p.add_argument("--maps", required=True)
    p.add_argument("--pose", help="pose file; omitted or failed means pano 1 alone")
    p.add_argument("--boundary", choices=["floor", "ceiling"], default="floor")
    p.add_argument("--manhattan", action="store_true")
    p.add_argument("--obj", help="also write an OBJ mesh")

    p = sub.add_parser("eval", parents=[common], help="metrics CSV for predicted layouts and poses")
    p.add_argument("--scene", action="append", required=True)
    p.add_argument("--layout", action="append", required=True)
    p.add_argument("--pose", action="append", required=True)
    p.add_argument("--losses", action="store_true", help="add loss columns (needs --pred-maps/--gt-maps)")
    p.add_argument("--pred-maps", action="append", default=[])
    p.add_argument("--gt-maps", action="append", default=[])
    p.add_argument("--delta-exponent", type=int, default=1)
    p.add_argument("--maa-step", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.1)

    p = sub.add_parser("sweep", parents=[common], help="noise sweep over random scenes")
    p.add_argument("--config", help=f"sweep config JSON (default: ${CONFIG_ENV})")
    p.add_argument("--workers", type=int, default=1)
    return parser


def _emit(args, text: str) -> None:
    if args.out:
        io.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _grid_n(args, fallback: int = DEFAULT_GRID_N) -> int:
    return args.grid_n if args.grid_n is not None else fallback


def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("synth needs --out DIR")
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid_n = _grid_n(args)
    entries = []
    for j in range(args.count):
        s = int(np.random.SeedSequence((args.seed, j)).generate_state(1)[0])
        scene = random_scene(s, args.vertex_budget, args.extent, not args.non_manhattan, args.convex)
        name = f"scene_{j:04d}.json"
        io.save_scene(out / name, scene, grid_n, scene_id=f"scene_{j:04d}", seed=s)
        entries.append({"file": name, "seed": s})
    manifest = {"format_version": io.FORMAT_VERSION, "type": "manifest", "seed": args.seed, "scenes": entries}
    io.atomic_write(out / "manifest.json", io.dumps(manifest))
    return EXIT_OK


def cmd_gt_maps(args) -> int:
    scene, n = io.load_scene(args.scene)
    maps1, maps2 = ground_truth_maps(scene, SampleGrid(_grid_n(args, n)))
    _emit(args, io.dumps(io.maps_to_doc(maps1, maps2, "oracle")))
    if args.pose_out:
        pose = scene.pose
        doc = {
            "format_version": io.FORMAT_VERSION,
            "type": "pose",
            "theta_deg": math.degrees(pose.theta),
            "t": [float(c) for c in pose.t],
            "rmse": 0.0,
            "n_inliers": 0,
            "success": True,
        }
        io.atomic_write(args.pose_out, io.dumps(doc))
    return EXIT_OK


def cmd_perturb(args) -> int:
    maps1, maps2, _ = io.load_maps(args.maps)
    s1, s2 = np.random.SeedSequence(args.seed).generate_state(2)
    axes = (args.sigma_v, args.sigma_o, args.outlier_frac, args.flip_p)
    maps1 = perturb_maps(maps1, NoiseSpec(*axes, seed=int(s1)))
    maps2 = perturb_maps(maps2, NoiseSpec(*axes, seed=int(s2)))
    _emit(args, io.dumps(io.maps_to_doc(maps1, maps2, "perturbed")))
    return EXIT_OK


def cmd_register(args) -> int:
    maps1, maps2, _ = io.load_maps(args.maps)
    cfg = RansacConfig(
        iterations=args.iterations,
        inlier_tol=args.inlier_tol,
        covis_threshold=args.covis_threshold,
        min_inliers=args.min_inliers,
        seed=args.seed,
        boundary=args.boundary,
        use_covisibility=not args.no_covis,
        interpolation=args.interpolation,
    )
    try:
        result = register(maps1, maps2, cfg)
    except RegistrationFailure as exc:
        _emit(args, io.dumps(io.pose_to_doc(None, f"{type(exc).__name__}: {exc}")))
        print(f"panoreg: registration failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_REGISTRATION
    _emit(args, io.dumps(io.pose_to_doc(result)))
    return EXIT_OK


def cmd_fuse(args) -> int:
    maps1, maps2, _ = io.load_maps(args.maps)
    pose = io.load_pose(args.pose) if args.pose else None
    layout = fuse(maps1, maps2, pose, boundary=args.boundary, manhattan=args.manhattan)
    _emit(args, io.dumps(io.layout_to_doc(layout)))
    if args.obj:
        io.atomic_write(args.obj, extruded_obj(layout))
    return EXIT_OK


def cmd_eval(args) -> int:
    n = len(args.scene)
    if len(args.layout) != n or len(args.pose) != n:
        raise UsageError("--scene, --layout and --pose must be given the same number of times")
    if args.losses and (len(args.pred_maps) != n or len(args.gt_maps) != n):
        raise UsageError("--losses needs one --pred-maps and one --gt-maps per scene")
    records, losses = [], [] if args.losses else None
    for k in range(n):
        doc = io.read_json(args.scene[k], io.SCENE_SCHEMA)
        scene, scene_n = io.scene_from_doc(doc)
        scene_id = doc.get("scene_id", Path(args.scene[k]).stem)
        layout = io.load_layout(args.layout[k])
        pose = io.load_pose(args.pose[k])
        grid = SampleGrid(_grid_n(args, scene_n))
        records.append(evaluate_pair(scene_id, scene, layout, pose, grid, args.delta_exponent))
        if args.losses:
            p1, p2, _ = io.load_maps(args.pred_maps[k])
            g1, g2, _ = io.load_maps(args.gt_maps[k])
            comps = map_losses(p1, p2, g1, g2, alpha=args.alpha)
            losses.append(
                {
                    "loss_layout": comps.layout,
                    "loss_cor": comps.cor,
                    "loss_covis": comps.covis,
                    "loss_cycle_cor": comps.cycle_cor,
                    "loss_cycle_covis": comps.cycle_covis,
                    "loss_total": total_loss(comps),
                }
            )
    report = MetricsReport(records, maa_step=args.maa_step)
    _emit(args, io.report_csv(report, losses, args.delta_exponent))
    return EXIT_OK


def cmd_sweep(args) -> int:
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        raise UsageError(f"sweep needs --config or ${CONFIG_ENV}")
    cfg = SweepConfig.from_doc(io.read_json(path, io.SWEEP_SCHEMA))
    if args.grid_n is not None:
        cfg = SweepConfig(**{**vars(cfg), "grid_n": args.grid_n})
    _emit(args, io.sweep_csv(run_sweep(cfg, args.workers)))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "gt-maps": cmd_gt_maps,
    "perturb": cmd_perturb,
    "register": cmd_register,
    "fuse": cmd_fuse,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        if args.grid_n is not None and args.grid_n < 4:
            raise UsageError("--grid-n must be >= 4")
        return COMMANDS[args.command](args)
    except (UsageError, PanoregError, OSError, ValueError, KeyError) as exc:
        print(f"panoreg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
