"""Command-line interface.

Exit codes: 0 success, 1 matching failure, 2 I/O error, 3 format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import imageio
from .attention import split_instances
from .dumpio import read_dump
from .errors import (
    ConfigError,
    DatasetFormatError,
    FormatError,
    ManifestMismatchError,
    PacaError,
    RasterRangeError,
    RasterShapeError,
)
from .evaluate import run_eval
from .overlay import render_overlay
from .perspective import edge_map, hough_lines, rasterize_control
from .planner import DepthInputs, build_plan, plan_to_json
from .runconfig import RunConfig, load_config

_FORMAT_ERRORS = (
    FormatError,
    ManifestMismatchError,
    RasterRangeError,
    RasterShapeError,
    DatasetFormatError,
    ConfigError,
)


def cmd_hough(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    params = config.hough
    color = imageio.load_color(args.image)
    edges = edge_map(color, low=params.canny_low, high=params.canny_high)
    lines = hough_lines(edges, params)
    control = rasterize_control(lines, size=edges.shape)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    imageio.save_binary(out, control)
    lines_path = Path(args.lines) if args.lines else out.with_suffix(".lines.json")
    lines_path.write_text(
        json.dumps(
            [{"rho": l.rho, "theta": l.theta, "votes": l.votes} for l in lines],
            indent=2,
        )
        + "\n"
    )
    print(f"{len(lines)} lines -> {out}")
    return 0


def cmd_match(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    if args.mode and args.mode != config.mode:
        intr = config.intrinsics if args.mode == "6dof" else None
        config = dataclasses.replace(config, mode=args.mode, intrinsics=intr)
    goal = read_dump(args.goal_dump)
    real = read_dump(args.real_dump)

    depths = None
    if config.mode == "6dof":
        if not args.goal_depth or not args.real_depth:
            raise ConfigError("6dof mode requires --goal-depth and --real-depth")
        goal_est, goal_valid = imageio.load_depth(args.goal_depth)
        real_depth, real_valid = imageio.load_depth(args.real_depth)
        depths = DepthInputs(goal_est, goal_valid, real_depth, real_valid)

    plan = build_plan(goal, real, config, depths)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan_to_json(plan))

    if args.overlay:
        if args.frame:
            frame = imageio.load_color(args.frame)
        else:
            frame = np.full((512, 512, 3), 120, dtype=np.uint8)
        reps = []
        for word in sorted(set(goal.words) & set(real.words)):
            try:
                rep = real.representation(word, config.tau1, config.tau2)
                reps.extend(split_instances(rep, config.min_instance_area))
            except PacaError:
                continue
        imageio.save_color(args.overlay, render_overlay(frame, reps, plan))

    n_matches = sum(len(o["matches"]) for o in plan["objects"])
    print(f"{n_matches} matches -> {out}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    metrics = run_eval(args.dataset_dir, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    acc = metrics["overall"]["matching_accuracy"]
    print(f"matching accuracy {acc:.4f} over {metrics['overall']['pairs']} pairs -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paca",
        description="Attention-map perception engine for tabletop rearrangement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_hough = sub.add_parser("hough", help="extract scene lines and write the control raster")
    p_hough.add_argument("image", help="real-scene RGB PNG")
    p_hough.add_argument("--config", help="run-config JSON")
    p_hough.add_argument("--out", required=True, help="output control PNG")
    p_hough.add_argument("--lines", help="output line-list JSON (default: <out>.lines.json)")
    p_hough.set_defaults(func=cmd_hough)

    p_match = sub.add_parser("match", help="match goal and real dumps into a transform plan")
    p_match.add_argument("goal_dump", help="goal attention dump")
    p_match.add_argument("real_dump", help="real-scene attention dump")
    p_match.add_argument("--config", help="run-config JSON")
    p_match.add_argument("--out", required=True, help="output plan JSON")
    p_match.add_argument("--overlay", help="optional overlay PNG")
    p_match.add_argument("--frame", help="real-scene RGB PNG used as overlay background")
    p_match.add_argument("--mode", choices=["3dof", "6dof"], help="override config mode")
    p_match.add_argument("--goal-depth", help="estimated goal depth (16-bit mm PNG)")
    p_match.add_argument("--real-depth", help="measured real depth (16-bit mm PNG)")
    p_match.set_defaults(func=cmd_match)

    p_eval = sub.add_parser("eval", help="score assignments against a labeled dataset")
    p_eval.add_argument("dataset_dir", help="directory containing dataset.json")
    p_eval.add_argument("--config", help="run-config JSON")
    p_eval.add_argument("--out", required=True, help="output metrics JSON")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _FORMAT_ERRORS as e:
        print(f"format error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    except PacaError as e:
        print(f"matching error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
