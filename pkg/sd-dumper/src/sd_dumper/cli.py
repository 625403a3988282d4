"""Command-line entry points: dump-goal and dump-recon."""

from __future__ import annotations

import argparse
import sys

from .backends import get_backend
from .errors import DumperError
from .jobs import DumpJob, dump_goal, dump_reconstruction


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument(
        "--words",
        help="comma-separated object words (default: comma-split of the prompt)",
    )
    parser.add_argument("--backend", default="toy", choices=["toy", "sd"])
    parser.add_argument("--model", help="model identifier for the sd backend")
    parser.add_argument(
        "--layers",
        default="all",
        help="cross-attention layer selection for the sd backend (default: all)",
    )
    parser.add_argument("--out", required=True, help="output prefix (.paca/.png added)")


def _backend(args):
    kwargs = {}
    if args.backend == "sd":
        if args.model:
            kwargs["model_id"] = args.model
        kwargs["layer_selection"] = args.layers
    return get_backend(args.backend, **kwargs)


def _words(args) -> tuple[str, ...]:
    if not args.words:
        return ()
    return tuple(w.strip().lower() for w in args.words.split(",") if w.strip())


def main_goal(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dump-goal", description="generate a goal scene and dump attention"
    )
    parser.add_argument("--prompt", required=True)
    parser.add_argument("--cfg", type=float, default=7.5)
    parser.add_argument("--control", help="perspective-control raster PNG (512x512)")
    _common(parser)
    args = parser.parse_args(argv)
    try:
        job = DumpJob(
            prompt=args.prompt,
            seed=args.seed,
            cfg_scale=args.cfg,
            steps=args.steps,
            control_image=args.control,
            object_words=_words(args),
            out_prefix=args.out,
        )
        out = dump_goal(job, _backend(args))
    except DumperError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    print(f"goal dump -> {out}")
    return 0


def main_recon(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dump-recon",
        description="invert and reconstruct a real image, dumping attention",
    )
    parser.add_argument("--image", required=True, help="real scene RGB PNG (512x512)")
    parser.add_argument("--prompt", required=True)
    parser.add_argument("--cfg", type=float, default=0.0)
    _common(parser)
    args = parser.parse_args(argv)
    try:
        job = DumpJob(
            prompt=args.prompt,
            seed=args.seed,
            cfg_scale=args.cfg,
            steps=args.steps,
            input_image=args.image,
            object_words=_words(args),
            out_prefix=args.out,
        )
        out = dump_reconstruction(job, _backend(args))
    except DumperError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2
    print(f"reconstruction dump -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main_goal())
