"""Command-line front door.

Subcommands mirror the pipeline stages:

    canonctl gen-data --config cfg.json [--out DIR] [--seed S]
    canonctl train    --config cfg.json [--out DIR] [--seed S]
    canonctl eval     --config cfg.json [--out DIR] [--checkpoint CKPT]
    canonctl plan     --config cfg.json [--out DIR] [--checkpoint CKPT]
    canonctl simulate --config cfg.json [--out DIR] [--checkpoint CKPT]
    canonctl transfer --config cfg.json [--out DIR] [--checkpoint CKPT]

Exit codes: 0 success, 1 runtime/numeric failure, 2 configuration error.
Log verbosity comes from the CANONCTL_LOG environment variable
(debug | info | warning; default warning).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, load_config

COMMANDS = {
    "gen-data": pipeline.cmd_gen_data,
    "train": pipeline.cmd_train,
    "eval": pipeline.cmd_eval,
    "plan": pipeline.cmd_plan,
    "simulate": pipeline.cmd_simulate,
    "transfer": pipeline.cmd_transfer,
}

TAKES_CHECKPOINT = {"eval", "plan", "simulate", "transfer"}


def _setup_logging() -> None:
    level = os.environ.get("CANONCTL_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canonctl",
        description="Data-driven feedback linearization toolchain")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gen-data": "record an excitation dataset from the configured plant",
        "train": "train the transformation auto-encoder on a recorded dataset",
        "eval": "evaluate rollout prediction and reconstruction on held-out data",
        "plan": "plan a canonical reference trajectory between operating points",
        "simulate": "run the closed-loop maneuver and export traces",
        "transfer": "adapt the controller to a perturbed plant from new recordings",
    }
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", default=None,
                       help="output directory (default: config 'output')")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed overriding all stage seeds")
        if name in TAKES_CHECKPOINT:
            p.add_argument("--checkpoint", default=None,
                           help="checkpoint path (default: <out>/checkpoint.json)")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.reseed(args.seed)
        out_dir = Path(args.out if args.out is not None else cfg.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        if args.command in TAKES_CHECKPOINT:
            report = fn(cfg, out_dir, checkpoint=args.checkpoint)
        else:
            report = fn(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: ok (report-{args.command}.json in {out_dir})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
