"""``winkler-lab`` command line.

Exit codes: 0 success, 1 hard failure during the computation, 2 bad config.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..fields import StencilError
from ..forward import AssemblyError, SolverError
from ..grid import GeometryError
from ..inverse import ReconstructionError
from ..material import ConvexityError
from .config import ConfigError, load_config, with_overrides
from .runner import COMMANDS

HARD_FAILURES = (AssemblyError, SolverError, GeometryError, ConvexityError, StencilError,
                 ReconstructionError, ValueError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="winkler-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"run": "baseline solve, audits and the stability sweep",
             "solve": "forward solve only",
             "reconstruct": "forward solve, synthetic measurement and coefficient recovery",
             "audit": "audits on the baseline solve"}
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="concurrent sweep points")
        p.add_argument("--out", help="output directory")
        p.add_argument("--resolution", type=int, help="nodes on the shorter side")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = with_overrides(load_config(args.config), args.seed, args.workers, args.out,
                             args.resolution)
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](cfg)
    except HARD_FAILURES as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {cfg.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
