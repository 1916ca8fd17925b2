"""``fearlab`` command line.

    fearlab <subcommand> --config PATH [--seed N] [--paper-compat] [--paper-eq2-minus] [--out DIR]

Exit status: 0 success, 1 validation failure, 2 runtime failure.
"""

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .pipeline import STAGES, MissingArtifact, run_stage

log = logging.getLogger("fearlab")


def build_parser():
    p = argparse.ArgumentParser(prog="fearlab", description="Volatility index, signals and direction-model pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "all"):
        s = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every stage in order")
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--paper-compat", action="store_true",
                       help="normalise and fit thresholds on the full series")
        s.add_argument("--paper-eq2-minus", action="store_true",
                       help="blend expiries with the printed minus sign")
        s.add_argument("--out", type=Path)
        s.add_argument("-v", "--verbose", action="store_true")
    fx = sub.add_parser("fixture", help="write the synthetic end-to-end input set and a config")
    fx.add_argument("--out", type=Path, required=True)
    fx.add_argument("--days", type=int, default=10)
    fx.add_argument("--seed", type=int, default=7)
    fx.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fixture":
        from .fixture import write_fixture

        path = write_fixture(args.out, days=args.days, seed=args.seed)
        print(path)
        return 0
    try:
        cfg = load_config(args.config, seed=args.seed, paper_compat=args.paper_compat,
                          paper_eq2_minus=args.paper_eq2_minus, out=args.out)
    except ConfigError as exc:
        print(f"fearlab: {exc}", file=sys.stderr)
        return 1
    try:
        run_stage(cfg, args.command)
    except MissingArtifact as exc:
        print(f"fearlab: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, reported with its stage
        log.debug("failure", exc_info=True)
        print(f"fearlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
