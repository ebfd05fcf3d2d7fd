"""Command-line interface.

Subcommands: simulate, estimate-mu, shape-test, selftest, replay-check.
Configuration comes from a JSON file (--config); flags override top-level
scalars. Exit codes: 0 success, 1 config error, 2 check failure.
"""

from __future__ import annotations

import argparse
import sys

from .commands import cmd_estimate_mu, cmd_replay_check, cmd_shape_test, cmd_simulate
from .config import ConfigError, load_config, load_config_file
from .selftest import run_selftest


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (a manifest also works)")
    parser.add_argument("--seed", type=int, help="override root seed")
    parser.add_argument("--output-dir", dest="output_dir", help="override output directory")
    parser.add_argument("--replications", type=int, help="override replication count")
    parser.add_argument("--workers", type=int, help="override worker-pool size")
    parser.add_argument("--dimension", type=int, help="override dimension")
    parser.add_argument("--stepper", choices=["rate", "thinning"], help="override stepper")
    parser.add_argument("--t-max", dest="t_max", type=float, help="override time horizon")
    parser.add_argument("--n-max", dest="n_max", type=int, help="override event-count horizon")
    parser.add_argument("--epsilon", type=float, help="override shape tolerance")
    parser.add_argument("--mu", type=float, help="override shape constant input")
    parser.add_argument("--mu-file", dest="mu_file", help="override shape constant input file")


def _config_from_args(args: argparse.Namespace):
    overrides = {
        key: getattr(args, key)
        for key in (
            "seed",
            "output_dir",
            "replications",
            "workers",
            "dimension",
            "stepper",
            "t_max",
            "n_max",
            "epsilon",
            "mu",
            "mu_file",
        )
        if getattr(args, key, None) is not None
    }
    if args.config:
        return load_config_file(args.config, overrides)
    return load_config({}, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outburst",
        description="Simulate and measure the continuum ball-growth model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run replications, write event-log CSVs")
    _add_config_flags(p)

    p = sub.add_parser("estimate-mu", help="estimate the shape constant along a direction")
    _add_config_flags(p)

    p = sub.add_parser("shape-test", help="check the inner/outer ball sandwich at t_max")
    _add_config_flags(p)

    p = sub.add_parser("selftest", help="run built-in consistency checks")
    p.add_argument(
        "--inject-grid-fault",
        action="store_true",
        help="corrupt the grid index on purpose (negative control; selftest must fail)",
    )

    p = sub.add_parser("replay-check", help="validate event-log CSVs against the process rules")
    p.add_argument("paths", nargs="+", help="event-log files or directories of rep*.csv")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(_config_from_args(args))
        if args.command == "estimate-mu":
            return cmd_estimate_mu(_config_from_args(args))
        if args.command == "shape-test":
            return cmd_shape_test(_config_from_args(args))
        if args.command == "selftest":
            return run_selftest(inject_grid_fault=args.inject_grid_fault)
        if args.command == "replay-check":
            return cmd_replay_check(args.paths)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
