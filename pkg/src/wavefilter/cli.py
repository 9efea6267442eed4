"""Command-line entry point.

Subcommands: simulate | filter | compare | riccati.  Every run is a pure
function of (config file, seed): repeated invocations produce byte-identical
CSV output.

Exit codes: 0 success, 1 runtime failure, 2 config validation failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="path to a dotted-key config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavefilter",
        description="Simulation and filtering of stochastically forced wave models",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "simulate a truth path and its observation record"),
        ("filter", "run the configured filter(s) on a simulated record"),
        ("compare", "particle filter vs Kalman filter on one linear record"),
        ("riccati", "integrate the Riccati and Chandrasekhar covariance flows"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed_override=args.seed)
        out = args.out or config.out_dir
        if not out:
            raise ConfigError("output.dir", "no output directory (set output.dir or pass --out)")
        from . import harness

        runner = {
            "simulate": harness.run_simulate,
            "filter": harness.run_filter,
            "compare": harness.run_compare,
            "riccati": harness.run_riccati,
        }[args.command]
        runner(config, out, quiet=args.quiet)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
