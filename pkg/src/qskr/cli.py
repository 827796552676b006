"""Command-line entry point: ``qskr run <config> [options]``."""

from __future__ import annotations

import argparse
import sys

from .config import parse_config, serialize_config
from .errors import ConfigError
from .experiments import SCENARIOS, run_experiment, with_overrides

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def build_parser():
    parser = argparse.ArgumentParser(prog="qskr", description="NOMA-CVQKD key-rate sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario described by a configuration file")
    run.add_argument("config", help="configuration file")
    run.add_argument("--scenario", choices=SCENARIOS, help="override the configured scenario")
    run.add_argument("--seed", type=int, help="override the base seed")
    run.add_argument("--out", help="CSV output path (summary JSON goes alongside)")
    run.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--strict", action="store_true",
                     help="treat unknown configuration keys as errors instead of warnings")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        system, spec = parse_config(args.config, strict=args.strict)
        spec = with_overrides(spec, args.scenario, args.seed, args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"qskr: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = run_experiment(spec, system, threads=args.threads,
                             config_text=serialize_config(system, spec))
    print(f"wrote {summary.rows} rows to {summary.output_path} "
          f"({summary.failed_points} failed) in {summary.wall_time_s:.1f} s")
    for err in summary.errors:
        print(f"  {err}", file=sys.stderr)
    return EXIT_OK if summary.ok else EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
