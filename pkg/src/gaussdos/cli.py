"""Command-line front end: parse a config file and run the experiment."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .runner import EXIT_CONFIG, run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gaussdos",
        description="Batch experiments on Schrodinger operators with "
                    "Gaussian random potentials")
    parser.add_argument("--config", required=True, help="config file (INI sections or JSON)")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, help="worker count (overrides config)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--format", choices=("csv", "json", "both"),
                        help="output format (overrides config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for err in exc.errors:
            print(err, file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, out_dir=args.out, master_seed=args.seed,
               workers=args.workers, fmt=args.format)


if __name__ == "__main__":
    sys.exit(main())
