"""Command-line entry point: ``reductionkit <experiment> --config PATH``."""

from __future__ import annotations

import argparse
import logging
import sys

from .exceptions import ConfigError
from .harness import EXIT_CONFIG, EXPERIMENTS, load_config, parse_config, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reductionkit", description="Run a reduction-chain experiment.")
    parser.add_argument("experiment", help="one of: " + ", ".join(sorted(EXPERIMENTS)))
    parser.add_argument("--config", help="INI configuration file (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--workers", type=int, help="parallel sweep workers")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "out": args.out, "workers": args.workers}
    try:
        if args.config:
            config = load_config(args.config, args.experiment, **overrides)
        else:
            config = parse_config("", args.experiment, **overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, result, messages = run(config)
    for line in messages:
        print(line, file=sys.stderr)
    if result is not None:
        verdict = "PASS" if result.passed else "FAIL"
        print(f"{verdict} {config.kind}: {sum(a.passed for a in result.assertions)}/{len(result.assertions)} assertions, reports in {config.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
