"""Command-line front end: ``hpe <verb> [--config PATH] [--out DIR] [--seed N] [--threads N]``.

Exit status: 0 success, 1 failed self-check, 2 configuration error,
3 Picard non-convergence, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ScenarioConfig, load_config
from .errors import ConfigError, HPEError, NonConvergence, NumericAbort
from . import runner

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_NUMERIC = 4

VERBS = {
    "simulate": runner.run_simulation,
    "picard": runner.run_picard,
    "bench": runner.run_bench,
    "probe": runner.run_probe,
    "check": runner.run_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpe", description="Half-plane Euler vorticity experiments.")
    ap.add_argument("verb", choices=sorted(VERBS), help="what to run")
    ap.add_argument("--config", help="flat 'key = value' configuration file")
    ap.add_argument("--out", help="output directory (overrides 'out' in the config)")
    ap.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
    ap.add_argument("--threads", type=int, help="numba worker threads (overrides the config)")
    return ap


def configure_logging() -> None:
    level = os.environ.get("HPE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def resolve_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    log = logging.getLogger("hpe")
    try:
        cfg = resolve_config(args)
        result = VERBS[args.verb](cfg)
    except ConfigError as exc:
        print(f"hpe: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergence as exc:
        print(f"hpe: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except NumericAbort as exc:
        print(f"hpe: numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HPEError as exc:
        print(f"hpe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, path in result.outputs.items():
        log.info("wrote %s: %s", name, path)
    if args.verb == "check" and not result.extra.get("passed", False):
        print("hpe: self-check failed", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
