"""Command line entry point ``rk``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, RKError
from .experiments import TASKS, load_config, run

log = logging.getLogger("rkit")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rk", description="Run an rkit experiment from a JSON config.")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--out", default="out", help="artifact root; results go to <out>/<config hash>/")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--version", action="version", version=f"rk {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _diagnose(kind: str, exc: Exception) -> None:
    """Machine-readable error line on stderr."""
    print(json.dumps({"error": kind, "type": type(exc).__name__, "module": type(exc).__module__,
                      "message": str(exc)}), file=sys.stderr)


def main(argv=None) -> int:
    """Exit codes: 0 pass, 1 fail, 2 invalid input, 3 numerical failure."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.task, args.seed)
    except ConfigError as exc:
        _diagnose("validation", exc)
        return 2
    try:
        report, out = run(cfg, Path(args.out))
    except RKError as exc:
        _diagnose("validation" if exc.exit_code == 2 else "numerical", exc)
        return exc.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        _diagnose("numerical", exc)
        return 3
    print(json.dumps({"task": report.task, "passed": report.passed, "dir": str(out)}))
    for c in report.checks:
        log.info("%s %s", "PASS" if c.passed else "FAIL", c.name)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
