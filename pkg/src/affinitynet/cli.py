"""``affinitynet`` command line: synthetic | classify | cluster | survival | gradcheck.

Exit status: 0 success, 1 invalid config or data, 2 runtime failure or
divergence, 3 a threshold check failed under ``--assert``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments
from .errors import ConfigError, Diverged

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_ASSERT = 0, 1, 2, 3

DEFAULT_OUT = {
    "synthetic": "runs/synthetic",
    "classify": "runs/classify",
    "cluster": "runs/cluster",
    "survival": "runs/survival",
    "gradcheck": "runs/gradcheck",
}


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affinitynet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in experiments.CONFIGS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", help="JSON file of config values")
        p.add_argument("--seed", type=int, help="base seed; repetition r uses seed + r")
        p.add_argument("--out", metavar="DIR", help=f"output directory (default {DEFAULT_OUT[name]})")
        p.add_argument("--reps", type=int, help="number of repetitions")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config value (JSON literal); repeatable")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        p.add_argument("--assert", dest="assert_checks", action="store_true",
                       help="exit with status 3 if any threshold check fails")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = experiments.load_config_file(args.config) if args.config else {}
        overrides = _parse_set(args.set)
        for key in ("seed", "reps"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        cfg = experiments.make_config(args.command, file_values, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    out = args.out or DEFAULT_OUT[args.command]
    try:
        summary = experiments.RUNNERS[args.command](cfg, out)
    except Diverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        # every validation error in the package is a ValueError
        print(f"invalid input: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ArithmeticError, MemoryError, RuntimeError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    failed = [name for name, ok in summary["checks"].items() if not ok]
    for name, ok in summary["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"report written to {out}")
    if failed and args.assert_checks:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
