"""Command line entry point: ``morseflow run|validate|list-scenarios``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import BUNDLED, bundled_path, load
from .errors import ConfigurationError, MorseflowError
from .runner import run


def _cmd_run(args) -> int:
    cfg = load(args.scenario)
    report = run(cfg, args.output_dir)
    for o in report.outcomes:
        line = f"{o.id:<24} {o.op:<28} {o.status:<8} {o.reason}"
        if o.message and o.status != "ok":
            line += f"  ({o.message})"
        print(line)
    for w in report.warnings:
        print(f"warning: {w}")
    print(f"outputs written to {report.output_dir} in {report.timing:.1f} s")
    return report.exit_code


def _cmd_validate(args) -> int:
    load(args.scenario)
    print(f"{args.scenario}: valid")
    return 0


def _cmd_list(args) -> int:
    for name in BUNDLED:
        print(f"{name}\t{bundled_path(name)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morseflow", description="Pullback limits, Morse decompositions "
                                     "and Lyapunov functions for random dynamical systems.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a scenario file or bundled scenario")
    p_run.add_argument("scenario", help="path to a YAML scenario or a bundled scenario name")
    p_run.add_argument("-o", "--output-dir", type=Path, default=None,
                       help="output directory (overrides MORSEFLOW_OUTPUT_DIR and the scenario)")
    p_run.set_defaults(func=_cmd_run)
    p_val = sub.add_parser("validate", help="check a scenario and list every problem")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=_cmd_validate)
    p_list = sub.add_parser("list-scenarios", help="list bundled scenarios")
    p_list.set_defaults(func=_cmd_list)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for p in exc.problems:
            if p != str(exc):
                print(f"  - {p}", file=sys.stderr)
        return 2
    except MorseflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
