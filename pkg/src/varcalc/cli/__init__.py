"""Command-line entry point: ``varcalc <command> <file> [options]``.

Exit codes: 0 success, 2 hypothesis-gated downgrade, 3 violation or
infeasibility, 4 input error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from fractions import Fraction

from .commands import COMMANDS, INPUT_ERROR, Flags, InputError, run
from .parser import ParseError, ProblemFile, parse, render
from .report import SCHEMA_VERSION, dumps

__all__ = ["main", "parse", "render", "run", "ProblemFile", "ParseError", "InputError", "Flags", "build_report"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(INPUT_ERROR, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _fraction(text):
    try:
        v = Fraction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("must be a number") from exc
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def arg_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="varcalc", description="Exact and brute-force variational analysis of piecewise-affine problems.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("file")
    p.add_argument("--kappa", type=_fraction, help="penalty parameter for bilevel-check")
    p.add_argument("--force", action="store_true", help="report gated results even when a hypothesis fails")
    p.add_argument("--oracle-grid", type=_positive, metavar="STEP", help="dual grid step of the oracles")
    p.add_argument("--oracle-range", type=_positive, metavar="R", help="dual grid half-width of the oracles")
    p.add_argument("--json", metavar="OUT", help="also write the report to OUT")
    p.add_argument("--timing", action="store_true", help="include wall-clock time (breaks byte-identical output)")
    return p


def build_report(command: str, path: str, text: str, flags: Flags):
    """(report dict, exit code) for one command on one problem text."""
    base = {"schema_version": SCHEMA_VERSION, "command": command, "file": os.path.basename(path)}
    try:
        pf = parse(text)
        results, code = run(command, pf, flags)
    except ParseError as exc:
        return dict(base, error={"kind": "parse", "message": exc.message, "line": exc.line, "column": exc.column}, exit_code=INPUT_ERROR), INPUT_ERROR
    except InputError as exc:
        return dict(base, error={"kind": "input", "message": str(exc)}, exit_code=INPUT_ERROR), INPUT_ERROR
    flag_echo = {"kappa": flags.kappa, "force": flags.force, "oracle_grid": flags.oracle_step, "oracle_range": flags.oracle_range}
    return dict(base, task=pf.task, flags=flag_echo, results=results, exit_code=code), code


def main(argv=None) -> int:
    args = arg_parser().parse_args(argv)
    flags = Flags(args.kappa, args.force, args.oracle_grid, args.oracle_range)
    try:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        print(f"varcalc: cannot read {args.file}: {exc}", file=sys.stderr)
        return INPUT_ERROR
    t0 = time.perf_counter()
    report, code = build_report(args.command, args.file, text, flags)
    if args.timing:
        report["timing_seconds"] = time.perf_counter() - t0
    out = dumps(report)
    sys.stdout.write(out)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(out)
    if "error" in report:
        err = report["error"]
        where = f":{err['line']}:{err['column']}" if "line" in err else ""
        print(f"varcalc: {args.file}{where}: {err['message']}", file=sys.stderr)
    return code
