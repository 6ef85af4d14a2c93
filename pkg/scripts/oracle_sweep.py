"""Run the brute-force oracles against the exact engine on every oracle
fixture, for several dual grid steps, and print one row per fixture."""

import argparse
from pathlib import Path

from varcalc.cli.commands import Flags, run
from varcalc.cli.parser import parse

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "oracle"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.5, 0.25, 0.125])
    ap.add_argument("--range", type=float, default=None, help="dual grid half-width override")
    args = ap.parse_args()
    print(f"{'fixture':36} {'step':>6} {'grid':>6} {'inside rejected':>16} {'far accepted':>13}")
    failures = 0
    for path in sorted(FIXTURES.glob("*.vc")):
        pf = parse(path.read_text())
        for step in args.steps:
            res, _ = run("oracle-compare", pf, Flags(oracle_step=step, oracle_range=args.range))
            c = res["consistency"]
            failures += not c.ok
            print(f"{path.stem:36} {step:6g} {c.grid_points:6d} {len(c.inside_rejected):16d} {len(c.outside_accepted):13d}")
    print(f"\n{failures} inconsistent runs")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
