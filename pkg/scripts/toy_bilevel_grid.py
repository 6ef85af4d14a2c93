"""Brute-force check of the toy bilevel program

    min (x - y)^2  s.t.  y in argmin{ y' : 0 <= y' <= 1 }

on a grid over [-2, 2]^2, followed by the smooth and nonsmooth stationarity
certificates at the grid minimizer and at a few shifted points.
"""

import argparse
from fractions import Fraction

import numpy as np

from varcalc.bilevel import BilevelProblem, check_noc_nonsmooth, solve_stationarity_smooth
from varcalc.functions import PiecewiseFunction, Var
from varcalc.geometry import Polyhedron


def toy() -> BilevelProblem:
    x, y = Var(0), Var(1)
    phi = PiecewiseFunction.build(2, [(Polyhedron.whole(2), y)])
    return BilevelProblem(1, 1, (x - y) ** 2, phi, (-y, y - 1))


def grid_minimizer(step: float, block: int = 400):
    xs = np.round(np.arange(-2.0, 2.0 + step / 2, step), 9)
    lower_ok = (xs >= 0) & (xs <= 1)
    mu = xs[lower_ok].min()
    best, arg = np.inf, None
    for i in range(0, len(xs), block):
        X = xs[i : i + block, None]
        psi = np.where(lower_ok[None, :] & (xs[None, :] <= mu + 1e-12), (X - xs[None, :]) ** 2, np.inf)
        j = np.unravel_index(np.argmin(psi), psi.shape)
        if psi[j] < best:
            best, arg = float(psi[j]), (float(X[j[0], 0]), float(xs[j[1]]))
    return best, arg, len(xs) ** 2


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--step", type=float, default=1e-3)
    args = ap.parse_args()
    best, arg, n = grid_minimizer(args.step)
    print(f"grid points: {n}, best value {best} at {arg}")
    B = toy()
    for xb in (Fraction(0), Fraction(1, 2), Fraction(-1), Fraction(3, 2)):
        s = solve_stationarity_smooth(B, (xb,), (0,), force=xb != 0)
        kappa = getattr(s, "kappa", 1)
        ns = check_noc_nonsmooth(B, (xb,), (0,), kappa, force=xb != 0)
        ns = ns if isinstance(ns, list) else [ns]
        print(f"x = {str(xb):>4}: smooth -> {type(s).__name__}, nonsmooth -> {sorted({type(c).__name__ for c in ns})}")
        if hasattr(s, "lam"):
            fmt = lambda v: "(" + ", ".join(map(str, v)) + ")"
            print(f"          kappa {s.kappa}, lambda {fmt(s.lam)}, beta {fmt(s.beta)}, residuals {s.residuals}")


if __name__ == "__main__":
    main()
