"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line (with its wall-clock budget); the
lines are repeated in the pytest terminal summary and printed when this file
is run as a script.
"""

import json
import os
import subprocess
import sys
from collections import Counter
from contextlib import contextmanager
from fractions import Fraction as F
from time import perf_counter

import pytest

from conftest import FIXTURES, convex_plane, kink_minus_y, quartic
from test_bilevel import PERTURBED, brute_force_local_min, toy
from test_exact_subdiff import CONVERSIONS, DISTANCE_SETS, SCALARIZATION
from varcalc.bilevel import KAPPA_GRID, Infeasible, StationarityCertificate, check_noc_nonsmooth, solve_stationarity_smooth
from varcalc.cli.commands import Flags, run
from varcalc.cli.parser import parse
from varcalc.exact_subdiff import (
    coderivative,
    distance_subdiff_identity_check,
    epi_graph_normal_convert,
    regular_subdiff_pwl,
    scalarize_coderivative,
    singular_regular_subdiff_pwl,
    upper_regular_subdiff_pwl,
)
from varcalc.geometry import Polyhedron, PolyhedralUnion, includes, intersect_unions, minkowski_sum, regular_normal_cone, same_set
from varcalc.marginal import (
    EQUALITY,
    HYPOTHESES,
    LOWER_ONLY,
    check_hypothesis,
    check_Q2,
    direct_marginal_subdiffs,
    exact_regular_diffcost,
    exact_regular_q2,
    exact_singular_diffcost,
    exact_singular_q2,
    lower_estimate_regular,
    lower_estimate_singular,
    marginal_epigraph,
    marginal_q_sets,
    qual_report,
    upper_estimate_singular,
)
from varcalc.oracles import two_sided_check

LINES: list[str] = []


@contextmanager
def criterion(n, title, limit=None):
    t0 = perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        dt = perf_counter() - t0
        fast = limit is None or dt < limit
        budget = f" / {limit}s" if limit else ""
        LINES.append(f"{'PASS' if ok and fast else 'FAIL'} criterion {n}: {title} [{dt:.2f}s{budget}]")
        print(LINES[-1])
    assert fast, f"took {dt:.2f}s, budget {limit}s"


def U(P):
    return PolyhedralUnion.single(P)


def H(dim, ineq=(), eq=()):
    return U(Polyhedron.from_constraints(dim, list(ineq), list(eq)))


def unit(dim, i, s=1):
    return tuple(s if j == i else 0 for j in range(dim))


def test_kinked_marginal_example():
    with criterion(1, "kinked cost |x| - y: subdifferentials, coderivative, marginal estimates", 5):
        P = kink_minus_y()
        z = (0, 0)
        down = H(1, [((1,), 0)])
        assert same_set(regular_subdiff_pwl(P.phi, z), H(2, [((1, 0), 1), ((-1, 0), 1)], [((0, 1), -1)]))
        assert same_set(singular_regular_subdiff_pwl(P.phi, z), U(Polyhedron.point(z)))
        assert upper_regular_subdiff_pwl(P.phi, z).is_empty()
        for ys in (1, F(1, 3)):
            assert coderivative(P.G, (0,), (0,), (ys,)).is_empty()
        for ys in (0, -1, F(-7, 3)):
            assert same_set(coderivative(P.G, (0,), (0,), (ys,)), H(1, [((1,), ys)]))
        assert same_set(lower_estimate_regular(P).value, down)
        assert same_set(upper_estimate_singular(P).value, down)
        assert same_set(lower_estimate_singular(P).value, down)


def test_differentiable_cost_examples():
    with criterion(2, "smooth cost (x - y^2)^2: line map and whole map", 5):
        line = quartic(True)
        for thm in (exact_regular_diffcost, exact_singular_diffcost):
            r = thm(line)
            assert r.provenance == EQUALITY and r.value.tag == "ALL"
        whole = quartic(False)
        rep = qual_report(whole)
        assert not any(check_hypothesis(whole, h, rep).holds for h in HYPOTHESES)
        zero = U(Polyhedron.point((0,)))
        reg, sing = exact_regular_diffcost(whole), exact_singular_diffcost(whole)
        assert same_set(reg.value, zero) and same_set(sing.value, zero)
        direct = direct_marginal_subdiffs(whole)
        assert two_sided_check(direct.regular, reg.value).ok
        assert two_sided_check(direct.singular, sing.value).ok


def test_convex_plane_example():
    with criterion(3, "convex example in the plane: normal cones, coderivative, Q2, marginal = R^2", 10):
        P = convex_plane()
        C, D, zbar = marginal_q_sets(P)  # epi phi, gph G x R, origin of R^5
        nC, nD = regular_normal_cone(C, zbar), regular_normal_cone(D, zbar)
        nCD = regular_normal_cone(intersect_unions(C, D), zbar)
        # R^2 x R_- x R x {0}
        assert same_set(U(nD), H(5, [((0, 0, 1, 0, 0), 0)], [(unit(5, 4), 0)]))
        # {0} x R^2 x R_-
        assert same_set(U(nC), H(5, [(unit(5, 4), 0)], [(unit(5, 0), 0), (unit(5, 1), 0)]))
        # R^4 x R_-, and it splits as the sum of the two cones above
        assert same_set(U(nCD), H(5, [(unit(5, 4), 0)]))
        assert same_set(U(minkowski_sum(nC, nD)), U(nCD))
        # epi mu = {0} x R_+, normal cone R^2 x R_-
        assert same_set(U(regular_normal_cone(marginal_epigraph(P), (0, 0, 0))), H(3, [(unit(3, 2), 0)]))
        q2 = check_Q2(C, D, zbar)
        assert q2.holds and q2.constants["a"] == 1
        # both subdifferentials of phi are {0} x R^2
        flat = H(4, eq=[(unit(4, 0), 0), (unit(4, 1), 0)])
        assert same_set(regular_subdiff_pwl(P.phi, (0,) * 4), flat)
        assert same_set(singular_regular_subdiff_pwl(P.phi, (0,) * 4), flat)
        for ys in ((1, 0), (0, 0), (0, 5), (F(1, 2), -3)):
            assert coderivative(P.G, (0, 0), (0, 0), ys).tag == "ALL"
        for ys in ((-1, 0), (F(-1, 2), 3)):
            assert coderivative(P.G, (0, 0), (0, 0), ys).is_empty()
        rep = qual_report(P)
        for thm in (exact_regular_q2, exact_singular_q2):
            r = thm(P, report=rep)
            assert r.provenance == EQUALITY and r.value.tag == "ALL"


ORACLE_FIXTURES = sorted((FIXTURES / "oracle").glob("*.vc"))


def test_oracle_exact_consistency():
    with criterion(4, f"oracle vs exact two-sided consistency on {len(ORACLE_FIXTURES)} fixtures, step 0.25, tol 1e-6", 120):
        assert len(ORACLE_FIXTURES) >= 15
        flags = Flags(oracle_step=0.25)
        bad = []
        for path in ORACLE_FIXTURES:
            res, _ = run("oracle-compare", parse(path.read_text()), flags)
            assert res["oracle"]["dual_step"] == 0.25 and res["oracle"]["tol"] == 1e-6
            c = res["consistency"]
            if not (c.ok and c.grid_points > 0):
                bad.append(path.stem)
        assert not bad, bad


def test_lemma_suite():
    with criterion(5, f"distance identities ({len(DISTANCE_SETS)}), normal conversions ({len(CONVERSIONS)}), scalarization ({len(SCALARIZATION)})"):
        assert len(DISTANCE_SETS) >= 10 and len(CONVERSIONS) >= 6 and len(SCALARIZATION) >= 6
        for S, p in DISTANCE_SETS.values():
            r = distance_subdiff_identity_check(S, p)
            assert r.first_identity and r.second_identity
        for f, xb, xs, lam, source, expected in CONVERSIONS:
            v = epi_graph_normal_convert(f, xb, xs, lam, source)
            assert v.agree and v.in_normal_cone is expected
        for h, xb, ys, expected in SCALARIZATION:
            r = scalarize_coderivative(h, xb, ys)
            assert r.calm and r.equal
            assert r.scalarized.is_empty() if expected is None else same_set(r.scalarized, U(expected))


RULES = ("sum", "product", "quotient", "reciprocal", "generalized-composition", "chain-q2", "chain-real-inner")


def test_calculus_suite():
    paths = sorted(p for p in (FIXTURES / "calculus").glob("*.vc") if not p.name.startswith("difference_"))
    with criterion(6, f"calculus rules against the direct computation on {len(paths)} fixtures"):
        verified = Counter()
        for path in paths:
            res, _ = run("calculus", parse(path.read_text()), Flags())
            r, d = res["result"], res["direct"]
            assert d["regular_rule_inside_direct"], path.stem
            if r["provenance"] == EQUALITY:
                assert d["regular_equal"] and d["singular_equal"], path.stem
                verified[res["rule"]] += 1
            else:
                assert r["provenance"] == LOWER_ONLY
                assert includes(d["regular"], r["regular"]).holds
        short = {rule: verified[rule] for rule in RULES if verified[rule] < 4}
        assert not short, short


def test_toy_bilevel():
    with criterion(7, "toy bilevel program: grid-certified solution, smooth and nonsmooth certificates, 5 rejections", 30):
        near, far = brute_force_local_min()
        assert near == far == 0.0
        smooth = solve_stationarity_smooth(toy(), (0,), (0,))
        assert isinstance(smooth, StationarityCertificate) and smooth.kappa in KAPPA_GRID
        assert max(smooth.residuals.values()) <= 1e-6
        certs = check_noc_nonsmooth(toy(), (0,), (0,), smooth.kappa)
        assert certs and all(isinstance(c, StationarityCertificate) and max(c.residuals.values()) <= 1e-6 for c in certs)
        assert len(PERTURBED) == 5
        for xb in PERTURBED:
            assert isinstance(solve_stationarity_smooth(toy(), (xb,), (0,), force=True), Infeasible)
            assert all(isinstance(c, Infeasible) for c in check_noc_nonsmooth(toy(), (xb,), (0,), 1, force=True))


_SWEEP = """
import json, sys
from pathlib import Path
from varcalc.cli import build_report
from varcalc.cli.commands import Flags
from varcalc.cli.report import dumps
root = Path(sys.argv[1])
for e in json.loads((root / "expected_exit.json").read_text()):
    p = root / e["file"]
    rep, code = build_report(e["command"], str(p), p.read_text(), Flags(force="--force" in e["flags"]))
    sys.stdout.write(dumps(rep))
"""


def test_determinism():
    manifest = json.loads((FIXTURES / "expected_exit.json").read_text())
    with criterion(8, f"byte-identical reports over {len(manifest)} fixture runs in two fresh processes"):
        outs = []
        for threads in ("1", "4"):
            env = dict(os.environ, VARCALC_THREADS=threads, PYTHONHASHSEED="random")
            p = subprocess.run([sys.executable, "-c", _SWEEP, str(FIXTURES)], capture_output=True, env=env, timeout=600)
            assert p.returncode == 0, p.stderr.decode()
            outs.append(p.stdout)
        assert outs[0] == outs[1]
        assert outs[0].count(b"\n") == len(manifest)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
