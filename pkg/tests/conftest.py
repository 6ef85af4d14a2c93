import os
import sys
from fractions import Fraction as F
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from varcalc.functions import Abs, PiecewiseFunction, SetValuedMap, Var
from varcalc.geometry import Polyhedron, PolyhedralUnion
from varcalc.marginal import MarginalProblem

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def interval(lo=None, hi=None) -> Polyhedron:
    rows = []
    if lo is not None:
        rows.append(((-1,), -F(lo)))
    if hi is not None:
        rows.append(((1,), F(hi)))
    return Polyhedron.from_constraints(1, rows)


def U(*pieces) -> PolyhedralUnion:
    return PolyhedralUnion.of(pieces[0].dim, list(pieces))


def fn(dim, formula, domain=None) -> PiecewiseFunction:
    return PiecewiseFunction.build(dim, [(domain or Polyhedron.whole(dim), formula)])


# The four worked marginal problems, built by hand (not through the parser).

x, y = Var(0), Var(1)


def kink_minus_y() -> MarginalProblem:
    phi = fn(2, Abs(x) - y)
    gph = U(
        Polyhedron.from_constraints(2, [((-1, 0), 0)], [((1, -1), 0)]),
        Polyhedron.from_constraints(2, [((0, 1), 0)], [((1, 0), 0)]),
    )
    return MarginalProblem(phi, SetValuedMap(1, 1, gph), (0,), (0,))


def quartic(line_map: bool) -> MarginalProblem:
    phi = fn(2, (x - y * y) ** 2)
    gph = U(Polyhedron.from_constraints(2, [], [((1, 0), 0)])) if line_map else PolyhedralUnion.whole(2)
    return MarginalProblem(phi, SetValuedMap(1, 1, gph), (0,), (0,))


def convex_plane() -> MarginalProblem:
    dom = Polyhedron.from_constraints(4, [], [((0, 0, 1, 0), 0), ((0, 0, 0, 1), 0)])
    phi = PiecewiseFunction.build(4, [(dom, 0)])
    gph = U(Polyhedron.from_constraints(4, [((0, 0, -1, 0), 0)], [((1, 0, 0, 0), 0), ((0, 1, 0, 0), 0), ((0, 0, 0, 1), 0)]))
    return MarginalProblem(phi, SetValuedMap(2, 2, gph), (0, 0), (0, 0))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
