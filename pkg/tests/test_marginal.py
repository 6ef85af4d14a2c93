import dataclasses
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from conftest import U, convex_plane, fn, interval, kink_minus_y, quartic, x, y
from varcalc.functions import PiecewiseFunction, SetValuedMap
from varcalc.geometry import Polyhedron, PolyhedralUnion, includes, same_set
from varcalc.marginal import (
    EQUALITY,
    HYPOTHESES,
    LOWER_ONLY,
    NOT_APPLICABLE,
    UPPER_ONLY,
    HypothesisError,
    MarginalProblem,
    NonDifferentiableError,
    check_calmness,
    check_condition_H,
    check_hypothesis,
    check_isolated_calmness,
    check_local_nic,
    check_Q1,
    check_Q2,
    check_semilocal_nic,
    check_upper_lipschitz_selection,
    direct_marginal_subdiffs,
    eval_marginal,
    eval_marginal_detail,
    exact_regular_diffcost,
    exact_regular_q2,
    exact_singular_diffcost,
    exact_singular_q2,
    lower_estimate_regular,
    lower_estimate_singular,
    qual_report,
    solution_map,
    upper_estimate_regular,
    upper_estimate_singular,
)
from varcalc.oracles import two_sided_check

HALF_DOWN = PolyhedralUnion.single(interval(hi=0))


def point(*p):
    return PolyhedralUnion.single(Polyhedron.point(p))


# ---------------------------------------------------------------- evaluation


def test_marginal_values():
    assert eval_marginal(quartic(False), (-1,)) == pytest.approx(1.0)
    assert eval_marginal(quartic(True), (0,)) == 0
    assert eval_marginal(quartic(True), (1,)) == math.inf
    assert eval_marginal(convex_plane(), (0, 0)) == 0
    assert same_set(solution_map(convex_plane(), (0, 0)), point(0, 0))


def test_unbounded_marginal_reports_a_ray():
    P = MarginalProblem(fn(2, y), SetValuedMap(1, 1, PolyhedralUnion.whole(2)), (0,), (0,), validate=False)
    v = eval_marginal_detail(P, (0,))
    assert v.value == -math.inf and v.ray == (-1,)


def test_base_point_must_be_a_minimizer():
    box = U(Polyhedron.box([-1, -1], [1, 1]))
    with pytest.raises(ValueError, match="not a minimizer"):
        MarginalProblem(fn(2, y), SetValuedMap(1, 1, box), (0,), (0,))


# ---------------------------------------------------------------- kinked example


def test_kink_estimates():
    P = kink_minus_y()
    assert upper_estimate_regular(P).provenance == NOT_APPLICABLE
    low = lower_estimate_regular(P)
    assert low.provenance == LOWER_ONLY and same_set(low.value, HALF_DOWN)
    assert same_set(upper_estimate_singular(P).value, HALF_DOWN)
    assert same_set(lower_estimate_singular(P).value, HALF_DOWN)


def test_kink_equalities_under_q2():
    P = kink_minus_y()
    for thm in (exact_regular_q2, exact_singular_q2):
        r = thm(P)
        assert r.provenance == EQUALITY and "Q2" in r.hypotheses
        assert same_set(r.value, HALF_DOWN)
    with pytest.raises(NonDifferentiableError):
        exact_regular_diffcost(P)
    d = direct_marginal_subdiffs(P)
    assert d.mode == "exact" and same_set(d.regular, HALF_DOWN) and same_set(d.singular, HALF_DOWN)


def test_kink_checkers():
    P = kink_minus_y()
    assert check_local_nic(P.G, (0,), (0,)).holds
    assert check_semilocal_nic(P.G, (0,), (0,)).holds
    iso = check_isolated_calmness(P.G, (0,), (0,))
    assert iso.holds is False and iso.witness is not None
    assert check_condition_H(P).holds
    assert all(check_hypothesis(P, h).holds for h in HYPOTHESES)


# ---------------------------------------------------------------- smooth cost, line map


def test_line_map_equalities():
    P = quartic(True)
    reg, sing = exact_regular_diffcost(P), exact_singular_diffcost(P)
    assert reg.provenance == EQUALITY and reg.value.tag == "ALL"
    assert sing.provenance == EQUALITY and sing.value.tag == "ALL"
    assert upper_estimate_regular(P).value.tag == "ALL"
    assert lower_estimate_regular(P).value.tag == "ALL"


def test_line_map_hypotheses_hold_vacuously():
    P = quartic(True)
    e = check_semilocal_nic(P.G, (0,), (0,))
    assert e.holds and e.mode == "vacuous"
    sel = check_upper_lipschitz_selection(P)
    assert sel.holds and sel.mode == "vacuous"


def test_line_map_direct_oracle_accepts_everything():
    P = quartic(True)
    d = direct_marginal_subdiffs(P)
    assert d.mode == "oracle"
    assert two_sided_check(d.regular, PolyhedralUnion.whole(1)).ok


# ---------------------------------------------------------------- smooth cost, whole map


def test_whole_map_fails_every_hypothesis_but_equality_still_holds():
    P = quartic(False)
    rep = qual_report(P)
    assert not any(check_hypothesis(P, h, rep).holds for h in HYPOTHESES)
    nic = check_semilocal_nic(P.G, (0,), (0,))
    assert nic.holds is False and nic.witness is not None
    sel = check_upper_lipschitz_selection(P)
    assert sel.holds is False and sel.witness is not None
    r = exact_regular_diffcost(P)
    assert r.provenance == UPPER_ONLY and same_set(r.value, point(0))
    assert same_set(exact_singular_diffcost(P).value, point(0))
    d = direct_marginal_subdiffs(P)
    assert two_sided_check(d.regular, r.value).ok
    assert len(d.regular.accepted) == 1


def test_whole_map_lower_estimate_is_gated():
    P = quartic(False)
    with pytest.raises(HypothesisError):
        lower_estimate_regular(P)
    forced = lower_estimate_regular(P, force=True)
    assert forced.forced and same_set(forced.value, point(0))


# ---------------------------------------------------------------- convex example in the plane


def test_convex_plane_equalities():
    P = convex_plane()
    rep = qual_report(P)
    assert rep.entries["Q2"].holds and rep.entries["Q2"].mode == "exact"
    for thm in (exact_regular_q2, exact_singular_q2):
        r = thm(P, report=rep)
        assert r.provenance == EQUALITY and r.value.tag == "ALL"
    with pytest.raises(HypothesisError):
        upper_estimate_singular(P)


# ---------------------------------------------------------------- other checkers


def test_condition_H_counterexample():
    # at x = 0 both branches cost 0; for x > 0 the remote branch y = 1 is strictly cheaper
    near = Polyhedron.from_constraints(2, [((0, 1), F(1, 2))])
    far = Polyhedron.from_constraints(2, [((0, -1), -1)])
    phi = PiecewiseFunction.build(2, [(near, 0), (far, -x)])
    gph = U(
        Polyhedron.from_constraints(2, [((-1, 0), 0)], [((0, 1), 0)]),
        Polyhedron.from_constraints(2, [((-1, 0), 0)], [((0, 1), 1)]),
    )
    e = check_condition_H(MarginalProblem(phi, SetValuedMap(1, 1, gph), (0,), (0,)))
    assert e.holds is False and e.witness["mu"] < e.witness["localized"]


def test_single_valued_map_satisfies_H():
    line = U(Polyhedron.from_constraints(2, [], [((2, -1), 0)]))
    assert check_condition_H(MarginalProblem(fn(2, y), SetValuedMap(1, 1, line), (0,), (0,))).holds


def test_calmness_of_functions():
    e = check_calmness(fn(1, 3 * x), (0,))
    assert e.holds and e.modulus == pytest.approx(3.0)
    assert check_calmness(convex_plane().phi, (0, 0, 0, 0)).holds is False


def test_metric_qualifications():
    H = interval(hi=0)
    for chk in (check_Q1, check_Q2):
        e = chk(H, H, (0,))
        assert e.holds and e.constants["a"] == 1
    C = Polyhedron.from_constraints(2, [((1, -1), 0)])
    D = Polyhedron.from_constraints(2, [((-1, -1), 0)])
    assert check_Q1(C, D, (0, 0)).holds
    assert check_Q2(C, D, (0, 0)).holds


# ---------------------------------------------------------------- invariants

AFFINE_IDENTITY = MarginalProblem(fn(2, x + 2 * y), SetValuedMap(1, 1, U(Polyhedron.from_constraints(2, [], [((1, -1), 0)]))), (0,), (0,))


@pytest.mark.parametrize("make", [kink_minus_y, lambda: quartic(True), lambda: AFFINE_IDENTITY], ids=["kink", "line_map", "affine"])
def test_sandwich(make):
    P = make()
    low = lower_estimate_regular(P).value
    up = upper_estimate_regular(P)
    exact = (exact_regular_diffcost if P.phi.pieces[0].affine is None else exact_regular_q2)(P).value
    assert includes(exact, low).holds
    if up.provenance != NOT_APPLICABLE:
        assert includes(up.value, exact).holds


def test_affine_data_gives_singleton():
    for thm in (upper_estimate_regular, lower_estimate_regular, exact_regular_q2, exact_regular_diffcost):
        assert same_set(thm(AFFINE_IDENTITY).value, point(3))


def test_every_minimizer_gives_the_same_answer():
    flat = PiecewiseFunction.build(2, [(Polyhedron.whole(2), 0)])
    seg = U(Polyhedron.from_constraints(2, [((0, 1), 1), ((0, -1), 0)], [((1, 0), 0)]))
    base = MarginalProblem(flat, SetValuedMap(1, 1, seg), (0,), (0,))
    sets = [exact_regular_diffcost(dataclasses.replace(base, ybar=(yb,))).value for yb in (0, F(1, 2), 1)]
    direct = direct_marginal_subdiffs(base)
    assert direct.mode == "exact"
    for S in sets:
        assert includes(S, direct.regular).holds


@settings(max_examples=10)
@given(st.integers(-3, 3), st.integers(-3, 3))
def test_affine_cost_on_affine_map(a, b):
    # phi = a x + b y with y = x gives mu(x) = (a + b) x
    line = U(Polyhedron.from_constraints(2, [], [((1, -1), 0)]))
    P = MarginalProblem(fn(2, a * x + b * y), SetValuedMap(1, 1, line), (0,), (0,))
    for thm in (exact_regular_q2, lower_estimate_regular):
        assert same_set(thm(P).value, point(a + b))
