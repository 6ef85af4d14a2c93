import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import convex_plane, fn, interval, kink_minus_y, x
from varcalc.exact_subdiff import regular_subdiff_pwl, singular_regular_subdiff_pwl, upper_regular_subdiff_pwl
from varcalc.functions import Abs, Max, Min, PiecewiseFunction, Var, indicator
from varcalc.geometry import Polyhedron, PolyhedralUnion, regular_normal_cone
from varcalc.oracles import (
    OracleConfig,
    oracle_coderivative,
    oracle_regular_normal_cone,
    oracle_regular_subdiff,
    oracle_singular_regular_subdiff,
    oracle_upper_regular_subdiff,
    replay_witness,
    two_sided_check,
)

CFG = OracleConfig(primal_samples=600, dual_range=2.0)


def pts(v):
    return {tuple(float(c) for c in p) for p in v.accepted}


def axis(lo, hi, step=0.25):
    return {(float(t),) for t in np.arange(lo, hi + step / 2, step)}


ABS = PiecewiseFunction.build(1, [(Polyhedron.whole(1), Abs(x))])
NEGABS = PiecewiseFunction.build(1, [(Polyhedron.whole(1), -Abs(x))])
SQUARE = PiecewiseFunction.build(1, [(Polyhedron.whole(1), x * x)])


def test_regular_subdiff_of_abs_is_the_unit_interval():
    assert pts(oracle_regular_subdiff(ABS, (0,), CFG)) == axis(-1, 1)


def test_regular_subdiff_of_square_is_origin():
    assert pts(oracle_regular_subdiff(SQUARE, (0,), CFG)) == {(0.0,)}


def test_regular_subdiff_of_kink_minus_y():
    v = oracle_regular_subdiff(kink_minus_y().phi, (0, 0), CFG)
    assert pts(v) == {(a, -1.0) for (a,) in axis(-1, 1)}


def test_upper_subdiff_examples():
    assert oracle_upper_regular_subdiff(ABS, (0,), CFG).empty
    assert pts(oracle_upper_regular_subdiff(SQUARE, (0,), CFG)) == {(0.0,)}
    assert oracle_upper_regular_subdiff(kink_minus_y().phi, (0, 0), CFG).empty


def test_singular_subdiff_examples():
    assert pts(oracle_singular_regular_subdiff(ABS, (0,), CFG)) == {(0.0,)}
    assert pts(oracle_singular_regular_subdiff(kink_minus_y().phi, (0, 0), CFG)) == {(0.0, 0.0)}
    assert pts(oracle_singular_regular_subdiff(indicator(Polyhedron.point((0,))), (0,), CFG)) == axis(-2, 2)


def test_normal_cone_examples():
    assert pts(oracle_regular_normal_cone(interval(hi=0), (0,), CFG)) == axis(0, 2)
    assert pts(oracle_regular_normal_cone(PolyhedralUnion.whole(2), (1, 1), CFG)) == {(0.0, 0.0)}
    gph = kink_minus_y().G.graph
    v = oracle_regular_normal_cone(gph, (0, 0), CFG)
    assert two_sided_check(v, regular_normal_cone(gph, (0, 0))).ok


def test_coderivative_examples():
    G = kink_minus_y().G
    assert oracle_coderivative(G, (0,), (0,), (1,), CFG).empty
    assert pts(oracle_coderivative(G, (0,), (0,), (-1,), CFG)) == axis(-2, -1)
    H = convex_plane().G
    full = oracle_coderivative(H, (0, 0), (0, 0), (1, 0), CFG)
    assert len(full.accepted) == len(CFG.grid(2)) and not full.rejected


PWL = {
    "abs": ABS,
    "negabs": NEGABS,
    "max_planes": PiecewiseFunction.build(2, [(Polyhedron.whole(2), Max(Max(Var(0), Var(1)), -Var(0) - Var(1)))]),
    "min_ramp": PiecewiseFunction.build(1, [(Polyhedron.whole(1), Min(Max(x, 0), 1 - x))]),
    "halfline_indicator": indicator(interval(hi=0)),
    "kink_minus_y": kink_minus_y().phi,
}
BASE = {"abs": (0,), "negabs": (0,), "max_planes": (0, 0), "min_ramp": (0,), "halfline_indicator": (0,), "kink_minus_y": (0, 0)}


@pytest.mark.parametrize("name", sorted(PWL))
def test_rejections_replay_as_violations(name):
    f, xb = PWL[name], BASE[name]
    for oracle, kind in ((oracle_regular_subdiff, "regular"), (oracle_upper_regular_subdiff, "upper")):
        v = oracle(f, xb, CFG)
        assert v.rejected
        for p, w in v.rejected:
            assert replay_witness(f, xb, p, w, kind) > 0


@pytest.mark.parametrize("name", sorted(PWL))
def test_two_sided_consistency_with_exact_engine(name):
    f, xb = PWL[name], BASE[name]
    assert two_sided_check(oracle_regular_subdiff(f, xb, CFG), regular_subdiff_pwl(f, xb)).ok
    assert two_sided_check(oracle_upper_regular_subdiff(f, xb, CFG), upper_regular_subdiff_pwl(f, xb)).ok
    assert two_sided_check(oracle_singular_regular_subdiff(f, xb, CFG), singular_regular_subdiff_pwl(f, xb)).ok


@pytest.mark.parametrize("name", sorted(PWL))
def test_more_samples_never_accept_a_rejected_point(name):
    f, xb = PWL[name], BASE[name]
    few = oracle_regular_subdiff(f, xb, OracleConfig(primal_samples=200, dual_range=2.0))
    many = oracle_regular_subdiff(f, xb, OracleConfig(primal_samples=1500, dual_range=2.0))
    assert {tuple(p) for p, _ in few.rejected} <= {tuple(p) for p, _ in many.rejected}


@settings(max_examples=12)
@given(st.integers(-2, 2), st.integers(-2, 2), st.sampled_from([-1, 0, 1]))
def test_lower_and_upper_both_nonempty_only_at_smooth_points(a, b, t):
    f = fn(1, Max(a * x, b * x))
    lower = oracle_regular_subdiff(f, (t,), CFG)
    upper = oracle_upper_regular_subdiff(f, (t,), CFG)
    smooth = t != 0 or a == b
    assert (not lower.empty and not upper.empty) == smooth
