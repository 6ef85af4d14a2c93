from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from conftest import U, fn, interval, kink_minus_y, x
from varcalc.exact_subdiff import (
    EPI,
    GRAPH,
    coderivative,
    distance_function,
    distance_subdiff_identity_check,
    epi_graph_normal_convert,
    limiting_distance_subdiff,
    limiting_subdiff_pwl,
    regular_subdiff_pwl,
    scalarize_coderivative,
    singular_regular_subdiff_pwl,
    upper_regular_subdiff_pwl,
)
from varcalc.functions import Abs, Max, Min, Var, affine_function, eval, indicator
from varcalc.geometry import NormChoice, Polyhedron, PolyhedralUnion, distance, includes, same_set


def single(P):
    return PolyhedralUnion.single(P)


def points(*ps):
    return PolyhedralUnion.of(len(ps[0]), [Polyhedron.point(p) for p in ps])


ABS = fn(1, Abs(x))
NEGABS = fn(1, -Abs(x))


def test_regular_subdiff_examples():
    assert same_set(regular_subdiff_pwl(ABS, (0,)), single(interval(-1, 1)))
    seg = Polyhedron.from_constraints(2, [((1, 0), 1), ((-1, 0), 1)], [((0, 1), -1)])
    assert same_set(regular_subdiff_pwl(kink_minus_y().phi, (0, 0)), single(seg))
    assert same_set(regular_subdiff_pwl(affine_function((3, -2), 5), (1, 1)), points((3, -2)))


def test_singular_subdiff_examples():
    assert same_set(singular_regular_subdiff_pwl(ABS, (0,)), points((0,)))
    assert same_set(singular_regular_subdiff_pwl(kink_minus_y().phi, (0, 0)), points((0, 0)))
    assert singular_regular_subdiff_pwl(indicator(Polyhedron.point((0,))), (0,)).tag == "ALL"


def test_upper_subdiff_of_kink_minus_y_is_empty():
    assert upper_regular_subdiff_pwl(kink_minus_y().phi, (0, 0)).is_empty()


def test_limiting_subdiff_examples():
    assert same_set(limiting_subdiff_pwl(NEGABS, (0,)), points((-1,), (1,)))
    assert same_set(limiting_subdiff_pwl(ABS, (0,)), single(interval(-1, 1)))
    g = fn(1, Max(2 * x, -x))
    assert same_set(limiting_subdiff_pwl(g, (1,)), points((2,)))
    assert regular_subdiff_pwl(NEGABS, (0,)).is_empty()


def test_coderivative_of_kink_graph():
    G = kink_minus_y().G
    assert coderivative(G, (0,), (0,), (1,)).is_empty()
    for ys in (0, -1, F(-5, 2)):
        assert same_set(coderivative(G, (0,), (0,), (ys,)), single(interval(hi=ys)))


# ---------------------------------------------------------------- distance identities

DISTANCE_SETS = {
    "halfline": (interval(hi=0), (0,)),
    "whole_line": (PolyhedralUnion.whole(1), (0,)),
    "whole_plane": (PolyhedralUnion.whole(2), (1, 2)),
    "vertical_ray": (Polyhedron.from_constraints(2, [((0, 1), 0)], [((1, 0), 0)]), (0, 0)),
    "segment_end": (interval(0, 1), (1,)),
    "segment_inside": (interval(0, 1), (F(1, 3),)),
    "point": (Polyhedron.point((0, 0)), (0, 0)),
    "quadrant": (Polyhedron.from_constraints(2, [((-1, 0), 0), ((0, -1), 0)]), (0, 0)),
    "quadrant_edge": (Polyhedron.from_constraints(2, [((-1, 0), 0), ((0, -1), 0)]), (0, 3)),
    "wedge": (Polyhedron.from_constraints(2, [((1, -2), 0), ((1, 2), 0)]), (0, 0)),
    "strip": (Polyhedron.from_constraints(2, [((0, 1), 1), ((0, -1), 1)]), (4, 1)),
    "box_corner_3d": (Polyhedron.box([0, 0, 0], [1, 1, 1]), (1, 0, 1)),
    "halfspace_3d": (Polyhedron.from_constraints(3, [((1, 1, 1), 0)]), (0, 0, 0)),
    "diagonal_line": (Polyhedron.from_constraints(2, [], [((1, -1), 0)]), (2, 2)),
}


@pytest.mark.parametrize("name", sorted(DISTANCE_SETS))
def test_distance_subdifferential_identities(name):
    S, p = DISTANCE_SETS[name]
    r = distance_subdiff_identity_check(S, p)
    assert r.first_identity and r.second_identity and r.ok


def test_distance_identity_on_halfline_values():
    r = distance_subdiff_identity_check(interval(hi=0), (0,))
    assert same_set(r.subdiff_of_distance, single(interval(0, 1)))
    assert same_set(r.normal_cone, single(interval(lo=0)))


def test_distance_identity_rejects_other_norms():
    with pytest.raises(ValueError):
        distance_subdiff_identity_check(interval(hi=0), (0,), NormChoice.LINF)


def test_limiting_distance_subdiff_of_two_lines():
    cross = U(Polyhedron.from_constraints(2, [], [((1, 0), 0)]), Polyhedron.from_constraints(2, [], [((0, 1), 0)]))
    lim = limiting_distance_subdiff(cross, (0, 0))
    assert lim.contains((1, 0)) and lim.contains((0, -1)) and lim.contains((0, 0))
    assert not lim.contains((1, 1))


@given(st.lists(st.tuples(st.integers(-4, 4), st.integers(0, 3)), min_size=1, max_size=3), st.integers(-12, 12))
def test_distance_function_matches_lp_distance(pieces, k):
    S = U(*[interval(a, a + w) for a, w in pieces])
    p = (F(k, 2),)
    assert eval(distance_function(S), p) == distance(p, S)


# ---------------------------------------------------------------- epigraph and graph normals

CONVERSIONS = [
    (ABS, (0,), (F(1, 2),), 1, EPI, True),
    (ABS, (0,), (F(1, 2),), -1, EPI, False),
    (ABS, (0,), (2,), 1, EPI, False),
    (affine_function((1,)), (0,), (-1,), -1, GRAPH, True),
    (affine_function((1,)), (0,), (1,), -1, GRAPH, False),
    (ABS, (0,), (F(1, 2),), 1, GRAPH, True),
    (ABS, (0,), (F(1, 2),), -1, GRAPH, False),
    (NEGABS, (0,), (F(1, 2),), -1, GRAPH, True),
    (NEGABS, (0,), (0,), 1, EPI, False),
    (kink_minus_y().phi, (0, 0), (0, -1), 1, EPI, True),
    (kink_minus_y().phi, (0, 0), (0, 1), -1, GRAPH, False),
]


@pytest.mark.parametrize("case", range(len(CONVERSIONS)))
def test_epigraph_graph_normal_conversion(case):
    f, xb, xs, lam, source, expected = CONVERSIONS[case]
    v = epi_graph_normal_convert(f, xb, xs, lam, source)
    assert v.agree
    assert v.in_normal_cone is expected


def test_conversion_rejects_zero_lambda():
    with pytest.raises(ValueError):
        epi_graph_normal_convert(ABS, (0,), (0,), 0)


@given(st.integers(-6, 6), st.integers(-6, 6), st.sampled_from([EPI, GRAPH]))
def test_conversion_sides_always_agree(num, lam, source):
    if lam == 0:
        lam = 1
    for f in (ABS, NEGABS, fn(1, Max(x, 2 * x - 1))):
        assert epi_graph_normal_convert(f, (0,), (F(num, 4),), F(lam, 2), source).agree


# ---------------------------------------------------------------- scalarization

SCALARIZATION = [
    ([ABS], (0,), (1,), interval(-1, 1)),
    ([ABS], (0,), (-1,), None),
    ([affine_function((2, 1)), affine_function((0, -1))], (0, 0), (1, 3), Polyhedron.point((2, -2))),
    ([affine_function((1,)), ABS], (0,), (1, 1), interval(0, 2)),
    ([fn(1, Max(x, 0))], (0,), (2,), interval(0, 2)),
    ([fn(1, Min(x, 0)), fn(1, Max(x, 0))], (0,), (1, 1), Polyhedron.point((1,))),
    ([fn(2, Abs(Var(0)) + Var(1))], (0, 0), (1,), Polyhedron.from_constraints(2, [((1, 0), 1), ((-1, 0), 1)], [((0, 1), 1)])),
]


@pytest.mark.parametrize("case", range(len(SCALARIZATION)))
def test_scalarization_identity(case):
    h, xb, ys, expected = SCALARIZATION[case]
    r = scalarize_coderivative(h, xb, ys)
    assert r.calm and r.equal and r.warning is None
    if expected is None:
        assert r.scalarized.is_empty()
    else:
        assert same_set(r.scalarized, single(expected))


# ---------------------------------------------------------------- invariants

PWL = [ABS, NEGABS, fn(1, Max(x, -2 * x)), fn(1, Min(x, 0)), fn(2, Max(Var(0), Var(1))), kink_minus_y().phi, indicator(interval(hi=0))]


@pytest.mark.parametrize("i", range(len(PWL)))
def test_regular_is_convex_and_inside_limiting(i):
    f = PWL[i]
    xb = (0,) * f.dim
    reg = regular_subdiff_pwl(f, xb)
    assert reg.is_convex_piece()
    assert includes(limiting_subdiff_pwl(f, xb), reg).holds


@pytest.mark.parametrize("i", [0, 1, 2, 3, 4, 5])
def test_calm_functions_have_trivial_singular_part(i):
    f = PWL[i]
    assert same_set(singular_regular_subdiff_pwl(f, (0,) * f.dim), points((0,) * f.dim))
