from fractions import Fraction as F

from hypothesis import given, strategies as st

from conftest import U, interval
from varcalc.geometry import (
    NormChoice,
    Polyhedron,
    PolyhedralUnion,
    contains,
    distance,
    includes,
    limiting_normal_cone,
    minkowski_sum,
    regular_normal_cone,
    same_set,
    tangent_cone,
)
from varcalc.functions import Abs, PiecewiseFunction, Var, epigraph


def test_contains_examples():
    assert contains(interval(hi=0), (-1,))
    assert not contains(PolyhedralUnion.empty(1), (0,))
    assert contains(interval(hi=0), (1e-10,), tol=1e-6)
    assert not contains(interval(hi=0), (F(1, 10**6),))


def test_distance_examples():
    assert distance((2,), interval(hi=0), NormChoice.L1) == 2
    assert distance((0,), interval(hi=0)) == 0
    half = Polyhedron.from_constraints(2, [((1, 0), 0)])
    assert distance((1, 1), half, NormChoice.L1) == 1


def test_distance_to_empty_is_infinite():
    assert distance((0,), PolyhedralUnion.empty(1)) == float("inf")


def test_tangent_cone_examples():
    unit = interval(0, 1)
    assert tangent_cone(unit, (0,)).same_set(interval(lo=0))
    assert tangent_cone(unit, (F(1, 2),)).is_whole()
    ray = Polyhedron.from_constraints(2, [((-1, 0), 0)], [((0, 1), 0)])
    assert tangent_cone(ray, (0, 0)).same_set(ray)


def test_normal_cone_of_kinked_graph():
    gph = U(
        Polyhedron.from_constraints(2, [((-1, 0), 0)], [((1, -1), 0)]),
        Polyhedron.from_constraints(2, [((0, 1), 0)], [((1, 0), 0)]),
    )
    # normals (a, b) with b >= 0 and a <= -b; in coderivative terms (x*, -y*) this is x* <= y* <= 0
    expected = Polyhedron.from_constraints(2, [((1, 1), 0), ((0, -1), 0)])
    assert regular_normal_cone(gph, (0, 0)).same_set(expected)


def test_normal_cone_simple_cases():
    assert regular_normal_cone(PolyhedralUnion.whole(2), (3, -1)).same_set(Polyhedron.point((0, 0)))
    axis = Polyhedron.from_constraints(2, [], [((1, 0), 0)])
    expected = Polyhedron.from_constraints(2, [], [((0, 1), 0)])
    assert regular_normal_cone(axis, (0, 0)).same_set(expected)


def test_limiting_normal_cone_of_concave_kink():
    epi = epigraph(PiecewiseFunction.build(1, [(Polyhedron.whole(1), -Abs(Var(0)))]))
    lim = limiting_normal_cone(epi, (0, 0))
    expected = U(Polyhedron.cone(2, [(-1, -1)]), Polyhedron.cone(2, [(1, -1)]))
    assert same_set(lim, expected)
    assert regular_normal_cone(epi, (0, 0)).same_set(Polyhedron.point((0, 0)))
    assert same_set(limiting_normal_cone(PolyhedralUnion.whole(3), (0, 0, 0)), PolyhedralUnion.of(3, [Polyhedron.point((0, 0, 0))]))


def test_includes_examples():
    assert includes(PolyhedralUnion.whole(1), interval(-1, 1)).holds
    assert includes(interval(hi=1), interval(hi=0)).holds
    r = includes(interval(hi=0), interval(hi=1))
    assert not r.holds
    assert r.witness is not None and not interval(hi=0).contains(r.witness)
    rays = U(Polyhedron.cone(2, [(-1, -1)]), Polyhedron.cone(2, [(1, -1)]))
    lower = Polyhedron.from_constraints(2, [((0, 1), 0)])
    assert includes(lower, rays).holds
    assert includes(lower, rays, mode="sampled").holds


def test_includes_with_several_outer_pieces_is_exact():
    outer = U(interval(hi=0), interval(lo=0))
    assert includes(outer, PolyhedralUnion.whole(1)).holds
    gap = U(interval(hi=0), interval(lo=1))
    r = includes(gap, interval(-1, 2))
    assert not r.holds and 0 < r.witness[0] < 1


def test_minkowski_examples():
    assert minkowski_sum(Polyhedron.point((1,)), interval(hi=0)).same_set(interval(hi=1))
    assert minkowski_sum(interval(0, 1), interval(0, 1)).same_set(interval(0, 2))
    seg = Polyhedron.from_constraints(2, [((1, 0), 1), ((-1, 0), 1)], [((0, 1), -1)])
    up = Polyhedron.cone(2, [(0, 1)])
    expected = Polyhedron.from_constraints(2, [((1, 0), 1), ((-1, 0), 1), ((0, -1), 1)])
    assert minkowski_sum(seg, up).same_set(expected)


# ---------------------------------------------------------------- properties

small = st.integers(-3, 3)
vec2 = st.tuples(small, small).filter(lambda v: v != (0, 0))


@given(st.lists(vec2, min_size=1, max_size=4), st.lists(vec2, max_size=1))
def test_polar_is_an_involution(rays, lines):
    K = Polyhedron.cone(2, rays, lines)
    assert K.polar().polar().same_set(K)


def _box_like(rows):
    return Polyhedron.from_constraints(2, [((a, b), c) for a, b, c in rows])


rows = st.lists(st.tuples(small, small, st.integers(0, 3)), min_size=1, max_size=4)


@given(rows, st.tuples(small, small))
def test_normal_cone_is_polar_of_tangent_cone(rs, p):
    P = _box_like(rs)
    if not P.contains(p):
        p = P.any_point()
    assert regular_normal_cone(P, p).same_set(tangent_cone(P, p).polar())


@given(rows, st.tuples(small, small))
def test_limiting_equals_regular_for_convex_sets(rs, p):
    P = _box_like(rs)
    if not P.contains(p):
        p = P.any_point()
    assert same_set(limiting_normal_cone(P, p), PolyhedralUnion.single(regular_normal_cone(P, p)))


pieces_1d = st.lists(st.tuples(st.integers(-4, 4), st.integers(0, 3)), min_size=1, max_size=3)


@given(pieces_1d, st.integers(-6, 6), st.integers(1, 4))
def test_distance_zero_iff_contained(ps, num, den):
    S = U(*[interval(a, a + w) for a, w in ps])
    p = (F(num, den),)
    assert (distance(p, S) == 0) == contains(S, p, tol=1e-9)


@given(pieces_1d, pieces_1d)
def test_exact_and_sampled_inclusion_agree(a, b):
    A = U(*[interval(lo, lo + w) for lo, w in a])
    B = U(*[interval(lo, lo + w) for lo, w in b])
    assert includes(A, B).holds == includes(A, B, mode="sampled").holds
