"""Exact subdifferentials of piecewise-affine functions via epigraph normal
cones, plus the distance-function identities, the epigraph/graph normal
conversion and coderivative scalarization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from ._rational import neg, to_frac, unit, vec, zeros
from .functions.expr import KinkError
from .functions.piecewise import (
    NonAffineError,
    PiecewiseFunction,
    SetValuedMap,
    covers_neighborhood,
    epigraph,
    eval_function,
    graph_of,
    linear_combination,
    linearize,
    max_affine,
)
from .geometry import (
    ACTIVE_TOL,
    NormChoice,
    Polyhedron,
    PolyhedralUnion,
    as_union,
    limiting_normal_cone,
    regular_normal_cone,
    same_set,
)

# ---------------------------------------------------------------- helpers


def _finite_value(f: PiecewiseFunction, xbar):
    v = eval_function(f, vec(xbar))
    if isinstance(v, float) and math.isinf(v):
        raise ValueError("function is not finite at the base point")
    return to_frac(v)


def _require_affine(f: PiecewiseFunction):
    if not f.is_affine:
        raise NonAffineError("exact engine needs affine pieces; use the oracle or linearize at a smooth point")


def _slice_last(K: Polyhedron, value) -> PolyhedralUnion:
    return PolyhedralUnion.of(K.dim - 1, [K.fix({K.dim - 1: value}).canonical()])


def epigraph_normal_cone(f: PiecewiseFunction, xbar) -> Polyhedron:
    _require_affine(f)
    fb = _finite_value(f, xbar)
    return regular_normal_cone(epigraph(f), tuple(vec(xbar)) + (fb,))


# ---------------------------------------------------------------- pwl engine


def regular_subdiff_pwl(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    """{x* : (x*, −1) in the regular normal cone to epi f at (x̄, f(x̄))}."""
    return _slice_last(epigraph_normal_cone(f, xbar), -1)


def singular_regular_subdiff_pwl(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    return _slice_last(epigraph_normal_cone(f, xbar), 0)


def _limiting_epi(f, xbar) -> PolyhedralUnion:
    _require_affine(f)
    fb = _finite_value(f, xbar)
    return limiting_normal_cone(epigraph(f), tuple(vec(xbar)) + (fb,))


def limiting_subdiff_pwl(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    L = _limiting_epi(f, xbar)
    return PolyhedralUnion.of(f.dim, [P.fix({f.dim: -1}).canonical() for P in L.as_pieces()]).simplify()


def limiting_singular_subdiff_pwl(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    L = _limiting_epi(f, xbar)
    return PolyhedralUnion.of(f.dim, [P.fix({f.dim: 0}).canonical() for P in L.as_pieces()]).simplify()


def upper_regular_subdiff_pwl(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    """−∂̂(−f)(x̄). Outside dom f the negation is −∞, so the result is empty
    unless dom f covers a neighbourhood of x̄."""
    _require_affine(f)
    _finite_value(f, xbar)
    if not covers_neighborhood([p.domain for p in f.pieces], vec(xbar)):
        return PolyhedralUnion.empty(f.dim)
    return regular_subdiff_pwl(f.negated(), xbar).map(lambda P: P.negate())


# ---------------------------------------------------------------- dispatchers


def _local_model(f: PiecewiseFunction, xbar) -> PiecewiseFunction:
    if f.is_affine:
        return f
    try:
        return linearize(f, xbar)
    except KinkError as exc:
        raise NonAffineError(f"no exact first-order model at the point: {exc}") from exc


def regular_subdiff(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    """Exact for affine pieces and for pieces differentiable at x̄ (through
    the first-order model, which differs from f by o(|x − x̄|))."""
    return regular_subdiff_pwl(_local_model(f, xbar), xbar)


def singular_regular_subdiff(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    return singular_regular_subdiff_pwl(_local_model(f, xbar), xbar)


def upper_regular_subdiff(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    return upper_regular_subdiff_pwl(_local_model(f, xbar), xbar)


def limiting_subdiff(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    """Limiting subdifferential: pwl engine, or the gradient when f is
    differentiable at an interior point of a single smooth piece."""
    if f.is_affine:
        return limiting_subdiff_pwl(f, xbar)
    return PolyhedralUnion.single(Polyhedron.point(_smooth_gradient(f, xbar)))


def limiting_singular_subdiff(f: PiecewiseFunction, xbar) -> PolyhedralUnion:
    if f.is_affine:
        return limiting_singular_subdiff_pwl(f, xbar)
    _smooth_gradient(f, xbar)
    return PolyhedralUnion.single(Polyhedron.point(zeros(f.dim)))


def _smooth_gradient(f: PiecewiseFunction, xbar):
    from .functions.piecewise import gradient

    try:
        return vec(gradient(f, vec(xbar)))
    except KinkError as exc:
        raise NonAffineError(f"limiting subdifferential needs affine pieces or a smooth point: {exc}") from exc


# ---------------------------------------------------------------- coderivatives


def graph_normal_cone(G: SetValuedMap, xbar, ybar) -> Polyhedron:
    return regular_normal_cone(G.graph, tuple(vec(xbar)) + tuple(vec(ybar)))


def coderivative(G: SetValuedMap, xbar, ybar, ystar) -> PolyhedralUnion:
    """{x* : (x*, −y*) in the regular normal cone to gph G at (x̄, ȳ)}."""
    N = graph_normal_cone(G, xbar, ybar)
    ys = vec(ystar)
    fixed = {G.dim_x + j: -v for j, v in enumerate(ys)}
    return PolyhedralUnion.of(G.dim_x, [N.fix(fixed).canonical()])


def shifted_coderivative_union(Phi, N: Polyhedron, dim_x: int) -> PolyhedralUnion:
    """⋃_{(x*, y*) in Φ} [x* + {u : (u, −y*) in N}], computed exactly as the
    projection of {(p, x*, y*) : (x*, y*) in Φ, (p − x*, −y*) in N} onto p.
    Each convex piece of Φ yields one convex piece of the result."""
    Phi = as_union(Phi)
    n = dim_x
    m = N.dim - n
    out = []
    for P in Phi.as_pieces():
        A, b, E, d = [], [], [], []
        for a, bi in zip(P.A, P.b):
            A.append(zeros(n) + tuple(a))
            b.append(bi)
        for e, di in zip(P.E, P.d):
            E.append(zeros(n) + tuple(e))
            d.append(di)
        for a, bi in zip(N.A, N.b):
            au, aw = a[:n], a[n:]
            A.append(tuple(au) + neg(au) + neg(aw))
            b.append(bi)
        for e, di in zip(N.E, N.d):
            eu, ew = e[:n], e[n:]
            E.append(tuple(eu) + neg(eu) + neg(ew))
            d.append(di)
        lifted = Polyhedron(2 * n + m, A, b, E, d)
        if lifted.is_empty():
            continue
        out.append(lifted.project(list(range(n)), method="generators").canonical())
    return PolyhedralUnion.of(n, out).simplify()


def scale_union(U, c) -> PolyhedralUnion:
    return as_union(U).map(lambda P: P.scale(c))


def cone_over(U) -> PolyhedralUnion:
    """⋃_{λ>0} λU, closed up (each piece's generators become rays)."""
    U = as_union(U)
    if U.is_empty():
        return U
    out = []
    for P in U.as_pieces():
        g = P.generators
        out.append(Polyhedron.cone(U.dim, list(g.points) + list(g.rays), g.lines).canonical())
    return PolyhedralUnion.of(U.dim, out)


# ---------------------------------------------------------------- distance functions


def _convex_distance_rows(P: Polyhedron):
    """L1 distance to a convex polyhedron as max of affine functions, read
    off the H-form of epi d = (P × {0}) + epi‖·‖₁."""
    n = P.dim
    rays = [unit(n, i) + (Fraction(1),) for i in range(n)] + [neg(unit(n, i)) + (Fraction(1),) for i in range(n)]
    rays.append(zeros(n) + (Fraction(1),))
    g = P.generators
    K = Polyhedron.from_generators(
        n + 1,
        [tuple(p) + (Fraction(0),) for p in g.points],
        rays + [tuple(r) + (Fraction(0),) for r in g.rays],
        [tuple(l) + (Fraction(0),) for l in g.lines],
    )
    rows, consts = [], []
    for a, bi in zip(K.A, K.b):
        c = a[n]
        if c >= 0:
            continue
        # a_x·x + c·t ≤ b  ⇔  t ≥ (a_x·x − b)/(−c)
        rows.append(tuple(ai / -c for ai in a[:n]))
        consts.append(-bi / -c)
    return rows, consts


def distance_function(S) -> PiecewiseFunction:
    """x ↦ d₁(x, S) for a polyhedral union S, as a piecewise-affine function."""
    S = as_union(S)
    n = S.dim
    if S.is_empty():
        raise ValueError("distance to the empty set is +∞ everywhere")
    if S.tag == "ALL":
        return PiecewiseFunction.build(n, [(Polyhedron.whole(n), 0)])
    per = [_convex_distance_rows(P) for P in S.pieces]
    if len(per) == 1:
        return max_affine(*per[0])
    from .functions.expr import affine_expr
    from .functions.piecewise import Piece
    import itertools

    pieces = []
    for choice in itertools.product(*[range(len(r)) for r, _ in per]):
        cell_A, cell_b = [], []
        vals = []
        for (rows, consts), i in zip(per, choice):
            for j in range(len(rows)):
                if j != i:
                    cell_A.append(tuple(rj - ri for rj, ri in zip(rows[j], rows[i])))
                    cell_b.append(consts[i] - consts[j])
            vals.append((rows[i], consts[i]))
        for k, (ak, ck) in enumerate(vals):
            A = list(cell_A)
            b = list(cell_b)
            for l, (al, cl) in enumerate(vals):
                if l != k:
                    A.append(tuple(x - y for x, y in zip(ak, al)))
                    b.append(cl - ck)
            D = Polyhedron(n, A, b)
            if not D.is_empty():
                pieces.append(Piece(D.canonical(), affine_expr(ak, ck)))
    return PiecewiseFunction(n, tuple(pieces))


@dataclass(frozen=True)
class DistanceIdentityReport:
    ok: bool
    subdiff_of_distance: PolyhedralUnion
    ball_cap_normal: PolyhedralUnion
    normal_cone: PolyhedralUnion
    cone_of_subdiff: PolyhedralUnion
    first_identity: bool
    second_identity: bool


def distance_subdiff_identity_check(S, xbar, norm: NormChoice = NormChoice.L1) -> DistanceIdentityReport:
    """Checks ∂̂d(x̄) = B* ∩ N̂(x̄; S) and N̂(x̄; S) = ⋃_{λ>0} λ∂̂d(x̄) exactly
    (L1 primal norm, sup-norm dual ball)."""
    if norm is not NormChoice.L1:
        raise ValueError("distance functions are implemented for the L1 norm")
    S = as_union(S)
    xbar = vec(xbar)
    if not S.contains(xbar, ACTIVE_TOL):
        raise ValueError("base point is not in the set")
    d = distance_function(S)
    lhs = regular_subdiff_pwl(d, xbar)
    N = regular_normal_cone(S, xbar)
    ball = norm.dual_ball(S.dim)
    rhs = PolyhedralUnion.of(S.dim, [ball.intersect(N).canonical()])
    first = same_set(lhs, rhs)
    cone = cone_over(lhs)
    second = same_set(cone, N)
    return DistanceIdentityReport(first and second, lhs, rhs, PolyhedralUnion.single(N), cone, first, second)


def limiting_distance_subdiff(S, xbar) -> PolyhedralUnion:
    """Limiting subdifferential of d₁(·, S) at x̄ ∈ S, via the pwl engine."""
    return limiting_subdiff_pwl(distance_function(S), xbar)


# ---------------------------------------------------------------- epigraph / graph normals


EPI = "EPI"
GRAPH = "GRAPH"


@dataclass(frozen=True)
class ConversionVerdict:
    in_normal_cone: bool  # (x*, −λ) in the regular normal cone (direct)
    by_formula: bool  # the subdifferential side of the equivalence
    agree: bool

    def __bool__(self):
        return self.in_normal_cone


def epi_graph_normal_convert(f: PiecewiseFunction, xbar, xstar, lam, source: str = EPI) -> ConversionVerdict:
    """Membership of (x*, −λ) in the normal cone to epi f (or gph f) at
    (x̄, f(x̄)), computed directly and through the subdifferential of λf."""
    lam = to_frac(lam)
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    _require_affine(f)
    xbar, xstar = vec(xbar), vec(xstar)
    fb = _finite_value(f, xbar)
    base = tuple(xbar) + (fb,)
    point = tuple(xstar) + (-lam,)
    if source == EPI:
        direct = regular_normal_cone(epigraph(f), base).contains(point)
        formula = lam > 0 and regular_subdiff_pwl(f.scaled(lam), xbar).contains(xstar)
    elif source == GRAPH:
        direct = regular_normal_cone(graph_of([f]), base).contains(point)
        formula = regular_subdiff_pwl(f.scaled(lam), xbar).contains(xstar)
    else:
        raise ValueError(f"unknown source {source!r}")
    return ConversionVerdict(direct, bool(formula), direct == bool(formula))


# ---------------------------------------------------------------- scalarization


@dataclass(frozen=True)
class ScalarizationResult:
    scalarized: PolyhedralUnion  # ∂̂⟨y*, h⟩(x̄)
    coderivative: PolyhedralUnion  # D̂*h(x̄)(y*)
    equal: bool
    calm: bool
    warning: str | None = None


def scalarize_coderivative(h: Sequence[PiecewiseFunction], xbar, ystar, modulus=None) -> ScalarizationResult:
    from .marginal.checks import check_calmness_map

    h = list(h)
    xbar, ystar = vec(xbar), vec(ystar)
    if len(ystar) != len(h):
        raise ValueError("y* must have one entry per component")
    for c in h:
        _require_affine(c)
    calm = check_calmness_map(h, xbar, modulus=modulus)
    lhs = regular_subdiff_pwl(linear_combination(h, ystar), xbar)
    hbar = tuple(to_frac(eval_function(c, xbar)) for c in h)
    G = SetValuedMap(h[0].dim, len(h), graph_of(h))
    rhs = coderivative(G, xbar, hbar, ystar)
    eq = same_set(lhs, rhs)
    warn = None
    if calm.holds is not True:
        warn = "calmness not confirmed; the identity is not guaranteed"
    return ScalarizationResult(lhs, rhs, eq, calm.holds is True, warn)


def gradient_or_none(f: PiecewiseFunction, xbar):
    """Gradient at x̄ if every piece through x̄ is differentiable there with a
    common gradient and the pieces cover a neighbourhood; otherwise None."""
    from .functions.piecewise import gradient

    try:
        return vec(gradient(f, vec(xbar)))
    except (KinkError, ValueError):
        return None


__all__ = [
    "EPI",
    "GRAPH",
    "ConversionVerdict",
    "DistanceIdentityReport",
    "ScalarizationResult",
    "coderivative",
    "cone_over",
    "distance_function",
    "distance_subdiff_identity_check",
    "epi_graph_normal_convert",
    "epigraph_normal_cone",
    "gradient_or_none",
    "graph_normal_cone",
    "limiting_distance_subdiff",
    "limiting_singular_subdiff",
    "limiting_singular_subdiff_pwl",
    "limiting_subdiff",
    "limiting_subdiff_pwl",
    "regular_subdiff",
    "regular_subdiff_pwl",
    "scale_union",
    "scalarize_coderivative",
    "shifted_coderivative_union",
    "singular_regular_subdiff",
    "singular_regular_subdiff_pwl",
    "upper_regular_subdiff",
    "upper_regular_subdiff_pwl",
]
