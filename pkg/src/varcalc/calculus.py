"""Calculus rules for regular and singular regular subdifferentials.

Each rule is the marginal-function machinery specialised to a particular
cost and constraint map: the cost is φ(x, y) and G is the graph of the inner
map, so the coderivative of G at y* is the regular subdifferential of ⟨y*, g⟩
whenever g is calm. Preconditions are verified with the marginal checkers;
a failed metric qualification downgrades the answer to a lower estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ._rational import to_frac, unit, vec, zeros
from .exact_subdiff import (
    gradient_or_none,
    regular_subdiff,
    scale_union,
    shifted_coderivative_union,
    singular_regular_subdiff,
    upper_regular_subdiff,
    _local_model,
)
from .functions.piecewise import (
    NonAffineError,
    PiecewiseFunction,
    affine_function,
    epigraph,
    eval_function,
    graph_of,
    linear_combination,
)
from .geometry import Polyhedron, PolyhedralUnion, minkowski_sum_union, product_union, regular_normal_cone
from .marginal.checks import QualEntry, check_calmness_map, check_Q2
from .marginal.theorems import EQUALITY, LOWER_ONLY, HypothesisError, NonDifferentiableError


@dataclass(frozen=True)
class RuleResult:
    regular: PolyhedralUnion
    singular: PolyhedralUnion
    provenance: str
    rule: str
    preconditions: dict = field(default_factory=dict)
    notes: tuple = ()


def _zero(n) -> PolyhedralUnion:
    return PolyhedralUnion.single(Polyhedron.point(zeros(n)))


def _values(gs, xbar):
    out = []
    for g in gs:
        v = eval_function(g, xbar)
        if isinstance(v, float):
            raise ValueError("inner function is not finite at the base point")
        out.append(to_frac(v))
    return tuple(out)


def _require_calm(gs, xbar, modulus, force, pre, label="calm_inner"):
    e = check_calmness_map(gs, xbar, modulus)
    pre[label] = e
    if e.holds is not True and not force:
        raise HypothesisError(f"inner map is not calm at the base point: {e.detail}", e)


def _q2_or_skip(build, pre):
    """Run Q2 on polyhedral data; None when the data are not polyhedral."""
    try:
        C, D, z = build()
    except NonAffineError:
        pre["Q2"] = QualEntry(None, None, None, "not-applicable", "data are not polyhedral")
        return None
    e = check_Q2(C, D, z)
    pre["Q2"] = e
    return e.holds is True


def _scalarized(gs: Sequence[PiecewiseFunction], w, xbar) -> PolyhedralUnion:
    """∂̂⟨w, g⟩(x̄)."""
    return regular_subdiff(linear_combination(list(gs), w), xbar)


# ---------------------------------------------------------------- generalized composition


def chain_generalized(phi: PiecewiseFunction, g: Sequence[PiecewiseFunction], xbar, modulus=None, force=False) -> RuleResult:
    """x ↦ φ(x, g(x)) with φ differentiable at (x̄, g(x̄)) and g calm:
    regular = ∇ₓφ + ∂̂⟨∇_yφ, g⟩(x̄), singular = {0}."""
    xbar = vec(xbar)
    n = len(xbar)
    pre = {}
    _require_calm(g, xbar, modulus, force, pre)
    ybar = _values(g, xbar)
    grad = gradient_or_none(phi, xbar + ybar)
    if grad is None:
        raise NonDifferentiableError("outer function is not differentiable at (xbar, g(xbar))")
    grad = vec(grad)
    gx, gy = grad[:n], grad[n:]
    reg = _scalarized(g, gy, xbar).map(lambda P: P.translate(gx))
    return RuleResult(reg, _zero(n), EQUALITY, "generalized-composition", pre)


# ---------------------------------------------------------------- products and quotients


def product_rule(f1, f2, xbar, modulus=None, force=False) -> RuleResult:
    """∂̂(f1·f2)(x̄) = ∂̂(f2(x̄)f1 + f1(x̄)f2)(x̄); singular part {0}."""
    xbar = vec(xbar)
    pre = {}
    _require_calm([f1, f2], xbar, modulus, force, pre, "calm_factors")
    a, b = _values([f1, f2], xbar)
    reg = _scalarized([f1, f2], (b, a), xbar)
    return RuleResult(reg, _zero(len(xbar)), EQUALITY, "product", pre)


def quotient_rule(f1, f2, xbar, modulus=None, force=False) -> RuleResult:
    """∂̂(f1/f2)(x̄) = ∂̂(f2(x̄)f1 − f1(x̄)f2)(x̄)/f2(x̄)²."""
    xbar = vec(xbar)
    pre = {}
    a, b = _values([f1, f2], xbar)
    if b == 0:
        raise ZeroDivisionError("denominator vanishes at the base point")
    _require_calm([f1, f2], xbar, modulus, force, pre, "calm_factors")
    reg = scale_union(_scalarized([f1, f2], (b, -a), xbar), Fraction(1) / (b * b))
    return RuleResult(reg, _zero(len(xbar)), EQUALITY, "quotient", pre)


def reciprocal_rule(f, xbar, modulus=None, force=False) -> RuleResult:
    """∂̂(1/f)(x̄) = −∂̂⁺f(x̄)/f(x̄)²."""
    xbar = vec(xbar)
    pre = {}
    (a,) = _values([f], xbar)
    if a == 0:
        raise ZeroDivisionError("function vanishes at the base point")
    _require_calm([f], xbar, modulus, force, pre, "calm_factors")
    reg = scale_union(upper_regular_subdiff(f, xbar), -Fraction(1) / (a * a))
    return RuleResult(reg, _zero(len(xbar)), EQUALITY, "reciprocal", pre)


# ---------------------------------------------------------------- sum rule


def sum_rule(f1, f2, xbar, modulus=None, force=False) -> RuleResult:
    """∂̂(f1 + f2)(x̄) = ∂̂f1(x̄) + ∂̂f2(x̄) and ∂̂∞(f1 + f2)(x̄) = ∂̂∞f1(x̄),
    with f2 calm and Q2 for epi[f1(x) + y] and gph f2 × ℝ. Without Q2 the sums
    are only lower estimates."""
    xbar = vec(xbar)
    n = len(xbar)
    pre = {}
    _require_calm([f2], xbar, modulus, force, pre)
    (v2,) = _values([f2], xbar)
    (v1,) = _values([f1], xbar)

    def sets():
        phi = linear_combination([f1.lift(n + 1, 0), affine_function(unit(n + 1, n))], (1, 1))
        C = epigraph(phi)
        D = product_union(graph_of([f2]), PolyhedralUnion.whole(1))
        return C, D, xbar + (v2, v1 + v2)

    ok = _q2_or_skip(sets, pre)
    reg = minkowski_sum_union(regular_subdiff(f1, xbar), regular_subdiff(f2, xbar))
    sing = singular_regular_subdiff(f1, xbar)
    prov = EQUALITY if ok or force else LOWER_ONLY
    return RuleResult(reg, sing, prov, "sum", pre, () if ok else ("metric qualification not verified",))


# ---------------------------------------------------------------- chain rules under Q2


def _inner_graph_cone(g, xbar, ybar) -> Polyhedron:
    return regular_normal_cone(graph_of(g), xbar + ybar)


def chain_q2(h: PiecewiseFunction, g: Sequence[PiecewiseFunction], xbar, modulus=None, force=False) -> RuleResult:
    """(h∘g): regular = ⋃_{y* ∈ ∂̂h(ȳ)} ∂̂⟨y*, g⟩(x̄), singular the same over
    ∂̂∞h(ȳ). The unions are exact projections: with g calm, {x* : (x*, −y*) in
    the normal cone to gph g} is ∂̂⟨y*, g⟩(x̄)."""
    xbar = vec(xbar)
    n, m = len(xbar), len(g)
    if h.dim != m:
        raise ValueError("outer function dimension must match the number of inner components")
    pre = {}
    _require_calm(g, xbar, modulus, force, pre)
    ybar = _values(g, xbar)
    hy = eval_function(h, ybar)
    if isinstance(hy, float):
        raise ValueError("outer function is not finite at g(xbar)")

    def sets():
        C = product_union(PolyhedralUnion.whole(n), epigraph(h))
        D = product_union(graph_of(g), PolyhedralUnion.whole(1))
        return C, D, xbar + ybar + (to_frac(hy),)

    ok = _q2_or_skip(sets, pre)
    N = _inner_graph_cone(g, xbar, ybar)
    lift = lambda U: U.map(lambda P: Polyhedron.point(zeros(n)).product(P))
    reg = shifted_coderivative_union(lift(regular_subdiff(h, ybar)), N, n)
    sing = shifted_coderivative_union(lift(singular_regular_subdiff(h, ybar)), N, n)
    prov = EQUALITY if ok or force else LOWER_ONLY
    return RuleResult(reg, sing, prov, "chain-q2", pre, () if ok else ("metric qualification not verified",))


def _scaled_union(Lam: PolyhedralUnion, f: PiecewiseFunction, xbar, sign: int) -> PolyhedralUnion:
    """⋃ over λ ∈ Λ with sign·λ ≥ 0 of |λ|·∂̂(sign·f)(x̄), as the projection of
    {(p, λ) : (p, −|λ|) in the epigraphical normal cone of sign·f}. At λ = 0
    this contributes the singular part, which is {0} for calm f."""
    F = _local_model(f if sign > 0 else f.negated(), xbar)
    K = regular_normal_cone(epigraph(F), xbar + (to_frac(eval_function(F, xbar)),))
    n = len(xbar)
    out = []
    half = Polyhedron(1, [(Fraction(-sign),)], [Fraction(0)], [], [])
    for L in Lam.as_pieces():
        L = L.intersect(half)
        if L.is_empty():
            continue
        # variables (p, λ): (p, −sign·λ) ∈ K, λ ∈ L
        A = [tuple(a[:n]) + (-sign * a[n],) for a in K.A] + [zeros(n) + tuple(a) for a in L.A]
        b = list(K.b) + list(L.b)
        E = [tuple(e[:n]) + (-sign * e[n],) for e in K.E] + [zeros(n) + tuple(e) for e in L.E]
        d = list(K.d) + list(L.d)
        lifted = Polyhedron(n + 1, A, b, E, d)
        if not lifted.is_empty():
            out.append(lifted.project(list(range(n)), method="generators").canonical())
    return PolyhedralUnion.of(n, out)


def chain_real_inner(h: PiecewiseFunction, g: PiecewiseFunction, xbar, modulus=None, force=False) -> RuleResult:
    """(h∘g) with real-valued g: ⋃_{λ ≥ 0} λ∂̂g(x̄) ∪ ⋃_{λ < 0} λ∂̂⁺g(x̄) over
    λ ∈ ∂̂h(ȳ); singular part the same over ∂̂∞h(ȳ)."""
    xbar = vec(xbar)
    n = len(xbar)
    if h.dim != 1:
        raise ValueError("outer function must be of one variable")
    pre = {}
    _require_calm([g], xbar, modulus, force, pre)
    ybar = _values([g], xbar)
    hy = eval_function(h, ybar)
    if isinstance(hy, float):
        raise ValueError("outer function is not finite at g(xbar)")

    def sets():
        C = product_union(PolyhedralUnion.whole(n), epigraph(h))
        D = product_union(graph_of([g]), PolyhedralUnion.whole(1))
        return C, D, xbar + ybar + (to_frac(hy),)

    ok = _q2_or_skip(sets, pre)

    def both(Lam):
        U = PolyhedralUnion.of(n, _scaled_union(Lam, g, xbar, 1).as_pieces() + _scaled_union(Lam, g, xbar, -1).as_pieces())
        return U.simplify()

    reg = both(regular_subdiff(h, ybar))
    sing = both(singular_regular_subdiff(h, ybar))
    prov = EQUALITY if ok or force else LOWER_ONLY
    return RuleResult(reg, sing, prov, "chain-real-inner", pre, () if ok else ("metric qualification not verified",))
