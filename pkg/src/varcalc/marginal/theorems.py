"""Subdifferential estimates and equalities for marginal functions.

Every result carries a provenance: which formula produced it, which
hypotheses were verified, and whether the set is known to equal ∂̂μ(x̄)
(EQUALITY), to contain it (UPPER_ONLY), or to be contained in it (LOWER_ONLY).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .. import lp
from .._rational import neg, vec
from ..exact_subdiff import (
    coderivative,
    graph_normal_cone,
    gradient_or_none,
    regular_subdiff,
    shifted_coderivative_union,
    singular_regular_subdiff,
    upper_regular_subdiff,
)
from ..geometry import Polyhedron, PolyhedralUnion, regular_normal_cone
from ..oracles import OracleConfig, oracle_regular_subdiff, oracle_singular_regular_subdiff
from .checks import (
    HYPOTHESES,
    QualEntry,
    QualReport,
    check_calmness,
    check_hypothesis,
    check_Q2,
    first_hypothesis,
    marginal_q_sets,
)
from .problem import MarginalProblem, UnboundedMarginalError, marginal_callable

EQUALITY = "EQUALITY"
LOWER_ONLY = "LOWER_ONLY"
UPPER_ONLY = "UPPER_ONLY"
NOT_APPLICABLE = "NOT_APPLICABLE"
UNVERIFIED = "UNVERIFIED"


class HypothesisError(ValueError):
    """A required hypothesis failed its checker and no force flag was given."""

    def __init__(self, message, entry: QualEntry | None = None):
        super().__init__(message)
        self.entry = entry


class NonDifferentiableError(ValueError):
    pass


@dataclass(frozen=True)
class MarginalResult:
    value: PolyhedralUnion | None
    provenance: str
    theorem: str
    hypotheses: tuple = ()  # names of verified hypotheses
    mode: str = "exact"
    forced: bool = False
    notes: tuple = ()

    @property
    def downgraded(self) -> bool:
        return self.provenance in (LOWER_ONLY, UPPER_ONLY, UNVERIFIED)


def _require_finite(P: MarginalProblem):
    mu = P.mu_value
    if mu == -math.inf:
        raise UnboundedMarginalError("marginal value is -inf at xbar")
    if mu == math.inf:
        raise ValueError("marginal value is +inf at xbar")


def _hypothesis(P, hypothesis, report):
    """(name, entry) of the requested hypothesis, or of the first that holds."""
    if hypothesis is not None:
        if hypothesis not in HYPOTHESES:
            raise ValueError(f"unknown hypothesis {hypothesis!r}; expected one of {HYPOTHESES}")
        return hypothesis, check_hypothesis(P, hypothesis, report)
    name = first_hypothesis(P, report)
    if name is None:
        return None, check_hypothesis(P, HYPOTHESES[-1], report)
    return name, check_hypothesis(P, name, report)


def _normal_cone(P):
    return graph_normal_cone(P.G, P.xbar, P.ybar)


# ---------------------------------------------------------------- estimates


def intersect_shifted_coderivatives(Phi: Polyhedron, N: Polyhedron, n: int) -> Polyhedron:
    """⋂_{(x*, y*) ∈ Φ} [x* + {u : (u, −y*) ∈ N}] for a convex polyhedron Φ
    and a polyhedral cone N, one LP per constraint row of N:
    r_u·p ≤ inf over Φ of (r_u·x* + r_w·y*)."""
    rows = [tuple(r) for r in N.A] + [tuple(e) for e in N.E] + [neg(e) for e in N.E]
    A, b = [], []
    for r in rows:
        ru, rw = r[:n], r[n:]
        res = lp.linprog(tuple(ru) + tuple(rw), Phi.A, Phi.b, Phi.E, Phi.d, n=Phi.dim)
        if res.status == lp.UNBOUNDED:
            return Polyhedron.empty(n)
        if res.status == lp.INFEASIBLE:
            return Polyhedron.whole(n)
        A.append(ru)
        b.append(res.value)
    return Polyhedron(n, A, b, [], []).canonical()


def upper_estimate_regular(P: MarginalProblem) -> MarginalResult:
    """Upper estimate of ∂̂μ(x̄) over the upper regular subdifferential of φ;
    NOT_APPLICABLE when that subdifferential is empty."""
    _require_finite(P)
    up = upper_regular_subdiff(P.phi, P.zbar)
    if up.is_empty():
        return MarginalResult(None, NOT_APPLICABLE, "regular-upper-estimate", notes=("upper regular subdifferential of phi is empty",))
    N = _normal_cone(P)
    pieces = [intersect_shifted_coderivatives(Q, N, P.n) for Q in up.as_pieces()]
    out = pieces[0]
    for Q in pieces[1:]:
        out = out.intersect(Q)
    return MarginalResult(PolyhedralUnion.of(P.n, [out]), UPPER_ONLY, "regular-upper-estimate")


def _lower(P, Phi, hypothesis, force, report, theorem):
    report = report if report is not None else QualReport()
    name, entry = _hypothesis(P, hypothesis, report)
    value = shifted_coderivative_union(Phi, _normal_cone(P), P.n)
    if entry.holds is True:
        return MarginalResult(value, LOWER_ONLY, theorem, (name,), entry.mode)
    if force:
        return MarginalResult(value, LOWER_ONLY, theorem, (), "forced", forced=True)
    raise HypothesisError(f"hypothesis {name or hypothesis or 'a-c'} not verified: {entry.detail}", entry)


def lower_estimate_regular(P: MarginalProblem, hypothesis=None, force=False, report=None) -> MarginalResult:
    """⋃ over ∂̂φ(x̄, ȳ) of x* + D̂*G(x̄, ȳ)(y*), licensed by the named
    hypothesis (or the first of the three that verifies)."""
    _require_finite(P)
    return _lower(P, regular_subdiff(P.phi, P.zbar), hypothesis, force, report, "regular-lower-estimate")


def lower_estimate_singular(P: MarginalProblem, hypothesis=None, force=False, report=None) -> MarginalResult:
    _require_finite(P)
    return _lower(P, singular_regular_subdiff(P.phi, P.zbar), hypothesis, force, report, "singular-lower-estimate")


def upper_estimate_singular(P: MarginalProblem, force=False, modulus=None) -> MarginalResult:
    """D̂*G(x̄, ȳ)(0), an upper estimate when φ is calm at (x̄, ȳ)."""
    _require_finite(P)
    calm = check_calmness(P.phi, P.zbar, modulus)
    value = coderivative(P.G, P.xbar, P.ybar, (0,) * P.m)
    if calm.holds is True:
        return MarginalResult(value, UPPER_ONLY, "singular-upper-estimate", ("CALM_PHI",), calm.mode)
    if force:
        return MarginalResult(value, UPPER_ONLY, "singular-upper-estimate", (), "forced", forced=True)
    raise HypothesisError(f"phi is not calm at (xbar, ybar): {calm.detail}", calm)


# ---------------------------------------------------------------- equalities


def _grad(P):
    g = gradient_or_none(P.phi, P.zbar)
    if g is None:
        raise NonDifferentiableError("phi is not differentiable at (xbar, ybar)")
    return vec(g)


def exact_regular_diffcost(P: MarginalProblem, force=False, report=None) -> MarginalResult:
    """∂̂μ(x̄) = x* + D̂*G(x̄, ȳ)(y*) with (x*, y*) = ∇φ(x̄, ȳ). Without a
    verified hypothesis the same set is still an upper estimate."""
    _require_finite(P)
    g = _grad(P)
    value = coderivative(P.G, P.xbar, P.ybar, g[P.n :]).map(lambda K: K.translate(g[: P.n]))
    return _gate(P, value, "regular-equality-differentiable-cost", UPPER_ONLY, force, report)


def exact_singular_diffcost(P: MarginalProblem, force=False, report=None) -> MarginalResult:
    _require_finite(P)
    _grad(P)
    value = coderivative(P.G, P.xbar, P.ybar, (0,) * P.m)
    return _gate(P, value, "singular-equality-differentiable-cost", UPPER_ONLY, force, report)


def _gate(P, value, theorem, fallback, force, report, extra=(), extra_ok=True):
    report = report if report is not None else QualReport()
    name = first_hypothesis(P, report)
    verified = tuple(extra) + ((name,) if name else ())
    if name is not None and extra_ok:
        modes = {e.mode for e in report.entries.values()}
        return MarginalResult(value, EQUALITY, theorem, verified, "sampled" if modes - {"exact"} else "exact")
    if force:
        return MarginalResult(value, EQUALITY, theorem, verified, "forced", forced=True)
    if name is not None:
        return MarginalResult(value, fallback, theorem, verified, notes=("metric qualification not verified",))
    return MarginalResult(value, fallback, theorem, verified, notes=("none of the hypotheses a-c verified",))


def _q2(P, report):
    report = report if report is not None else QualReport()
    if "Q2" not in report.entries:
        C, D, z = marginal_q_sets(P)
        report.entries["Q2"] = check_Q2(C, D, z)
    return report.entries["Q2"]


def exact_regular_q2(P: MarginalProblem, force=False, report=None) -> MarginalResult:
    """∂̂μ(x̄) = ⋃ over ∂̂φ of x* + D̂*G(y*) for piecewise-affine φ under the
    metric qualification of epi φ and gph G × ℝ plus one of the hypotheses.
    With Q2 failing but a hypothesis verified the set is a lower estimate."""
    _require_finite(P)
    if not P.exact:
        raise ValueError("the nondifferentiable-cost equality needs piecewise-affine cost")
    report = report if report is not None else QualReport()
    q = _q2(P, report)
    value = shifted_coderivative_union(regular_subdiff(P.phi, P.zbar), _normal_cone(P), P.n)
    return _gate(P, value, "regular-equality-q2", _fallback(P, q, report), force, report, ("Q2",) if q.holds else (), q.holds is True)


def exact_singular_q2(P: MarginalProblem, force=False, report=None) -> MarginalResult:
    _require_finite(P)
    if not P.exact:
        raise ValueError("the nondifferentiable-cost equality needs piecewise-affine cost")
    report = report if report is not None else QualReport()
    q = _q2(P, report)
    value = shifted_coderivative_union(singular_regular_subdiff(P.phi, P.zbar), _normal_cone(P), P.n)
    return _gate(P, value, "singular-equality-q2", _fallback(P, q, report), force, report, ("Q2",) if q.holds else (), q.holds is True)


def _fallback(P, q, report):
    return LOWER_ONLY if first_hypothesis(P, report) is not None else UNVERIFIED


# ---------------------------------------------------------------- direct computation


@dataclass(frozen=True)
class DirectSubdiffs:
    regular: object  # PolyhedralUnion (exact) or OracleVerdict (oracle)
    singular: object
    mode: str  # "exact" (epigraph of μ) or "oracle"


def direct_marginal_subdiffs(P: MarginalProblem, cfg: OracleConfig | None = None) -> DirectSubdiffs:
    """∂̂μ(x̄) and ∂̂∞μ(x̄) straight from μ: exactly from epi μ on the affine
    path, otherwise by the definitional oracles on the pointwise μ."""
    _require_finite(P)
    if P.exact:
        N = regular_normal_cone(P.epigraph_of_marginal, P.xbar + (Fraction(P.mu_value),))
        reg = N.fix({P.n: -1}).canonical()
        sing = N.fix({P.n: 0}).canonical()
        return DirectSubdiffs(PolyhedralUnion.of(P.n, [reg]), PolyhedralUnion.of(P.n, [sing]), "exact")
    cfg = cfg or OracleConfig()
    mu = marginal_callable(P)
    v1 = oracle_regular_subdiff(mu, P.xbar, cfg)
    v2 = oracle_singular_regular_subdiff(mu, P.xbar, cfg)
    return DirectSubdiffs(v1, v2, "oracle")
