"""Qualification and well-posedness checkers.

Exact where the data are polyhedral and the property is decidable by LP;
otherwise the property is probed on points at shrinking radii and a ratio
that keeps growing as the radius shrinks counts as divergence.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .. import lp
from .._rational import add, neg, norm1, scale, to_frac, unit, vec, zeros
from ..functions.expr import KinkError, value_and_grad
from ..functions.piecewise import PiecewiseFunction, SetValuedMap, covers_neighborhood, eval_function, slice_map
from ..geometry import (
    ACTIVE_TOL,
    NormChoice,
    Polyhedron,
    PolyhedralUnion,
    arrangement_cells,
    as_union,
    distance,
    includes,
    intersect_unions,
    limiting_normal_cone,
    minkowski_sum_union,
    product_union,
    regular_normal_cone,
)
from .problem import MarginalProblem, eval_marginal, localized_marginal, solution_map

RADII = (Fraction(1, 10), Fraction(1, 100), Fraction(1, 1000), Fraction(1, 10000))
GAMMAS = (Fraction(1, 10), Fraction(1, 100), Fraction(1, 1000))
A_LADDER = (1, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class QualEntry:
    holds: bool | None  # None: unknown / not applicable
    modulus: float | None = None
    witness: object = None
    mode: str = "exact"
    detail: str = ""
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.holds is False and self.witness is None:
            raise ValueError("a failing entry needs a witness")

    def __bool__(self):
        return self.holds is True


@dataclass
class QualReport:
    entries: dict = field(default_factory=dict)

    def __getitem__(self, key) -> QualEntry:
        return self.entries[key]

    def holds(self, key) -> bool:
        e = self.entries.get(key)
        return e is not None and e.holds is True


def diverges(ratios: Sequence[float]) -> bool:
    """Ratios listed from the largest radius to the smallest."""
    finite = [r for r in ratios if r is not None]
    if any(math.isinf(r) for r in finite):
        return True
    if len(finite) < 2:
        return False
    return finite[-1] > 4 * finite[0] + 1


# ---------------------------------------------------------------- directions


_RATIONAL_DIRS = ((1, 2), (2, -1), (-1, 3), (3, 1), (-2, -1), (1, -3))


def probe_directions(dim: int, cones: Sequence[Polyhedron] = ()) -> list:
    """Coordinate directions, a few fixed skew directions and the generators
    of the given cones, all rational and normalized to unit L1 norm."""
    out = []
    for i in range(dim):
        out.append(unit(dim, i))
        out.append(neg(unit(dim, i)))
    for k, base in enumerate(_RATIONAL_DIRS):
        v = tuple(Fraction(base[(i + k) % 2] * (1 + (i % 3))) for i in range(dim))
        out.append(v)
    for T in cones:
        g = T.generators
        out.extend(g.rays)
        out.extend(g.lines)
        out.extend(neg(l) for l in g.lines)
        if len(g.rays) + len(g.lines) > 1:
            s = zeros(dim)
            for r in list(g.rays) + list(g.lines):
                s = add(s, r)
            out.append(s)
    seen, res = set(), []
    for v in out:
        n1 = norm1(v)
        if n1 == 0:
            continue
        v = scale(Fraction(1) / n1, v)
        if v not in seen:
            seen.add(v)
            res.append(v)
    return res


def _domain_cones(G: SetValuedMap, xbar) -> list:
    dom = G.domain()
    if dom.tag == "ALL" or dom.is_empty():
        return []
    return [P.tangent_cone(xbar) for P in dom.pieces if P.contains(xbar, ACTIVE_TOL)]


# ---------------------------------------------------------------- calmness


def _affine_calm(f: PiecewiseFunction, xbar) -> QualEntry:
    xbar = vec(xbar)
    through = [p for p in f.pieces if p.domain.contains(xbar, ACTIVE_TOL)]
    doms = [p.domain for p in through]
    if not covers_neighborhood(doms, xbar):
        w = _uncovered_point(doms, xbar)
        return QualEntry(False, None, {"x": w, "value": "inf"}, "exact", "domain does not cover a neighbourhood")
    grads = []
    for p in through:
        if p.affine_flag:
            grads.append(p.affine[0])
        else:
            grads.append(vec(value_and_grad(p.formula, xbar, f.dim)[1]))
    L = max((max((abs(c) for c in g), default=Fraction(0)) for g in grads), default=Fraction(0))
    return QualEntry(True, float(L), None, "exact", "largest dual-norm slope among pieces through the point")


def _uncovered_point(doms, xbar):
    n = len(xbar)
    cones = [D.tangent_cone(xbar) for D in doms]
    hyper = [a for T in cones for a in T.A] + [e for T in cones for e in T.E]
    for v in arrangement_cells(n, hyper):
        if not any(T.contains(v) for T in cones):
            s = max(abs(c) for c in v) or Fraction(1)
            return tuple(float(a + c / s / 1000) for a, c in zip(xbar, v))
    return tuple(float(c) for c in xbar)


def check_calmness(f: PiecewiseFunction, xbar, modulus=None) -> QualEntry:
    """|f(x) − f(x̄)| ≤ ℓ‖x − x̄‖₁ near x̄ (f = +∞ counts as a violation)."""
    if modulus is not None:
        return QualEntry(True, float(modulus), None, "user-supplied", "modulus supplied by the caller")
    xbar = vec(xbar)
    if f.is_affine:
        return _affine_calm(f, xbar)
    try:
        return _affine_calm(f, xbar)
    except KinkError:
        pass
    fb = float(eval_function(f, xbar))
    xb = np.array([float(c) for c in xbar])
    dirs = np.array([[float(c) for c in d] for d in probe_directions(f.dim)])
    ratios, worst = [], None
    for r in (1e-2, 1e-3, 1e-4, 1e-5, 1e-6):
        X = xb + r * dirs
        v = f.eval_batch(X)
        if np.any(~np.isfinite(v)):
            i = int(np.nonzero(~np.isfinite(v))[0][0])
            return QualEntry(False, None, {"x": tuple(X[i]), "value": "inf"}, "sampled", "point outside the domain")
        q = np.abs(v - fb) / r
        i = int(np.argmax(q))
        ratios.append(float(q[i]))
        worst = {"x": tuple(float(c) for c in X[i]), "ratio": float(q[i])}
    if diverges([ratios[1], ratios[-1]]):
        return QualEntry(False, None, worst, "sampled", f"ratios {ratios} grow as the radius shrinks")
    return QualEntry(True, max(ratios), None, "sampled", "bounded ratios on probe points")


def check_calmness_map(h: Sequence[PiecewiseFunction], xbar, modulus=None) -> QualEntry:
    """Calmness of x ↦ (h_1(x), ..., h_k(x)) in the L1 norm."""
    if modulus is not None:
        return QualEntry(True, float(modulus), None, "user-supplied")
    total = 0.0
    modes = set()
    for c in h:
        e = check_calmness(c, xbar)
        modes.add(e.mode)
        if e.holds is not True:
            return e
        total += e.modulus
    return QualEntry(True, total, None, "exact" if modes == {"exact"} else "sampled", "sum of component moduli")


# ---------------------------------------------------------------- nearly-isolated calmness


def _sup_dist(S: Polyhedron, ybar) -> tuple:
    """sup ‖v − ȳ‖₁ over S, with the maximizer (or a ray when unbounded)."""
    m = S.dim
    best, arg = Fraction(-1), None
    for signs in itertools.product((1, -1), repeat=m):
        c = tuple(Fraction(s) for s in signs)
        res = lp.maximize(c, S.A, S.b, S.E, S.d, n=m)
        if res.status == lp.INFEASIBLE:
            return None, None
        if res.status == lp.UNBOUNDED:
            return math.inf, ("ray", res.ray)
        val = res.value - sum((ci * yi for ci, yi in zip(c, ybar)), Fraction(0))
        if val > best:
            best, arg = val, res.x
    return best, arg


def _slice_sup(G: SetValuedMap, u, ybar, ball: Polyhedron | None):
    best, arg = None, None
    for P in slice_map(G, u).as_pieces() if not slice_map(G, u).is_empty() else ():
        S = P if ball is None else P.intersect(ball)
        if S.is_empty():
            continue
        val, a = _sup_dist(S, ybar)
        if val is None:
            continue
        if best is None or val > best:
            best, arg = val, a
    return best, arg


def _nic_probe(G: SetValuedMap, xbar, ybar, gamma, local: bool):
    """Ratios sup{‖v − ȳ‖ : v ∈ G(u) [∩ B(ȳ, γ)]}/‖u − x̄‖ over u at radii
    γ/10, γ/100, γ/1000 around x̄ (u ≠ x̄)."""
    xbar, ybar = vec(xbar), vec(ybar)
    ball = NormChoice.L1.unit_ball(G.dim_y).scale(gamma).translate(ybar) if local else None
    dirs = probe_directions(G.dim_x, _domain_cones(G, xbar))
    level_ratios, witness, seen_nonempty, L = [], None, False, Fraction(0)
    for k in (1, 2, 3):
        t = gamma / 10**k
        level = None
        for d in dirs:
            u = add(xbar, scale(t, d))
            val, arg = _slice_sup(G, u, ybar, ball)
            if val is None:
                continue
            seen_nonempty = True
            ratio = val / t if val != math.inf else math.inf
            if level is None or ratio > level:
                level = ratio
                if ratio != math.inf and ratio > L:
                    L = ratio
                if witness is None or ratio >= witness["ratio"]:
                    witness = {"u": tuple(float(c) for c in u), "v": _fmt_arg(arg), "ratio": float(ratio)}
        level_ratios.append(None if level is None else float(level))
    return level_ratios, witness, seen_nonempty, L


def _fmt_arg(arg):
    if arg is None:
        return None
    if isinstance(arg, tuple) and arg and arg[0] == "ray":
        return {"ray": [float(c) for c in arg[1]]}
    return [float(c) for c in arg]


def _nic(G, xbar, ybar, local: bool, gammas=GAMMAS) -> QualEntry:
    last = None
    any_nonempty = False
    for g in gammas:
        ratios, witness, nonempty, L = _nic_probe(G, xbar, ybar, g, local)
        any_nonempty |= nonempty
        if not nonempty:
            continue
        if not diverges(ratios):
            return QualEntry(True, float(L), None, "sampled", f"gamma={float(g)}, ratios={ratios}", {"gamma": float(g)})
        last = (witness, ratios, g)
    if not any_nonempty:
        return QualEntry(True, 0.0, None, "vacuous", "G(u) is empty for every probed u near xbar")
    w, ratios, g = last
    return QualEntry(False, None, w, "sampled", f"ratios {ratios} diverge for every gamma in the ladder")


def check_semilocal_nic(G: SetValuedMap, xbar, ybar) -> QualEntry:
    return _nic(G, xbar, ybar, local=False)


def check_local_nic(G: SetValuedMap, xbar, ybar) -> QualEntry:
    return _nic(G, xbar, ybar, local=True)


def check_isolated_calmness(G: SetValuedMap, xbar, ybar) -> QualEntry:
    """Local nearly-isolated calmness plus isolation of ȳ in G(x̄) (exact)."""
    ybar = vec(ybar)
    S = slice_map(G, vec(xbar))
    for P in S.as_pieces():
        if P.contains(ybar, ACTIVE_TOL):
            g = P.tangent_cone(ybar).generators
            if g.rays or g.lines:
                d = (list(g.rays) + list(g.lines))[0]
                w = tuple(float(a + Fraction(1, 1000) * c) for a, c in zip(ybar, d))
                return QualEntry(False, None, {"u": tuple(float(c) for c in xbar), "v": w}, "exact", "ybar is not isolated in G(xbar)")
    e = check_local_nic(G, xbar, ybar)
    if e.holds is not True and e.mode != "vacuous":
        return e
    return QualEntry(True, e.modulus, None, e.mode, "ybar isolated in G(xbar); " + e.detail, e.constants)


# ---------------------------------------------------------------- condition (H)


def _close(a, b, tol=1e-7) -> bool:
    if a == b:
        return True
    if isinstance(a, float) and isinstance(b, float) and (math.isinf(a) or math.isinf(b)):
        return False
    if math.isinf(float(a)) or math.isinf(float(b)):
        return False
    return abs(float(a) - float(b)) <= tol


def check_condition_H(P: MarginalProblem, eps_list=(Fraction(1, 10), Fraction(1, 100), Fraction(1, 1000)), gammas=RADII) -> QualEntry:
    """For each ε find γ on the ladder with μ(x) equal to the ε-localized
    infimum at every probe point of B(x̄, γ)."""
    dirs = probe_directions(P.n, _domain_cones(P.G, P.xbar))
    per_eps = {}
    witness = None
    for eps in eps_list:
        eps = to_frac(eps)
        ok_gamma = None
        for g in gammas:
            bad = None
            for d in dirs:
                for t in (g, g / 2, g / 10):
                    x = add(P.xbar, scale(t, d))
                    mu = eval_marginal(P, x)
                    loc = localized_marginal(P, x, eps)
                    if not _close(mu, loc):
                        bad = {"x": tuple(float(c) for c in x), "eps": float(eps), "mu": _num(mu), "localized": _num(loc)}
                        break
                if bad:
                    break
            if bad is None:
                ok_gamma = g
                break
            witness = bad
        per_eps[float(eps)] = None if ok_gamma is None else float(ok_gamma)
        if ok_gamma is None:
            return QualEntry(False, None, witness, "sampled", "no gamma on the ladder localizes the infimum", {"per_eps": per_eps})
    return QualEntry(True, None, None, "sampled", "checked for finitely many eps", {"per_eps": per_eps})


def _num(v):
    if isinstance(v, Fraction):
        return float(v)
    return v


# ---------------------------------------------------------------- upper Lipschitzian selection


def check_upper_lipschitz_selection(P: MarginalProblem) -> QualEntry:
    """Candidate selection h(x) = a point of M(x) closest to ȳ, probed on
    dom G near x̄. A pass is sufficient evidence only."""
    dirs = probe_directions(P.n, _domain_cones(P.G, P.xbar))
    levels, witness, nonempty = [], None, False
    for t in RADII:
        level = None
        for d in dirs:
            x = add(P.xbar, scale(t, d))
            M = solution_map(P, x)
            if M.is_empty():
                continue
            nonempty = True
            dist = distance(P.ybar, M) if P.exact else _float_dist(P.ybar, M)
            ratio = float(dist) / float(t)
            if level is None or ratio > level:
                level = ratio
                if witness is None or ratio >= witness["ratio"]:
                    witness = {"x": tuple(float(c) for c in x), "ratio": ratio}
        levels.append(level)
    if not nonempty:
        return QualEntry(True, 0.0, None, "vacuous", "M(x) is empty at every probed x other than xbar")
    finite = [v for v in levels if v is not None]
    if diverges(finite):
        return QualEntry(False, None, witness, "heuristic", f"selection ratios {finite} diverge")
    return QualEntry(True, max(finite), None, "heuristic", "nearest-point selection has bounded ratios")


def _float_dist(ybar, M: PolyhedralUnion) -> float:
    yb = np.array([float(c) for c in ybar])
    best = math.inf
    for Q in M.as_pieces():
        p = np.array([float(c) for c in Q.generators.points[0]])
        best = min(best, float(np.sum(np.abs(p - yb))))
    return best


# ---------------------------------------------------------------- metric qualification


def check_Q1(C, D, zbar, radii=(Fraction(1, 10), Fraction(1, 100), Fraction(1, 1000))) -> QualEntry:
    """d(z, C∩D) ≤ a·(d(z, C) + d(z, D)) for probe points z near z̄."""
    C, D = as_union(C), as_union(D)
    zbar = vec(zbar)
    if not (C.contains(zbar, ACTIVE_TOL) and D.contains(zbar, ACTIVE_TOL)):
        raise ValueError("base point is not in both sets")
    CD = intersect_unions(C, D)
    dirs = probe_directions(C.dim)
    levels, witness = [], None
    for r in radii:
        level = Fraction(0)
        for d in dirs:
            z = add(zbar, scale(r, d))
            num = distance(z, CD)
            den = distance(z, C) + distance(z, D)
            if num == 0:
                continue
            ratio = math.inf if den == 0 else num / den
            if ratio > level:
                level = ratio
                witness = {"z": tuple(float(c) for c in z), "ratio": float(ratio)}
        levels.append(float(level))
    if diverges(levels):
        return QualEntry(False, None, witness, "sampled", f"ratios {levels}")
    a = max(1.0, max(levels))
    return QualEntry(True, a, None, "sampled", "", {"a": a, "r": float(radii[0])})


def _distance_subdiffs(S: PolyhedralUnion, z, limiting: bool) -> PolyhedralUnion:
    ball = NormChoice.L1.dual_ball(S.dim)
    if limiting:
        N = limiting_normal_cone(S, z)
        return N.map(lambda K: K.intersect(ball).canonical())
    return PolyhedralUnion.of(S.dim, [regular_normal_cone(S, z).intersect(ball).canonical()])


def check_Q2(C, D, zbar, limiting: bool = False, a_ladder=A_LADDER) -> QualEntry:
    """∂d(z̄; C∩D) ⊆ a[∂d(z̄; C) + ∂d(z̄; D)] with distance subdifferentials
    computed as (dual unit ball) ∩ (normal cone); regular or limiting."""
    C, D = as_union(C), as_union(D)
    zbar = vec(zbar)
    if not (C.contains(zbar, ACTIVE_TOL) and D.contains(zbar, ACTIVE_TOL)):
        raise ValueError("base point is not in both sets")
    CD = intersect_unions(C, D)
    left = _distance_subdiffs(CD, zbar, limiting)
    right = minkowski_sum_union(_distance_subdiffs(C, zbar, limiting), _distance_subdiffs(D, zbar, limiting))
    last = None
    for a in a_ladder:
        inc = includes(right.map(lambda K: K.scale(a)), left)
        if inc.holds:
            return QualEntry(True, float(a), None, inc.mode, "limiting" if limiting else "regular", {"a": a})
        last = inc
    return QualEntry(
        False, None, {"dual_point": [float(c) for c in last.witness]}, last.mode, "inclusion fails for every a on the ladder"
    )


def marginal_q_sets(P: MarginalProblem):
    """(epi φ, gph G × ℝ, (x̄, ȳ, φ(x̄, ȳ))) for the qualification conditions."""
    from ..functions.piecewise import epigraph

    C = epigraph(P.phi)
    D = product_union(P.G.graph, PolyhedralUnion.whole(1))
    return C, D, P.zbar + (P.phi_value,)


# ---------------------------------------------------------------- aggregate


HYPOTHESES = ("SEMILOCAL_NIC", "LOCAL_NIC_WITH_H", "UL_SELECTION")


def check_hypothesis(P: MarginalProblem, name: str, report: QualReport | None = None) -> QualEntry:
    report = report if report is not None else QualReport()
    e = report.entries
    if name == "SEMILOCAL_NIC":
        if "semilocal_nic" not in e:
            e["semilocal_nic"] = check_semilocal_nic(P.G, P.xbar, P.ybar)
        return e["semilocal_nic"]
    if name == "LOCAL_NIC_WITH_H":
        if "local_nic" not in e:
            e["local_nic"] = check_local_nic(P.G, P.xbar, P.ybar)
        if e["local_nic"].holds is not True:
            return e["local_nic"]
        if "condition_H" not in e:
            e["condition_H"] = check_condition_H(P)
        return e["condition_H"] if e["condition_H"].holds is not True else QualEntry(True, e["local_nic"].modulus, None, e["local_nic"].mode)
    if name == "UL_SELECTION":
        if "ul_selection" not in e:
            e["ul_selection"] = check_upper_lipschitz_selection(P)
        return e["ul_selection"]
    raise ValueError(f"unknown hypothesis {name!r}")


def first_hypothesis(P: MarginalProblem, report: QualReport | None = None):
    """Name of the first entry of HYPOTHESES that verifies, or None."""
    report = report if report is not None else QualReport()
    for name in HYPOTHESES:
        if check_hypothesis(P, name, report).holds is True:
            return name
    return None


def qual_report(P: MarginalProblem) -> QualReport:
    rep = QualReport()
    rep.entries["calmness_phi"] = check_calmness(P.phi, P.zbar)
    rep.entries["semilocal_nic"] = check_semilocal_nic(P.G, P.xbar, P.ybar)
    rep.entries["local_nic"] = check_local_nic(P.G, P.xbar, P.ybar)
    rep.entries["isolated_calmness"] = check_isolated_calmness(P.G, P.xbar, P.ybar)
    rep.entries["condition_H"] = check_condition_H(P)
    rep.entries["ul_selection"] = check_upper_lipschitz_selection(P)
    if P.exact:
        C, D, z = marginal_q_sets(P)
        rep.entries["Q1"] = check_Q1(C, D, z)
        rep.entries["Q2"] = check_Q2(C, D, z)
    else:
        rep.entries["Q1"] = QualEntry(None, None, None, "not-applicable", "needs affine cost pieces")
        rep.entries["Q2"] = QualEntry(None, None, None, "not-applicable", "needs affine cost pieces")
    return rep
