"""Optimistic bilevel programs through the lower-level value function.

The bilevel program min ψ(x, y) over y ∈ M(x) is rewritten as the single
level problem min ψ s.t. g(x, y) ≤ 0, φ(x, y) ≤ μ(x). This module builds that
reformulation, probes partial calmness, evaluates the exact penalty, checks
the constraint qualifications and searches for the stationarity multipliers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import lp
from ._parallel import pmap
from ._rational import add, to_frac, vec, zeros
from .exact_subdiff import limiting_subdiff, regular_subdiff
from .functions.expr import Expr, KinkError, affine_form, evaluate, max_var, value_and_grad
from .functions.piecewise import NonAffineError, PiecewiseFunction, SetValuedMap, eval_function
from .geometry import ACTIVE_TOL, Polyhedron, PolyhedralUnion, includes
from .marginal import (
    MarginalConfig,
    MarginalProblem,
    QualEntry,
    check_Q2,
    direct_marginal_subdiffs,
    eval_marginal,
    marginal_q_sets,
    solution_map,
)
from .marginal.checks import probe_directions

ACTIVE = 1e-9
KAPPA_GRID = tuple(Fraction(2) ** k for k in range(-5, 6))
KAPPA_LADDER = tuple(Fraction(2) ** k for k in range(0, 11))


class PreconditionError(ValueError):
    def __init__(self, message, entries: dict | None = None):
        super().__init__(message)
        self.entries = entries or {}


@dataclass(frozen=True)
class BilevelProblem:
    """Upper cost ψ, lower cost φ and lower constraints g_i(x, y) ≤ 0."""

    dim_x: int
    dim_y: int
    psi: Expr
    phi: PiecewiseFunction
    g: tuple = ()
    config: MarginalConfig = field(default_factory=MarginalConfig)

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(self.g))
        n = self.dim_x + self.dim_y
        if self.phi.dim != n:
            raise ValueError("lower cost dimension must be dim_x + dim_y")
        for e in (self.psi,) + self.g:
            if max_var(e) > n:
                raise ValueError("expression uses a variable beyond dim_x + dim_y")

    @property
    def dim(self) -> int:
        return self.dim_x + self.dim_y

    @property
    def affine_constraints(self) -> bool:
        return all(affine_form(e, self.dim) is not None for e in self.g)

    def constraint_map(self) -> SetValuedMap:
        """G(x) = {y : g_i(x, y) ≤ 0}; needs affine g_i."""
        rows, rhs = [], []
        for e in self.g:
            form = affine_form(e, self.dim)
            if form is None:
                raise NonAffineError("constraint map is polyhedral only for affine constraints")
            rows.append(form[0])
            rhs.append(-form[1])
        return SetValuedMap(self.dim_x, self.dim_y, PolyhedralUnion.of(self.dim, [Polyhedron(self.dim, rows, rhs, [], [])]))

    def marginal_problem(self, xbar=None, ybar=None, validate=False) -> MarginalProblem:
        xbar = zeros(self.dim_x) if xbar is None else xbar
        ybar = zeros(self.dim_y) if ybar is None else ybar
        return MarginalProblem(self.phi, self.constraint_map(), xbar, ybar, self.config, validate=validate)

    def constraint_values(self, z) -> tuple:
        return tuple(evaluate(e, z) for e in self.g)

    def feasible(self, z, tol=ACTIVE) -> bool:
        return all(float(v) <= tol for v in self.constraint_values(z))


def _mu_function(B: BilevelProblem) -> Callable:
    """x ↦ μ(x): exact for affine constraints, otherwise a grid search over
    y in the configured box restricted to g ≤ 0."""
    if B.affine_constraints:
        P = B.marginal_problem()
        return lambda x: eval_marginal(P, x)
    from .functions.expr import evaluate_batch

    r, k = B.config.y_range, B.config.grid_per_axis[min(B.dim_y, 3) - 1]
    axes = [np.linspace(-r, r, k)] * B.dim_y
    Y = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, B.dim_y)

    def mu(x):
        Z = np.hstack([np.tile(np.array([float(c) for c in x]), (len(Y), 1)), Y])
        ok = np.ones(len(Y), dtype=bool)
        for e in B.g:
            ok &= evaluate_batch(e, Z) <= ACTIVE
        if not ok.any():
            return math.inf
        return float(np.min(B.phi.eval_batch(Z[ok])))

    return mu


# ---------------------------------------------------------------- reformulation and penalty


@dataclass
class Reformulation:
    """min ψ s.t. g ≤ 0 and φ(x, y) − μ(x) ≤ 0; perturbed(ν) gives the
    equality constraint φ − μ + ν = 0 of the perturbed family."""

    problem: BilevelProblem
    objective: Callable
    constraints: tuple
    value_constraint: Callable
    mu: Callable
    mu_samples: dict
    feasible_set_empty: bool

    def perturbed(self, nu) -> Callable:
        return lambda x, y: self.value_constraint(x, y) + to_frac(nu)


def _sample_grid(B: BilevelProblem, r=2, k=5):
    ticks = [Fraction(-r) + Fraction(2 * r * i, k - 1) for i in range(k)]
    return list(itertools.product(ticks, repeat=B.dim))


def reformulate(B: BilevelProblem, sample_x: Sequence = ()) -> Reformulation:
    mu = _mu_function(B)

    def value_constraint(x, y):
        return _sub(eval_function(B.phi, vec(x) + vec(y)), mu(vec(x)))

    grid = _sample_grid(B)
    feasible_any = any(B.feasible(z) for z in grid)
    xs = list(sample_x) or sorted({z[: B.dim_x] for z in grid})[:5]
    samples = {tuple(float(c) for c in x): _num(mu(vec(x))) for x in xs}
    return Reformulation(
        B,
        lambda x, y: evaluate(B.psi, vec(x) + vec(y)),
        B.g,
        value_constraint,
        mu,
        samples,
        not feasible_any,
    )


def _sub(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return float(a) - float(b)
    return a - b


def _num(v):
    return float(v) if isinstance(v, Fraction) else v


@dataclass
class PenalizedProblem:
    problem: BilevelProblem
    kappa: Fraction
    mu: Callable

    def penalty(self, x, y):
        return self.kappa * _sub(eval_function(self.problem.phi, vec(x) + vec(y)), self.mu(vec(x)))

    def objective(self, x, y):
        return evaluate(self.problem.psi, vec(x) + vec(y)) + self.penalty(x, y)

    def feasible(self, x, y) -> bool:
        return self.problem.feasible(vec(x) + vec(y))


def penalize(B: BilevelProblem, kappa) -> PenalizedProblem:
    """ψ + κ(φ − μ) subject to g ≤ 0."""
    kappa = to_frac(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return PenalizedProblem(B, kappa, _mu_function(B))


# ---------------------------------------------------------------- partial calmness


@dataclass(frozen=True)
class CalmnessProbe:
    holds: bool
    kappa: Fraction | None
    samples: int
    witness: dict | None = None
    mode: str = "sampled"


def partial_calmness_probe(B: BilevelProblem, xbar, ybar, kappa_ladder=KAPPA_LADDER, radii=(Fraction(1, 10), Fraction(1, 100), Fraction(1, 1000))) -> CalmnessProbe:
    """Least κ on the ladder with ψ(x, y) − ψ(x̄, ȳ) + κ|ν| ≥ −1e-9 on sampled
    feasible triples (x, y, ν) of the perturbed problem near (x̄, ȳ, 0)."""
    xbar, ybar = vec(xbar), vec(ybar)
    if not B.feasible(xbar + ybar):
        raise ValueError("reference point violates the lower-level constraints")
    mu = _mu_function(B)
    psib = float(evaluate(B.psi, xbar + ybar))
    dx = [zeros(B.dim_x)] + probe_directions(B.dim_x)
    dy = [zeros(B.dim_y)] + probe_directions(B.dim_y)
    P = B.marginal_problem() if B.affine_constraints else None
    triples = []
    for r in radii:
        for d in dx:
            x = add(xbar, tuple(r * c for c in d))
            m = mu(x)
            if m in (math.inf, -math.inf):
                continue
            ys = [add(ybar, tuple(r * c for c in e)) for e in dy]
            if P is not None:
                M = solution_map(P, x)
                ys += [Q.any_point() for Q in M.as_pieces()]
            for y in ys:
                z = x + y
                if not B.feasible(z):
                    continue
                f = eval_function(B.phi, z)
                if isinstance(f, float) and math.isinf(f):
                    continue
                nu = float(m) - float(f)
                if abs(nu) > float(r) * 10:
                    continue
                triples.append((z, float(evaluate(B.psi, z)) - psib, abs(nu)))
    if not triples:
        raise ValueError("no feasible samples near the reference point")
    for k in kappa_ladder:
        bad = [t for t in triples if t[1] + float(k) * t[2] < -1e-9]
        if not bad:
            return CalmnessProbe(True, k, len(triples))
    z, dpsi, nu = min(bad, key=lambda t: t[1] + float(kappa_ladder[-1]) * t[2])
    w = {"point": [float(c) for c in z], "psi_drop": dpsi, "nu": nu, "kappa": float(kappa_ladder[-1])}
    return CalmnessProbe(False, None, len(triples), w)


# ---------------------------------------------------------------- difference functions


@dataclass(frozen=True)
class DifferenceVerdict:
    consistent: bool
    witness: tuple | None
    sub_f1: PolyhedralUnion
    sub_f2: PolyhedralUnion


def difference_rule_check(f1: PiecewiseFunction, f2: PiecewiseFunction, xbar) -> DifferenceVerdict:
    """A local minimizer of f1 − f2 with ∂̂f2(x̄) ≠ ∅ has ∂̂f2(x̄) ⊆ ∂̂f1(x̄).
    A failed inclusion (with its witness) certifies x̄ is not a local minimizer."""
    s2 = regular_subdiff(f2, xbar)
    if s2.is_empty():
        raise ValueError("regular subdifferential of the subtracted function is empty; the test does not apply")
    s1 = regular_subdiff(f1, xbar)
    inc = includes(s1, s2)
    return DifferenceVerdict(inc.holds, None if inc.holds else tuple(inc.witness), s1, s2)


# ---------------------------------------------------------------- constraint qualifications


def active_set(g: Sequence[Expr], z, tol=ACTIVE) -> list:
    return [i for i, e in enumerate(g) if abs(float(evaluate(e, z))) <= tol]


def _as_function(e: Expr, dim: int) -> PiecewiseFunction:
    return PiecewiseFunction.build(dim, [(Polyhedron.whole(dim), e)], check=False)


def limiting_subdiff_expr(e: Expr, z, dim: int) -> PolyhedralUnion:
    """Limiting subdifferential of a pwl or smooth expression at z."""
    f = _as_function(e, dim)
    if f.is_affine:
        return limiting_subdiff(f, z)
    try:
        g = value_and_grad(e, z, dim)[1]
    except KinkError as exc:
        raise NonAffineError(f"expression is neither piecewise affine nor smooth at the point: {exc}") from exc
    return PolyhedralUnion.single(Polyhedron.point(tuple(to_frac(c) for c in g)))


def _positive_combination(subdiffs: Sequence[PolyhedralUnion], dim: int, target, fixed=None, weights_sum_one=False, base=None):
    """Search multipliers t ≥ 0 and w_i ∈ t_i·Q_i (Q_i a piece of the i-th
    set), plus v ∈ base piece when given, with v + Σ w_i = target. Returns
    (t, w) of the first feasible piece selection minimizing Σ t, or None."""
    k = len(subdiffs)
    base_pieces = base.as_pieces() if base is not None else [None]
    choices = [U.as_pieces() for U in subdiffs]
    nv = dim if base is not None else 0
    nvar = nv + k * dim + k
    best = None
    for bp in base_pieces:
        for sel in itertools.product(*choices):
            A, b, E, d = [], [], [], []

            for Qi, Q in enumerate(sel):
                off_w = nv + Qi * dim
                off_t = nv + k * dim + Qi
                for a, bi in zip(Q.A, Q.b):
                    row = [Fraction(0)] * nvar
                    for j in range(dim):
                        row[off_w + j] = a[j]
                    row[off_t] = -bi
                    A.append(row)
                    b.append(Fraction(0))
                for e, di in zip(Q.E, Q.d):
                    row = [Fraction(0)] * nvar
                    for j in range(dim):
                        row[off_w + j] = e[j]
                    row[off_t] = -di
                    E.append(row)
                    d.append(Fraction(0))
                row = [Fraction(0)] * nvar
                row[off_t] = Fraction(-1)
                A.append(row)
                b.append(Fraction(0))
            if bp is not None:
                for a, bi in zip(bp.A, bp.b):
                    A.append(list(a) + [Fraction(0)] * (nvar - nv))
                    b.append(bi)
                for e, di in zip(bp.E, bp.d):
                    E.append(list(e) + [Fraction(0)] * (nvar - nv))
                    d.append(di)
            if target is not None:
                for j in range(dim):
                    row = [Fraction(0)] * nvar
                    if nv:
                        row[j] = Fraction(1)
                    for Qi in range(k):
                        row[nv + Qi * dim + j] = Fraction(1)
                    E.append(row)
                    d.append(to_frac(target[j]))
            if weights_sum_one:
                row = [Fraction(0)] * nvar
                for Qi in range(k):
                    row[nv + k * dim + Qi] = Fraction(1)
                E.append(row)
                d.append(Fraction(1))
            c = [Fraction(0)] * (nv + k * dim) + [Fraction(1)] * k
            res = lp.linprog(c, A, b, E, d, n=nvar)
            if res.ok and (best is None or res.value < best[0]):
                x = res.x
                best = (res.value, tuple(x[nv + k * dim :]), tuple(x[:nv]))
    if best is None:
        return None
    return best[1], best[2]


@dataclass(frozen=True)
class CQVerdict:
    holds: bool
    active: tuple
    witness: tuple | None = None  # multipliers of a nontrivial zero combination
    mode: str = "exact"


def bcq_check(g: Sequence[Expr], xbar, ybar) -> CQVerdict:
    """No nonzero λ ≥ 0 on the active set with 0 ∈ Σ λ_i ∂g_i (limiting)."""
    z = vec(xbar) + vec(ybar)
    dim = len(z)
    I = active_set(g, z)
    if not I:
        return CQVerdict(True, ())
    subs = [limiting_subdiff_expr(g[i], z, dim) for i in I]
    sol = _positive_combination(subs, dim, zeros(dim), weights_sum_one=True)
    if sol is None:
        return CQVerdict(True, tuple(I))
    return CQVerdict(False, tuple(I), tuple(float(t) for t in sol[0]))


def limiting_normals_inequality(g: Sequence[Expr], xbar, ybar) -> PolyhedralUnion:
    """{Σ_{i active} λ_i x_i* : λ ≥ 0, x_i* ∈ ∂g_i}, one cone per selection
    of pieces, generated by the vertices of the selected pieces."""
    z = vec(xbar) + vec(ybar)
    dim = len(z)
    I = active_set(g, z)
    if not I:
        return PolyhedralUnion.single(Polyhedron.point(zeros(dim)))
    subs = [limiting_subdiff_expr(g[i], z, dim).as_pieces() for i in I]
    out = []
    for sel in itertools.product(*subs):
        rays = [p for Q in sel for p in Q.generators.points] + [r for Q in sel for r in Q.generators.rays]
        lines = [l for Q in sel for l in Q.generators.lines]
        out.append(Polyhedron.cone(dim, rays, lines).canonical())
    return PolyhedralUnion.of(dim, out).simplify()


def _gradient(e: Expr, z, dim):
    try:
        return tuple(to_frac(c) for c in value_and_grad(e, z, dim)[1])
    except KinkError as exc:
        raise NonAffineError(f"expression is not differentiable at the point: {exc}") from exc


def mfcq_check(g: Sequence[Expr], xbar, ybar) -> CQVerdict:
    """Positive linear independence of the active gradients."""
    z = vec(xbar) + vec(ybar)
    dim = len(z)
    I = active_set(g, z)
    if not I:
        return CQVerdict(True, ())
    grads = [_gradient(g[i], z, dim) for i in I]
    k = len(I)
    E = [[gr[j] for gr in grads] for j in range(dim)] + [[Fraction(1)] * k]
    d = [Fraction(0)] * dim + [Fraction(1)]
    A = [[Fraction(-1) if j == i else Fraction(0) for j in range(k)] for i in range(k)]
    res = lp.linprog([Fraction(0)] * k, A, [Fraction(0)] * k, E, d, n=k)
    if res.ok:
        return CQVerdict(False, tuple(I), tuple(float(t) for t in res.x))
    return CQVerdict(True, tuple(I))


# ---------------------------------------------------------------- stationarity


@dataclass(frozen=True)
class StationarityCertificate:
    kappa: Fraction
    lam: tuple
    beta: tuple
    ustar: tuple
    residuals: dict
    comp_slack: float
    preconditions: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Infeasible:
    kappas: tuple
    reason: str
    preconditions: dict = field(default_factory=dict, compare=False)


def _mu_subdiff(B: BilevelProblem, xbar, ybar):
    """∂̂μ(x̄) from the marginal module: exact on the affine path, oracle
    verdict otherwise."""
    P = B.marginal_problem(xbar, ybar, validate=True)
    return direct_marginal_subdiffs(P)


def _ustar_in(sub, ustar) -> bool:
    if sub.mode == "exact":
        return sub.regular.contains(vec(ustar), ACTIVE_TOL)
    return _oracle_accepts(sub, ustar)


def _oracle_accepts(sub, ustar) -> bool:
    pts = np.asarray(sub.regular.accepted, dtype=float)
    u = np.array([float(c) for c in ustar])
    if len(pts) == 0:
        return False
    return bool(np.min(np.max(np.abs(pts - u), axis=1)) <= sub.regular.step / 2 + 1e-12)


def _mu_nonempty(sub) -> bool:
    return not sub.regular.is_empty() if sub.mode == "exact" else not sub.regular.empty


def _stationarity_lp(B, z, I, grads, gpsi, gphi, kappa):
    n, m = B.dim_x, B.dim_y
    k = len(I)
    nv = 2 * k  # λ then β
    E, d = [], []
    for j in range(n + m):  # κ Σ(λ − β)∇g = −∇ψ
        row = [kappa * gr[j] for gr in grads] + [-kappa * gr[j] for gr in grads]
        E.append(row)
        d.append(-gpsi[j])
    for j in range(n, n + m):
        E.append([gr[j] for gr in grads] + [Fraction(0)] * k)  # Σλ∇_y g = −κ⁻¹∇_yψ − ∇_yφ
        d.append(-gpsi[j] / kappa - gphi[j])
        E.append([Fraction(0)] * k + [gr[j] for gr in grads])  # Σβ∇_y g = −∇_yφ
        d.append(-gphi[j])
    A = [[Fraction(-1) if c == r else Fraction(0) for c in range(nv)] for r in range(nv)]
    res = lp.linprog([Fraction(1)] * nv, A, [Fraction(0)] * nv, E, d, n=nv)
    if not res.ok:
        return None
    return tuple(res.x[:k]), tuple(res.x[k:])


def _expand(I, vals, p):
    out = [Fraction(0)] * p
    for i, v in zip(I, vals):
        out[i] = v
    return tuple(out)


def _residuals(B, z, lam, beta, ustar, gpsi, phi_sub_point, grads_all, kappa):
    n, m = B.dim_x, B.dim_y
    dim = n + m
    r1 = [to_frac(ustar[j]) if j < n else Fraction(0) for j in range(dim)]
    r2 = list(r1)
    for j in range(dim):
        r1[j] -= phi_sub_point[j] + sum(beta[i] * grads_all[i][j] for i in range(len(beta)))
        r2[j] -= gpsi[j] / kappa + phi_sub_point[j] + sum(lam[i] * grads_all[i][j] for i in range(len(lam)))
    return {"noc1": float(sum(abs(c) for c in r1)), "noc2": float(sum(abs(c) for c in r2))}


def _comp_slack(B, z, lam, beta) -> float:
    vals = B.constraint_values(z)
    s = 0.0
    for l, b_, v in zip(lam, beta, vals):
        s = max(s, abs(float(l * to_frac(v))), abs(float(b_ * to_frac(v))))
    return s


def solve_stationarity_smooth(B: BilevelProblem, xbar, ybar, kappa=None, partial_calm: bool | None = None, force=False):
    """Multipliers (λ, β) of the smooth stationarity system for a fixed κ, or
    for the first κ of the grid 2^-5..2^5 that admits them."""
    xbar, ybar = vec(xbar), vec(ybar)
    z = xbar + ybar
    dim = len(z)
    pre = {}
    try:
        gpsi = _gradient(B.psi, z, dim)
        gphi = _gradient(_single_formula(B.phi, z), z, dim)
        grads_all = [_gradient(e, z, dim) for e in B.g]
        pre["differentiable"] = QualEntry(True, None, None, "exact", "psi, phi and g differentiable")
    except NonAffineError as exc:
        raise PreconditionError(str(exc), {"differentiable": QualEntry(False, None, {"point": [float(c) for c in z]}, "exact", str(exc))})
    mf = mfcq_check(B.g, xbar, ybar)
    pre["mfcq"] = QualEntry(mf.holds, None, None if mf.holds else {"multipliers": list(mf.witness)}, "exact")
    if partial_calm is None:
        probe = partial_calmness_probe(B, xbar, ybar)
        pre["partial_calmness"] = QualEntry(probe.holds, float(probe.kappa) if probe.kappa else None, probe.witness, "sampled")
    else:
        pre["partial_calmness"] = QualEntry(True, None, None, "asserted", "asserted by the caller") if partial_calm else QualEntry(False, None, {"asserted": False}, "asserted")
    sub = _mu_subdiff(B, xbar, ybar)
    nonempty = _mu_nonempty(sub)
    pre["mu_subdiff_nonempty"] = QualEntry(nonempty, None, None if nonempty else {"x": [float(c) for c in xbar]}, sub.mode)
    failed = [k for k, e in pre.items() if e.holds is False]
    if failed and not force:
        raise PreconditionError("preconditions failed: " + ", ".join(failed), pre)
    I = active_set(B.g, z)
    grads = [grads_all[i] for i in I]
    kappas = (to_frac(kappa),) if kappa is not None else KAPPA_GRID

    def attempt(k):
        return k, _stationarity_lp(B, z, I, grads, gpsi, gphi, k)

    for k, sol in pmap(attempt, kappas):
        if sol is None:
            continue
        lam, beta = _expand(I, sol[0], len(B.g)), _expand(I, sol[1], len(B.g))
        ustar = tuple(gphi[j] + sum(beta[i] * grads_all[i][j] for i in range(len(beta))) for j in range(B.dim_x))
        res = _residuals(B, z, lam, beta, ustar, gpsi, gphi, grads_all, k)
        in_mu = _ustar_in(sub, ustar)
        pre2 = dict(pre, ustar_in_mu_subdiff=QualEntry(in_mu, None, None if in_mu else {"ustar": [float(c) for c in ustar]}, sub.mode))
        return StationarityCertificate(k, lam, beta, ustar, res, _comp_slack(B, z, lam, beta), pre2)
    return Infeasible(tuple(kappas), "stationarity system infeasible for every kappa tried", pre)


def _single_formula(f: PiecewiseFunction, z):
    """The formula of the piece containing z in its interior (for gradients)."""
    ps = [p for p in f.pieces if p.domain.contains(z, ACTIVE_TOL)]
    if not ps:
        raise NonAffineError("lower cost is not finite at the point")
    if len(ps) > 1:
        grads = {tuple(value_and_grad(p.formula, z, f.dim)[1]) for p in ps}
        if len(grads) > 1:
            raise NonAffineError("lower cost has a kink at the point")
    return ps[0].formula


def _phi_limiting(B, z) -> PolyhedralUnion:
    if B.phi.is_affine:
        return limiting_subdiff(B.phi, z)
    return PolyhedralUnion.single(Polyhedron.point(_gradient(_single_formula(B.phi, z), z, B.dim)))


def check_noc_nonsmooth(B: BilevelProblem, xbar, ybar, kappa, ustar=None, force=False):
    """Multipliers for (u*, 0) ∈ ∂φ + Σβ_i∂g_i and (u*, 0) ∈ κ⁻¹∇ψ + ∂φ + Σλ_i∂g_i
    with λ, β ≥ 0 supported on the active set. With ustar=None every vertex
    of ∂̂μ(x̄) is tried and a list of results is returned."""
    xbar, ybar = vec(xbar), vec(ybar)
    z = xbar + ybar
    dim = len(z)
    kappa = to_frac(kappa)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    pre = {}
    gpsi = _gradient(B.psi, z, dim)
    dphi = _phi_limiting(B, z)
    bcq = bcq_check(B.g, xbar, ybar)
    pre["bcq"] = QualEntry(bcq.holds, None, None if bcq.holds else {"multipliers": list(bcq.witness)}, "exact")
    try:
        P = B.marginal_problem(xbar, ybar, validate=True)
        C, D, w = marginal_q_sets(P)
        pre["assumption_A"] = check_Q2(C, D, w, limiting=True)
    except NonAffineError as exc:
        pre["assumption_A"] = QualEntry(False, None, {"reason": str(exc)}, "not-applicable", "needs piecewise-affine lower cost and affine constraints")
    sub = _mu_subdiff(B, xbar, ybar)
    if ustar is None:
        if sub.mode != "exact":
            raise ValueError("vertex enumeration of the marginal subdifferential needs the exact path; pass ustar")
        cands = [p for Q in sub.regular.as_pieces() for p in Q.generators.points]
        if not cands:
            raise PreconditionError("regular subdifferential of the marginal function is empty", pre)
        return [check_noc_nonsmooth(B, xbar, ybar, kappa, u, force) for u in cands]
    ustar = vec(ustar)
    ok = _ustar_in(sub, ustar)
    pre["ustar_in_mu_subdiff"] = QualEntry(ok, None, None if ok else {"ustar": [float(c) for c in ustar]}, sub.mode)
    failed = [k for k, e in pre.items() if e.holds is not True]
    if failed and not force:
        raise PreconditionError("preconditions failed: " + ", ".join(failed), pre)
    I = active_set(B.g, z)
    subs = [limiting_subdiff_expr(B.g[i], z, dim) for i in I]
    target1 = tuple(ustar) + zeros(B.dim_y)
    target2 = tuple(t - gp / kappa for t, gp in zip(target1, gpsi))
    s1 = _positive_combination(subs, dim, target1, base=dphi)
    s2 = _positive_combination(subs, dim, target2, base=dphi)
    if s1 is None or s2 is None:
        which = [name for name, s in (("noc1", s1), ("noc2", s2)) if s is None]
        return Infeasible((kappa,), "no multipliers for " + ", ".join(which), pre)
    beta = _expand(I, s1[0], len(B.g))
    lam = _expand(I, s2[0], len(B.g))
    residuals = {"noc1": 0.0, "noc2": 0.0}
    return StationarityCertificate(kappa, lam, beta, tuple(ustar), residuals, _comp_slack(B, z, lam, beta), pre)
