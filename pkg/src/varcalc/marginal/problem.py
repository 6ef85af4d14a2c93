"""Marginal functions μ(x) = inf{φ(x, y) : y ∈ G(x)} and argmin maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.linalg import null_space

from .. import lp
from .._rational import to_frac, vec
from ..functions.piecewise import PiecewiseFunction, SetValuedMap, eval_function, slice_map
from ..geometry import ACTIVE_TOL, Polyhedron, PolyhedralUnion

TOL_ARGMIN = 1e-7


class UnboundedMarginalError(ValueError):
    """μ(x̄) = −∞; the subdifferential theory does not apply."""


@dataclass(frozen=True)
class MarginalConfig:
    y_range: float = 3.0
    grid_per_axis: tuple = (401, 61, 21)  # for parameter dimension 1, 2, ≥3
    refine_iters: int = 80
    tol_argmin: float = TOL_ARGMIN


@dataclass(frozen=True)
class MarginalValue:
    value: object  # Fraction, float, math.inf or -math.inf
    minimizers: PolyhedralUnion
    ray: tuple | None = None  # direction in y along which φ decreases without bound
    exact: bool = True


@dataclass(frozen=True)
class MarginalProblem:
    """Cost φ on X×Y, constraint map G and a reference pair (x̄, ȳ)."""

    phi: PiecewiseFunction
    G: SetValuedMap
    xbar: tuple
    ybar: tuple
    config: MarginalConfig = field(default_factory=MarginalConfig)
    validate: bool = True

    def __post_init__(self):
        object.__setattr__(self, "xbar", vec(self.xbar))
        object.__setattr__(self, "ybar", vec(self.ybar))
        if self.phi.dim != self.G.dim_x + self.G.dim_y:
            raise ValueError("cost dimension must equal dim_x + dim_y of the constraint map")
        if len(self.xbar) != self.G.dim_x or len(self.ybar) != self.G.dim_y:
            raise ValueError("reference point has the wrong dimension")
        if self.validate:
            self.check_reference()

    @property
    def n(self) -> int:
        return self.G.dim_x

    @property
    def m(self) -> int:
        return self.G.dim_y

    @property
    def zbar(self) -> tuple:
        return self.xbar + self.ybar

    @property
    def exact(self) -> bool:
        return self.phi.is_affine

    def check_reference(self):
        if not slice_map(self.G, self.xbar).contains(self.ybar, ACTIVE_TOL):
            raise ValueError("ybar is not in G(xbar)")
        v = eval_function(self.phi, self.zbar)
        if isinstance(v, float) and math.isinf(v):
            raise ValueError("phi is not finite at (xbar, ybar)")
        mu = eval_marginal(self, self.xbar)
        if mu == -math.inf:
            raise UnboundedMarginalError("marginal value is -inf at xbar")
        if float(v) - float(mu) > self.config.tol_argmin:
            raise ValueError(f"ybar is not a minimizer: phi = {v} but mu(xbar) = {mu}")

    @cached_property
    def phi_value(self):
        return to_frac(eval_function(self.phi, self.zbar))

    @cached_property
    def mu_value(self):
        return eval_marginal(self, self.xbar)

    @cached_property
    def epigraph_of_marginal(self) -> PolyhedralUnion:
        return marginal_epigraph(self)


# ---------------------------------------------------------------- exact (affine) path


def _fixed_x_piece(Q: Polyhedron, x, n) -> Polyhedron:
    return Q.fix({i: v for i, v in enumerate(x)})


def _exact_eval(P: MarginalProblem, x) -> MarginalValue:
    n, m = P.n, P.m
    best = math.inf
    faces = []
    for Q in P.G.graph.as_pieces():
        Qx = _fixed_x_piece(Q, x, n)
        if Qx.is_empty():
            continue
        for piece in P.phi.pieces:
            Dx = _fixed_x_piece(piece.domain, x, n)
            S = Qx.intersect(Dx)
            a, c = piece.affine
            ay = a[n:]
            const = sum((ai * xi for ai, xi in zip(a[:n], x)), Fraction(0)) + c
            res = lp.linprog(ay, S.A, S.b, S.E, S.d, n=m)
            if res.status == lp.INFEASIBLE:
                continue
            if res.status == lp.UNBOUNDED:
                return MarginalValue(-math.inf, PolyhedralUnion.empty(m), res.ray)
            val = res.value + const
            if val < best:
                best = val
                faces = []
            if val == best:
                faces.append(S.intersect(Polyhedron(m, [], [], [ay], [res.value])))
    if best == math.inf:
        return MarginalValue(math.inf, PolyhedralUnion.empty(m))
    return MarginalValue(best, PolyhedralUnion.of(m, [F.canonical() for F in faces]).simplify())


def marginal_epigraph(P: MarginalProblem) -> PolyhedralUnion:
    """epi μ as a union of projections of {(x, y, α) : (x, y) ∈ gph G ∩ dom φ_j, α ≥ φ_j}.
    Exact for affine pieces (LP infima are attained, so projections are closed)."""
    if not P.exact:
        raise ValueError("the epigraph of the marginal function is exact only for affine costs")
    n, m = P.n, P.m
    out = []
    for Q in P.G.graph.as_pieces():
        for piece in P.phi.pieces:
            S = Q.intersect(piece.domain)
            if S.is_empty():
                continue
            a, c = piece.affine
            A = [tuple(r) + (Fraction(0),) for r in S.A] + [tuple(a) + (Fraction(-1),)]
            b = list(S.b) + [-c]
            E = [tuple(r) + (Fraction(0),) for r in S.E]
            lifted = Polyhedron(n + m + 1, A, b, E, S.d)
            keep = list(range(n)) + [n + m]
            out.append(lifted.project(keep, method="generators").canonical())
    return PolyhedralUnion.of(n + 1, out).simplify()


class _EpigraphEvaluator:
    """Vectorized μ from the H-form of each projected epigraph piece."""

    def __init__(self, E: PolyhedralUnion, n: int):
        self.n = n
        self.parts = []
        for K in E.as_pieces():
            dom_A, dom_b, lo_A, lo_b = [], [], [], []
            for a, bi in zip(K.A, K.b):
                t = float(a[n])
                ax = [float(v) for v in a[:n]]
                if t < 0:
                    lo_A.append([v / -t for v in ax])
                    lo_b.append(float(bi) / t)
                elif t == 0:
                    dom_A.append(ax)
                    dom_b.append(float(bi))
                else:
                    raise ValueError("epigraph piece bounded above in the value coordinate")
            # (0, ..., 0, 1) is a recession direction, so equalities never involve α
            eq_A = [[float(v) for v in e[:n]] for e in K.E]
            eq_d = [float(di) for di in K.d]
            self.parts.append(
                (
                    np.array(dom_A).reshape(len(dom_A), n),
                    np.array(dom_b),
                    np.array(lo_A).reshape(len(lo_A), n),
                    np.array(lo_b),
                    np.array(eq_A).reshape(len(eq_A), n),
                    np.array(eq_d),
                )
            )

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), np.inf)
        for dA, db, lA, lb, eA, ed in self.parts:
            ok = np.ones(len(X), dtype=bool)
            if len(dA):
                ok &= np.all(X @ dA.T <= db + 1e-9, axis=1)
            if len(eA):
                ok &= np.all(np.abs(X @ eA.T - ed) <= 1e-9, axis=1)
            if len(lA):
                val = np.max(X @ lA.T + lb, axis=1)
            else:
                val = np.full(len(X), -np.inf)
            out = np.where(ok, np.minimum(out, val), out)
        return out


# ---------------------------------------------------------------- numeric path


def _piece_param(Q: Polyhedron, n: int, m: int):
    A = np.array([[float(v) for v in r] for r in Q.A]).reshape(len(Q.A), n + m)
    b = np.array([float(v) for v in Q.b])
    E = np.array([[float(v) for v in r] for r in Q.E]).reshape(len(Q.E), n + m)
    d = np.array([float(v) for v in Q.d])
    Ey = E[:, n:]
    if len(E):
        pinv = np.linalg.pinv(Ey)
        N = null_space(Ey) if Ey.size else np.eye(m)
    else:
        pinv = np.zeros((m, 0))
        N = np.eye(m)
    return A, b, E, d, pinv, N


def _piece_setup(P: MarginalProblem, Q: Polyhedron, X: np.ndarray):
    n, m = P.n, P.m
    A, b, E, d, pinv, N = _piece_param(Q, n, m)
    k = len(X)
    if len(E):
        y0 = (d[None, :] - X @ E[:, :n].T) @ pinv.T
        consistent = np.all(np.abs(X @ E[:, :n].T + y0 @ E[:, n:].T - d) <= 1e-9, axis=1)
    else:
        y0 = np.zeros((k, m))
        consistent = np.ones(k, dtype=bool)
    centre = np.array([float(v) for v in P.ybar])
    z0 = (centre - y0) @ N if N.shape[1] else np.zeros((k, 0))

    def value(Y, idx):
        Z = np.hstack([X[idx], Y])
        v = P.phi.eval_batch(Z)
        if len(A):
            v = np.where(np.all(Z @ A.T <= b + 1e-10, axis=1), v, np.inf)
        return np.where(consistent[idx], v, np.inf)

    return y0, N, z0, value


def _grid(P: MarginalProblem, r: int):
    per = P.config.grid_per_axis[min(r, 3) - 1]
    axis = np.linspace(-P.config.y_range, P.config.y_range, per)
    return np.array(np.meshgrid(*([axis] * r), indexing="ij")).reshape(r, -1).T, 2 * P.config.y_range / (per - 1)


def _pattern_search(value, y0, N, z, v, h, idx, iters):
    r = N.shape[1]
    h = np.full(len(z), h)
    for _ in range(iters):
        moved = np.zeros(len(z), dtype=bool)
        for c in range(r):
            for s in (1.0, -1.0):
                cand = z.copy()
                cand[:, c] += s * h
                vc = value(y0 + cand @ N.T, idx)
                imp = vc < v
                z[imp] = cand[imp]
                v[imp] = vc[imp]
                moved |= imp
        h = np.where(moved, h, h / 2)
    return z, v


def _numeric_eval(P: MarginalProblem, X: np.ndarray):
    """Grid search over each graph piece's y-slice (parametrized through the
    equality constraints) followed by a vectorized pattern search."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = len(X)
    best = np.full(k, np.inf)
    best_y = np.zeros((k, P.m))
    for Q in P.G.graph.as_pieces():
        y0, N, z0, value = _piece_setup(P, Q, X)
        r = N.shape[1]
        idx_all = np.arange(k)
        if r == 0:
            v, Y = value(y0, idx_all), y0
        else:
            Zg, h = _grid(P, r)
            cur_z = np.zeros((k, r))
            cur_v = np.full(k, np.inf)
            step = max(1, 200000 // len(Zg))
            for lo in range(0, k, step):
                hi = min(k, lo + step)
                idx = np.repeat(np.arange(lo, hi), len(Zg))
                Zs = np.tile(Zg, (hi - lo, 1)) + z0[idx]
                vv = value(y0[idx] + Zs @ N.T, idx).reshape(hi - lo, len(Zg))
                j = np.argmin(vv, axis=1)
                cur_v[lo:hi] = vv[np.arange(hi - lo), j]
                cur_z[lo:hi] = Zg[j] + z0[lo:hi]
            cur_z, v = _pattern_search(value, y0, N, cur_z, cur_v, h, idx_all, P.config.refine_iters)
            Y = y0 + cur_z @ N.T
        better = v < best
        best = np.where(better, v, best)
        best_y[better] = Y[better]
    return best, best_y


def _numeric_minimizers(P: MarginalProblem, x) -> tuple:
    """All grid local minima, refined, that reach the minimum within tol_argmin."""
    X = np.array([[float(v) for v in x]])
    val = _numeric_eval(P, X)[0][0]
    if not np.isfinite(val):
        return val, []
    found = []
    for Q in P.G.graph.as_pieces():
        y0, N, z0, value = _piece_setup(P, Q, X)
        r = N.shape[1]
        if r == 0:
            if value(y0, np.array([0]))[0] <= val + P.config.tol_argmin:
                found.append(y0[0])
            continue
        Zg, h = _grid(P, r)
        Zs = Zg + z0[0]
        vv = value(y0[0] + Zs @ N.T, np.zeros(len(Zs), dtype=int))
        fin = np.isfinite(vv)
        if not fin.any():
            continue
        order = np.argsort(vv)
        starts = [i for i in order[:200] if fin[i] and vv[i] <= val + max(1e-2, abs(val) * 1e-2)]
        if not starts:
            continue
        z = Zs[starts].copy()
        v = vv[starts].copy()
        idx = np.zeros(len(z), dtype=int)
        z, v = _pattern_search(value, np.repeat(y0, len(z), axis=0), N, z, v, h, idx, P.config.refine_iters)
        for zi, vi in zip(z, v):
            if vi <= val + P.config.tol_argmin:
                found.append(y0[0] + zi @ N.T)
    uniq = []
    for p in found:
        if all(np.max(np.abs(p - q)) > 1e-4 for q in uniq):
            uniq.append(p)
    uniq.sort(key=lambda p: tuple(p))
    return val, uniq


# ---------------------------------------------------------------- public API


def eval_marginal_detail(P: MarginalProblem, x) -> MarginalValue:
    if len(x) != P.n:
        raise ValueError("dimension mismatch")
    if P.exact:
        return _exact_eval(P, vec(x))
    val, pts = _numeric_minimizers(P, x)
    mins = PolyhedralUnion.of(P.m, [Polyhedron.point(tuple(float(c) for c in p)) for p in pts])
    return MarginalValue(float(val), mins, None, exact=False)


def eval_marginal(P: MarginalProblem, x):
    """μ(x): exact LP per affine piece, otherwise grid search with local
    refinement. +∞ on an empty slice, −∞ when unbounded below."""
    return eval_marginal_detail(P, x).value


def solution_map(P: MarginalProblem, x) -> PolyhedralUnion:
    """M(x): exact optimal faces on the affine path, otherwise the refined
    minimizers found within tol_argmin, as singleton pieces."""
    return eval_marginal_detail(P, x).minimizers


def marginal_callable(P: MarginalProblem):
    """Vectorized μ for the oracles: rows of X ↦ μ(x)."""
    if P.exact:
        return _EpigraphEvaluator(P.epigraph_of_marginal, P.n)

    def mu(X):
        return _numeric_eval(P, X)[0]

    return mu


def localized_marginal(P: MarginalProblem, x, eps) -> object:
    """inf{φ(x, y) : y ∈ G(x), ‖y − ȳ‖₁ ≤ ε}."""
    from ..geometry import NormChoice

    ball = NormChoice.L1.unit_ball(P.m).scale(eps).translate(P.ybar)
    whole_x = Polyhedron.whole(P.n)
    G2 = SetValuedMap(
        P.n,
        P.m,
        PolyhedralUnion.of(P.n + P.m, [Q.intersect(whole_x.product(ball)) for Q in P.G.graph.as_pieces()]),
    )
    P2 = MarginalProblem(P.phi, G2, P.xbar, P.ybar, P.config, validate=False)
    return eval_marginal(P2, x)
