"""Brute-force approximations of the ε–δ definitions.

Every construction is tested directly from its defining inequality on a
finite dual grid, with primal points drawn from a scrambled Sobol sequence
(fixed seed, prefix-stable) plus points along the tangent directions of the
domain pieces through the base point. "For all ε there is δ" is discretized
as "for every ε on a ladder, some δ on a ladder". Acceptance is evidence;
rejection is certified by a concrete primal witness.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from ._parallel import pmap
from .functions.piecewise import PiecewiseFunction, SetValuedMap, eval_function
from .geometry import ACTIVE_TOL, Polyhedron, PolyhedralUnion, as_union

CHUNK = 2048


@dataclass(frozen=True)
class OracleConfig:
    eps_ladder: tuple = (1e-1, 1e-2, 1e-3)
    delta_ladder: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    primal_samples: int = 2000
    dual_range: float = 5.0
    dual_step: float = 0.25
    tol: float = 1e-6
    seed: int = 20240501

    def __post_init__(self):
        for name in ("eps_ladder", "delta_ladder"):
            lad = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, lad)
            if not lad or any(a <= b for a, b in zip(lad, lad[1:])) or lad[-1] <= 0:
                raise ValueError(f"{name} must be positive and strictly decreasing")
        if self.dual_step <= 0:
            raise ValueError("dual_step must be positive")
        if self.dual_range < 0:
            raise ValueError("dual_range must be nonnegative")
        if self.primal_samples < 100:
            raise ValueError("primal_samples must be at least 100")

    def grid(self, dim: int) -> np.ndarray:
        k = int(round(self.dual_range / self.dual_step))
        axis = np.arange(-k, k + 1) * self.dual_step
        if dim == 0:
            return np.zeros((1, 0))
        return np.array(list(itertools.product(axis, repeat=dim)), dtype=float)


@dataclass(frozen=True)
class Witness:
    point: tuple
    eps: float
    delta: float
    excess: float  # amount by which the inequality is violated


@dataclass
class OracleVerdict:
    accepted: np.ndarray
    rejected: list
    mode: str
    dim: int
    step: float
    rays: dict = field(default_factory=dict)

    def accepted_set(self) -> set:
        return {_key(p) for p in self.accepted}

    def is_accepted(self, p) -> bool:
        return _key(p) in self.accepted_set()

    @property
    def empty(self) -> bool:
        return len(self.accepted) == 0

    def recession_directions(self) -> list:
        return sorted(d for d, ok in self.rays.items() if ok)

    def negated(self) -> "OracleVerdict":
        return OracleVerdict(
            -self.accepted if len(self.accepted) else self.accepted,
            [(tuple(-np.asarray(p)), w) for p, w in self.rejected],
            self.mode,
            self.dim,
            self.step,
            {tuple(-c for c in d): ok for d, ok in self.rays.items()},
        )


def _key(p) -> tuple:
    return tuple(round(float(v), 9) + 0.0 for v in p)


# ---------------------------------------------------------------- sampling


def _sobol(dim: int, count: int, seed: int) -> np.ndarray:
    if dim == 0:
        return np.zeros((count, 0))
    eng = qmc.Sobol(d=dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return eng.random(count)


def _cone_directions(cones: Sequence[Polyhedron], dim: int, count: int, seed: int) -> np.ndarray:
    """Unit (sup-norm) directions in the given cones: every generator alone
    plus Sobol-weighted combinations."""
    out = []
    for k, T in enumerate(cones):
        g = T.generators
        gens = [np.array([float(c) for c in r]) for r in g.rays]
        gens += [s * np.array([float(c) for c in l]) for l in g.lines for s in (1.0, -1.0)]
        if not gens:
            continue
        out.extend(gens)
        W = _sobol(len(gens), count, seed + 7919 * (k + 1))
        out.extend(W @ np.array(gens))
    if not out:
        return np.zeros((0, dim))
    D = np.array(out)
    nrm = np.max(np.abs(D), axis=1)
    D = D[nrm > 1e-12] / nrm[nrm > 1e-12, None]
    return D


@dataclass
class _Samples:
    base: np.ndarray  # unit box points, shape (m, n)
    directions: np.ndarray  # unit directions from tangent cones


def _make_samples(dim: int, cfg: OracleConfig, cones: Sequence[Polyhedron]) -> _Samples:
    base = 2.0 * _sobol(dim, cfg.primal_samples, cfg.seed) - 1.0
    dirs = _cone_directions(cones, dim, max(50, cfg.primal_samples // 8), cfg.seed)
    return _Samples(base, dirs)


def _points(xbar: np.ndarray, s: _Samples, delta: float) -> np.ndarray:
    pts = [xbar + delta * s.base]
    if len(s.directions):
        radii = np.array([1.0, 0.5, 0.1, 0.01])
        pts.append(xbar + delta * (radii[:, None, None] * s.directions[None, :, :]).reshape(-1, len(xbar)))
        # points along directions at quasi-random radii
        t = (np.arange(len(s.directions)) * 0.6180339887498949) % 1.0
        pts.append(xbar + delta * (t[:, None] * 0.98 + 0.02) * s.directions)
    return np.vstack(pts)


# ---------------------------------------------------------------- quantifier engine


def _quantifier_test(grid: np.ndarray, per_delta, cfg: OracleConfig):
    """per_delta(δ) -> (D, lhs, scale): the inequality to hold is
    lhs_j − ⟨x*, D_j⟩ + ε·scale_j ≥ −tol for every sample j.

    Returns (accepted mask, witnesses by grid index)."""
    data = [per_delta(d) for d in cfg.delta_ladder]

    def run(chunk_idx):
        lo, hi = chunk_idx
        Z = grid[lo:hi]
        k = len(Z)
        some = np.zeros((len(cfg.eps_ladder), k), dtype=bool)
        worst = [None] * k
        for di, (D, lhs, scl) in enumerate(data):
            if len(D) == 0:
                some[:] = True
                continue
            base = lhs[None, :] - Z @ D.T
            for ei, eps in enumerate(cfg.eps_ladder):
                S = base + eps * scl[None, :]
                jmin = np.argmin(S, axis=1)
                vmin = S[np.arange(k), jmin]
                good = vmin >= -cfg.tol
                some[ei] |= good
                if di == len(data) - 1:
                    for r in np.nonzero(~some[ei])[0]:
                        if worst[r] is None:
                            worst[r] = (ei, di, int(jmin[r]), float(-vmin[r]))
        acc = np.all(some, axis=0)
        return acc, worst

    chunks = [(i, min(i + CHUNK, len(grid))) for i in range(0, len(grid), CHUNK)]
    results = pmap(run, chunks)
    accepted = np.concatenate([r[0] for r in results]) if results else np.zeros(0, dtype=bool)
    worst = [w for r in results for w in r[1]]
    return accepted, worst, data


def _verdict(grid, accepted, worst, data, cfg, mode, xbar_full, to_point) -> OracleVerdict:
    rejected = []
    for i in np.nonzero(~accepted)[0]:
        ei, di, j, excess = worst[i]
        D = data[di][0]
        rejected.append(
            (tuple(float(c) for c in grid[i]), Witness(tuple(float(c) for c in to_point(xbar_full + D[j])), cfg.eps_ladder[ei], cfg.delta_ladder[di], excess))
        )
    return OracleVerdict(grid[accepted], rejected, mode, grid.shape[1], cfg.dual_step)


def _cones_of(U, xbar) -> list:
    if U is None:
        return []
    U = as_union(U)
    if U.tag == "ALL":
        return []
    xb = tuple(float(v) for v in xbar)
    return [P.tangent_cone(xbar) for P in U.pieces if P.contains(xb, ACTIVE_TOL)]


def _values(f, X: np.ndarray) -> np.ndarray:
    if isinstance(f, PiecewiseFunction):
        return f.eval_batch(X)
    v = np.asarray(f(X), dtype=float)
    return v.reshape(len(X))


def _fbar(f, xbar) -> float:
    if isinstance(f, PiecewiseFunction):
        return float(eval_function(f, xbar))
    return float(_values(f, np.array([[float(v) for v in xbar]]))[0])


def _domain_hint(f, domain):
    if domain is not None:
        return domain
    if isinstance(f, PiecewiseFunction):
        return f.domain()
    return None


# ---------------------------------------------------------------- public operations


def oracle_regular_subdiff(f, xbar, cfg: OracleConfig = OracleConfig(), *, grid=None, domain=None, sign: float = 1.0) -> OracleVerdict:
    """Dual points x* passing f(x) − f(x̄) − ⟨x*, x − x̄⟩ ≥ −ε‖x − x̄‖₁ − tol.

    f is a PiecewiseFunction or a vectorized callable (rows → values, +inf
    outside the domain). With sign = −1 the test runs on −f, where +∞ becomes −∞.
    """
    xb = np.array([float(v) for v in xbar])
    fb = _fbar(f, xbar)
    if not math.isfinite(fb):
        raise ValueError("function value at the base point is not finite")
    n = len(xb)
    grid = cfg.grid(n) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    samples = _make_samples(n, cfg, _cones_of(_domain_hint(f, domain), xbar))

    def per_delta(delta):
        X = _points(xb, samples, delta)
        v = _values(f, X)
        if sign < 0:
            v = np.where(np.isposinf(v), -np.inf, -v)
            base = -fb
        else:
            base = fb
        keep = ~np.isposinf(v)
        X, v = X[keep], v[keep]
        D = X - xb
        lhs = np.where(np.isneginf(v), -1e300, v - base)
        return D, lhs, np.sum(np.abs(D), axis=1)

    acc, worst, data = _quantifier_test(grid, per_delta, cfg)
    mode = "regular" if sign > 0 else "regular of the negation"
    return _verdict(grid, acc, worst, data, cfg, mode, xb, lambda p: p)


def oracle_upper_regular_subdiff(f, xbar, cfg: OracleConfig = OracleConfig(), *, grid=None, domain=None) -> OracleVerdict:
    """−(regular subdifferential of −f); the test is run on the negated grid so
    that accepted points line up with the requested grid."""
    n = len(xbar)
    g = cfg.grid(n) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    v = oracle_regular_subdiff(f, xbar, cfg, grid=-g, domain=domain, sign=-1.0).negated()
    v.mode = "upper regular (negation of the regular test on −f)"
    return v


def oracle_singular_regular_subdiff(f, xbar, cfg: OracleConfig = OracleConfig(), *, grid=None, domain=None) -> OracleVerdict:
    """x* with ⟨x*, x − x̄⟩ ≤ ε(‖x − x̄‖₁ + |β − f(x̄)|) + tol for (x, β) ∈ epi f
    near (x̄, f(x̄)). For each sampled x the least favourable admissible β is
    used: β = max(f(x), f(x̄)), admissible when f(x) ≤ f(x̄) + δ."""
    xb = np.array([float(v) for v in xbar])
    fb = _fbar(f, xbar)
    if not math.isfinite(fb):
        raise ValueError("function value at the base point is not finite")
    n = len(xb)
    grid = cfg.grid(n) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    samples = _make_samples(n, cfg, _cones_of(_domain_hint(f, domain), xbar))

    def per_delta(delta):
        X = _points(xb, samples, delta)
        v = _values(f, X)
        keep = np.isfinite(v) & (v <= fb + delta)
        X, v = X[keep], v[keep]
        D = X - xb
        gap = np.maximum(v - fb, 0.0)
        # inequality ⟨x*,D⟩ ≤ ε(r + gap) + tol, i.e. 0 − ⟨x*,D⟩ + ε(r + gap) ≥ −tol
        return D, np.zeros(len(D)), np.sum(np.abs(D), axis=1) + gap

    acc, worst, data = _quantifier_test(grid, per_delta, cfg)
    return _verdict(grid, acc, worst, data, cfg, "singular regular", xb, lambda p: p)


def oracle_regular_normal_cone(U, xbar, cfg: OracleConfig = OracleConfig(), *, grid=None) -> OracleVerdict:
    """x* with ⟨x*, x − x̄⟩ ≤ ε‖x − x̄‖₁ + tol for sampled x ∈ U near x̄."""
    U = as_union(U)
    if not U.contains(xbar, ACTIVE_TOL):
        raise ValueError("base point is not in the set")
    xb = np.array([float(v) for v in xbar])
    n = len(xb)
    grid = cfg.grid(n) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    samples = _make_samples(n, cfg, _cones_of(U, xbar))
    member = _membership(U)

    def per_delta(delta):
        X = _points(xb, samples, delta)
        X = X[member(X)]
        D = X - xb
        return D, np.zeros(len(D)), np.sum(np.abs(D), axis=1)

    acc, worst, data = _quantifier_test(grid, per_delta, cfg)
    return _verdict(grid, acc, worst, data, cfg, "regular normal cone", xb, lambda p: p)


def _membership(U: PolyhedralUnion, tol: float = 1e-9):
    if U.tag == "ALL":
        return lambda X: np.ones(len(X), dtype=bool)
    mats = []
    for P in U.pieces:
        A = np.array([[float(c) for c in r] for r in P.A]).reshape(len(P.A), U.dim)
        b = np.array([float(c) for c in P.b])
        E = np.array([[float(c) for c in r] for r in P.E]).reshape(len(P.E), U.dim)
        d = np.array([float(c) for c in P.d])
        mats.append((A, b, E, d))

    def member(X):
        out = np.zeros(len(X), dtype=bool)
        for A, b, E, d in mats:
            ok = np.ones(len(X), dtype=bool)
            if len(A):
                ok &= np.all(X @ A.T <= b + tol, axis=1)
            if len(E):
                ok &= np.all(np.abs(X @ E.T - d) <= tol, axis=1)
            out |= ok
        return out

    return member


def oracle_coderivative(G: SetValuedMap, xbar, ybar, ystar, cfg: OracleConfig = OracleConfig(), *, grid=None) -> OracleVerdict:
    """x* such that (x*, −y*) passes the normal-cone test on gph G at (x̄, ȳ)."""
    base = tuple(xbar) + tuple(ybar)
    if not G.graph.contains(base, ACTIVE_TOL):
        raise ValueError("point is not on the graph")
    n = G.dim_x
    g = cfg.grid(n) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    ys = -np.array([float(v) for v in ystar])
    full = np.hstack([g, np.tile(ys, (len(g), 1))])
    v = oracle_regular_normal_cone(G.graph, base, cfg, grid=full)
    v.accepted = v.accepted[:, :n]
    v.rejected = [(p[:n], w) for p, w in v.rejected]
    v.dim = n
    v.mode = "regular coderivative"
    return v


# ---------------------------------------------------------------- ray probing and consistency


def probe_rays(op: Callable, verdict: OracleVerdict, radii=(5.0, 50.0, 500.0)) -> dict:
    """Estimate recession directions of an unbounded accepted set: from a base
    accepted point, test base + R·d for sign directions d and each radius R.
    op(grid) must return an OracleVerdict for an explicit grid."""
    n = verdict.dim
    if verdict.empty or n == 0:
        return {}
    base = np.mean(verdict.accepted, axis=0)
    base = np.round(base / verdict.step) * verdict.step
    dirs = [d for d in itertools.product((-1, 0, 1), repeat=n) if any(d)]
    pts = np.array([base + r * np.array(d, dtype=float) for d in dirs for r in radii])
    v = op(pts)
    acc = v.accepted_set()
    out = {}
    for i, d in enumerate(dirs):
        out[d] = all(_key(pts[i * len(radii) + j]) in acc for j in range(len(radii)))
    verdict.rays = out
    return out


@dataclass(frozen=True)
class Consistency:
    ok: bool
    grid_points: int
    inside_rejected: list  # grid points inside the exact set but rejected
    outside_accepted: list  # accepted grid points farther than one step from the exact set

    def __bool__(self):
        return self.ok


def two_sided_check(verdict: OracleVerdict, exact, grid: np.ndarray | None = None, tol: float = 1e-9) -> Consistency:
    """Every grid point of the exact set must be accepted and every rejected
    point must lie outside it. Accepted points more than one grid step away
    from the exact set are listed as well (they indicate a too-coarse ladder)."""
    from .geometry import distance, NormChoice

    exact = as_union(exact)
    pts = [np.asarray(p) for p in verdict.accepted] + [np.asarray(p) for p, _ in verdict.rejected]
    inside_rejected = []
    for p, _ in verdict.rejected:
        if exact.contains(tuple(float(v) for v in p), tol):
            inside_rejected.append(tuple(p))
    outside_accepted = []
    for p in verdict.accepted:
        x = tuple(float(v) for v in p)
        if exact.contains(x, tol):
            continue
        if distance(x, exact, NormChoice.LINF) > verdict.step + tol:
            outside_accepted.append(tuple(p))
    return Consistency(not inside_rejected, len(pts), inside_rejected, outside_accepted)


def replay_witness(f, xbar, xstar, w: Witness, kind: str = "regular") -> float:
    """Recompute the violation of the defining inequality at a witness; a
    positive number means the rejection is sound."""
    xb = np.array([float(v) for v in xbar])
    x = np.array(w.point, dtype=float)
    d = x - xb
    r = float(np.sum(np.abs(d)))
    z = np.asarray(xstar, dtype=float)
    if kind == "normal":
        return float(z @ d - w.eps * r)
    fb = _fbar(f, xbar)
    fx = float(_values(f, x[None, :])[0])
    if kind == "regular":
        return float(-(fx - fb - z @ d + w.eps * r))
    if kind == "upper":
        return float(-(-fx + fb + z @ d + w.eps * r))
    if kind == "singular":
        return float(z @ d - w.eps * (r + max(fx - fb, 0.0)))
    raise ValueError(kind)
