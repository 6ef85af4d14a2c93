"""Extended-real piecewise functions on polyhedral domains and polyhedral
set-valued maps."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .._rational import add, dot, is_zero, neg, scale, sub, to_frac, unit, vec, zeros
from ..geometry import ACTIVE_TOL, Polyhedron, PolyhedralUnion, arrangement_cells
from .. import lp
from .expr import (
    Abs,
    Add,
    Const,
    Div,
    Expr,
    KinkError,
    Max,
    Min,
    Mul,
    Neg,
    Sub,
    Var,
    affine_expr,
    affine_form,
    evaluate,
    evaluate_batch,
    max_var,
    substitute,
    value_and_grad,
)

OVERLAP_TOL = 1e-9


class InconsistentPiecesError(ValueError):
    pass


class NonAffineError(ValueError):
    """An exact operation met a piece whose formula is not affine."""


@dataclass(frozen=True)
class Piece:
    domain: Polyhedron
    formula: Expr

    @property
    def dim(self) -> int:
        return self.domain.dim

    @cached_property
    def affine(self):
        return affine_form(self.formula, self.domain.dim)

    @property
    def affine_flag(self) -> bool:
        return self.affine is not None


def _sample_in(P: Polyhedron, rng: random.Random, count: int):
    g = P.generators
    out = list(g.points)
    for _ in range(count):
        w = [rng.random() + 1e-3 for _ in g.points]
        t = sum(w)
        x = np.zeros(P.dim)
        for wi, p in zip(w, g.points):
            x += (wi / t) * np.array([float(c) for c in p])
        for r in g.rays:
            x += rng.random() * 3 * np.array([float(c) for c in r])
        for l in g.lines:
            x += (rng.random() * 6 - 3) * np.array([float(c) for c in l])
        out.append(tuple(x))
    return out


@dataclass(frozen=True)
class PiecewiseFunction:
    """Value is the formula of any piece whose domain contains the point and +∞
    outside all domains."""

    dim: int
    pieces: tuple

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        for p in self.pieces:
            if p.domain.dim != self.dim:
                raise ValueError(f"piece domain in dimension {p.domain.dim}, function in {self.dim}")
            if max_var(p.formula) > self.dim:
                raise ValueError("formula uses a variable beyond the function dimension")

    @classmethod
    def build(cls, dim: int, pieces: Iterable, check: bool = True, expand: bool = True) -> "PiecewiseFunction":
        """Formulas built from affine terms with abs/min/max are split into
        affine pieces unless expand=False."""
        ps = []
        for p in pieces:
            if not isinstance(p, Piece):
                dom, formula = p
                p = Piece(dom, formula if isinstance(formula, Expr) else Const(to_frac(formula)))
            if expand and not p.affine_flag:
                parts = split_piecewise_linear(p.formula, dim, p.domain)
                if parts is not None:
                    ps.extend(Piece(D, affine_expr(*a)) for D, a in parts)
                    continue
            ps.append(p)
        f = cls(dim, tuple(ps))
        if check:
            f.check_overlaps()
        return f

    @property
    def is_affine(self) -> bool:
        return all(p.affine_flag for p in self.pieces)

    def check_overlaps(self, samples: int = 100) -> None:
        """Formulas must agree where domains overlap. Affine pairs are compared
        exactly on the generators of the overlap; other pairs on samples."""
        rng = random.Random(12345)
        for i in range(len(self.pieces)):
            for j in range(i + 1, len(self.pieces)):
                p, q = self.pieces[i], self.pieces[j]
                inter = p.domain.intersect(q.domain)
                if inter.is_empty():
                    continue
                if p.affine_flag and q.affine_flag:
                    (ap, cp), (aq, cq) = p.affine, q.affine
                    da, dc = sub(ap, aq), cp - cq
                    g = inter.generators
                    bad = [x for x in g.points if dot(da, x) + dc != 0]
                    bad += [r for r in g.rays + g.lines if dot(da, r) != 0]
                    if bad:
                        raise InconsistentPiecesError(f"pieces {i} and {j} disagree on their overlap near ({', '.join(str(c) for c in bad[0])})")
                    continue
                for x in _sample_in(inter, rng, samples):
                    vp, vq = float(evaluate(p.formula, x)), float(evaluate(q.formula, x))
                    if abs(vp - vq) > OVERLAP_TOL * max(1.0, abs(vp)):
                        raise InconsistentPiecesError(f"pieces {i} and {j} disagree at {x}")

    # -- evaluation
    def pieces_at(self, x, tol=None):
        x = tuple(x)
        if tol is None:
            tol = 0 if all(isinstance(v, (int, Fraction)) for v in x) else ACTIVE_TOL
        return [p for p in self.pieces if p.domain.contains(x, tol)]

    def __call__(self, x):
        return eval_function(self, x)

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], np.inf)
        done = np.zeros(X.shape[0], dtype=bool)
        for p in self.pieces:
            D = p.domain
            mask = ~done
            if D.A:
                A = np.array([[float(c) for c in r] for r in D.A])
                b = np.array([float(c) for c in D.b])
                mask &= np.all(X @ A.T <= b + 1e-9, axis=1)
            if D.E:
                E = np.array([[float(c) for c in r] for r in D.E])
                d = np.array([float(c) for c in D.d])
                mask &= np.all(np.abs(X @ E.T - d) <= 1e-9, axis=1)
            if mask.any():
                out[mask] = evaluate_batch(p.formula, X[mask])
                done |= mask
        return out

    # -- algebra
    def scaled(self, c) -> "PiecewiseFunction":
        c = to_frac(c)
        return PiecewiseFunction(self.dim, tuple(Piece(p.domain, _scale_expr(c, p)) for p in self.pieces))

    def negated(self) -> "PiecewiseFunction":
        """Pointwise negation of the formulas on the same domains (the value
        outside the domains stays +∞; see upper subdifferentials for how the
        −∞ convention is handled)."""
        return self.scaled(-1)

    def plus_constant(self, c) -> "PiecewiseFunction":
        c = to_frac(c)
        return PiecewiseFunction(self.dim, tuple(Piece(p.domain, _add_const(p, c)) for p in self.pieces))

    def domain(self) -> PolyhedralUnion:
        return PolyhedralUnion.of(self.dim, [p.domain for p in self.pieces])

    def lift(self, total_dim: int, offset: int) -> "PiecewiseFunction":
        """View f(z) as a function of w in R^total_dim with z = w[offset:offset+dim]."""
        mapping = [Var(offset + i) for i in range(self.dim)]
        pieces = []
        for p in self.pieces:
            D = p.domain
            pad_l, pad_r = zeros(offset), zeros(total_dim - offset - self.dim)
            dom = Polyhedron(total_dim, [pad_l + a + pad_r for a in D.A], D.b, [pad_l + e + pad_r for e in D.E], D.d)
            pieces.append(Piece(dom, substitute(p.formula, mapping)))
        return PiecewiseFunction(total_dim, tuple(pieces))


def _scale_expr(c, p: Piece) -> Expr:
    if p.affine_flag:
        a, k = p.affine
        return affine_expr(scale(c, a), c * k)
    if c == 1:
        return p.formula
    if c == -1:
        return Neg(p.formula)
    return Mul(Const(c), p.formula)


def _add_const(p: Piece, c) -> Expr:
    if p.affine_flag:
        a, k = p.affine
        return affine_expr(a, k + c)
    return Add(p.formula, Const(c)) if c != 0 else p.formula


def _combine(e1: Expr, a1, e2: Expr, a2, dim) -> Expr:
    if a1 is not None and a2 is not None:
        return affine_expr(add(a1[0], a2[0]), a1[1] + a2[1])
    return Add(e1, e2)


def _half(D: Polyhedron, a, c, sign):
    """D ∩ {sign·(a·x + c) ≥ 0}, or None when that side has empty interior
    relative to D while the other side does not."""
    row = tuple(-sign * v for v in a)
    H = D.intersect(Polyhedron(D.dim, [row], [sign * c], [], []))
    if H.is_empty():
        return None
    # strict side: sign·(a·x + c) > 0 somewhere in D
    if lp.strictly_feasible_point(D.A, D.b, D.E, D.d, [row], [sign * c], D.dim) is None:
        return "flat"
    return H


def _split_sign(D, form):
    a, c = form
    pos, negs = _half(D, a, c, 1), _half(D, a, c, -1)
    if pos == "flat" and negs == "flat":
        return [(D, 1)]  # the form vanishes on D
    out = []
    if pos not in (None, "flat"):
        out.append((pos, 1))
    if negs not in (None, "flat"):
        out.append((negs, -1))
    if not out:
        out.append((D, 1 if pos == "flat" else -1))
    return out


def split_piecewise_linear(e: Expr, dim: int, domain: Polyhedron):
    """[(subdomain, (coeffs, const))] covering domain with e affine on each,
    or None if e is not piecewise linear in this syntactic sense."""
    form = affine_form(e, dim)
    if form is not None:
        return [(domain, form)]
    if isinstance(e, Neg):
        inner = split_piecewise_linear(e.a, dim, domain)
        return None if inner is None else [(D, (tuple(-v for v in a), -c)) for D, (a, c) in inner]
    if isinstance(e, Abs):
        inner = split_piecewise_linear(e.a, dim, domain)
        if inner is None:
            return None
        out = []
        for D, (a, c) in inner:
            for H, s in _split_sign(D, (a, c)):
                out.append((H, (tuple(s * v for v in a), s * c)))
        return out
    if isinstance(e, (Add, Sub, Min, Max, Mul, Div)):
        left = split_piecewise_linear(e.a, dim, domain)
        if left is None:
            return None
        out = []
        for D1, fa in left:
            right = split_piecewise_linear(e.b, dim, D1)
            if right is None:
                return None
            for D2, fb in right:
                r = _combine_forms(e, D2, fa, fb)
                if r is None:
                    return None
                out.extend(r)
        return out
    return None


def _combine_forms(e, D, fa, fb):
    (a, c), (b, d) = fa, fb
    if isinstance(e, Add):
        return [(D, (tuple(p + q for p, q in zip(a, b)), c + d))]
    if isinstance(e, Sub):
        return [(D, (tuple(p - q for p, q in zip(a, b)), c - d))]
    if isinstance(e, Mul):
        if is_zero(a):
            return [(D, (tuple(c * q for q in b), c * d))]
        if is_zero(b):
            return [(D, (tuple(d * p for p in a), d * c))]
        return None
    if isinstance(e, Div):
        if not is_zero(b) or d == 0:
            return None
        return [(D, (tuple(p / d for p in a), c / d))]
    diff = (tuple(p - q for p, q in zip(a, b)), c - d)  # fa − fb
    out = []
    for H, s in _split_sign(D, diff):
        a_wins = (s == 1) == isinstance(e, Max)
        out.append((H, fa if a_wins else fb))
    return out


def eval_function(f: PiecewiseFunction, x: Sequence):
    if len(x) != f.dim:
        raise ValueError(f"point of dimension {len(x)} for a function of dimension {f.dim}")
    x = tuple(to_frac(v) if not isinstance(v, float) else v for v in x)
    ps = f.pieces_at(x)
    if not ps:
        return math.inf
    vals = [evaluate(p.formula, x) for p in ps]
    v0 = vals[0]
    for v in vals[1:]:
        if abs(float(v) - float(v0)) > OVERLAP_TOL * max(1.0, abs(float(v0))):
            raise InconsistentPiecesError(f"pieces disagree at {x}: {v0} vs {v}")
    return v0


def covers_neighborhood(domains: Sequence[Polyhedron], xbar: Sequence) -> bool:
    """Whether the union of the given polyhedra contains a neighbourhood of xbar."""
    xbar = vec(xbar)
    n = len(xbar)
    cones = [D.tangent_cone(xbar) for D in domains if D.contains(xbar, ACTIVE_TOL)]
    if not cones:
        return False
    if any(T.is_whole() for T in cones):
        return True
    hyper = [a for T in cones for a in T.A] + [e for T in cones for e in T.E]
    return all(any(T.contains(v) for T in cones) for v in arrangement_cells(n, hyper))


def gradient(f: PiecewiseFunction, x: Sequence):
    """Exact forward-mode gradient at a point of differentiability."""
    x = vec(x) if all(not isinstance(v, float) for v in x) else tuple(x)
    ps = f.pieces_at(x)
    if not ps:
        raise ValueError("point outside the domain")
    if not covers_neighborhood([p.domain for p in ps], vec(x)):
        raise KinkError("point lies on the boundary of the domain")
    grads = [value_and_grad(p.formula, x, f.dim)[1] for p in ps]
    g0 = grads[0]
    for g in grads[1:]:
        if any(abs(float(a) - float(b)) > 1e-9 for a, b in zip(g, g0)):
            raise KinkError("pieces through the point have different gradients")
    return g0


def epigraph(f: PiecewiseFunction) -> PolyhedralUnion:
    out = []
    for p in f.pieces:
        if not p.affine_flag:
            raise NonAffineError("epigraph needs affine pieces")
        a, c = p.affine
        D = p.domain
        A = [tuple(r) + (Fraction(0),) for r in D.A] + [tuple(a) + (Fraction(-1),)]
        b = list(D.b) + [-c]
        E = [tuple(r) + (Fraction(0),) for r in D.E]
        out.append(Polyhedron(f.dim + 1, A, b, E, D.d))
    return PolyhedralUnion.of(f.dim + 1, out)


def graph_of(fs: Sequence[PiecewiseFunction]) -> PolyhedralUnion:
    """Graph {(x, f_1(x), ..., f_m(x))} of a vector of affine-piece functions."""
    fs = list(fs)
    n = fs[0].dim
    m = len(fs)
    out = []
    for combo in _refine([f.pieces for f in fs]):
        D = combo[0].domain
        for p in combo[1:]:
            D = D.intersect(p.domain)
        if D.is_empty():
            continue
        A = [tuple(r) + zeros(m) for r in D.A]
        E = [tuple(r) + zeros(m) for r in D.E]
        d = list(D.d)
        for i, p in enumerate(combo):
            if not p.affine_flag:
                raise NonAffineError("graph needs affine pieces")
            a, c = p.affine
            E.append(tuple(a) + neg(unit(m, i)))
            d.append(-c)
        out.append(Polyhedron(n + m, A, D.b, E, d))
    return PolyhedralUnion.of(n + m, out)


def _refine(piece_lists):
    if not piece_lists:
        yield ()
        return
    for p in piece_lists[0]:
        for rest in _refine(piece_lists[1:]):
            yield (p,) + rest


def linear_combination(fs: Sequence[PiecewiseFunction], coeffs: Sequence, const=0) -> PiecewiseFunction:
    """sum_i c_i f_i + const on the common refinement of the pieces. A zero
    coefficient drops the function entirely (0·f ≡ 0 on the whole space)."""
    coeffs = vec(coeffs)
    used = [(f, c) for f, c in zip(fs, coeffs) if c != 0]
    n = fs[0].dim
    if not used:
        return PiecewiseFunction(n, (Piece(Polyhedron.whole(n), Const(to_frac(const))),))
    pieces = []
    for combo in _refine([f.pieces for f, _ in used]):
        D = combo[0].domain
        for p in combo[1:]:
            D = D.intersect(p.domain)
        if D.is_empty():
            continue
        if all(p.affine_flag for p in combo):
            a = zeros(n)
            k = to_frac(const)
            for p, (_, c) in zip(combo, used):
                a = add(a, scale(c, p.affine[0]))
                k += c * p.affine[1]
            expr = affine_expr(a, k)
        else:
            expr = None
            for p, (_, c) in zip(combo, used):
                term = p.formula if c == 1 else Mul(Const(c), p.formula)
                expr = term if expr is None else Add(expr, term)
            if to_frac(const) != 0:
                expr = Add(expr, Const(to_frac(const)))
        pieces.append(Piece(D.canonical(), expr))
    return PiecewiseFunction(n, tuple(pieces))


def product_function(f1: PiecewiseFunction, f2: PiecewiseFunction) -> PiecewiseFunction:
    from .expr import Mul as _Mul

    return _binary(f1, f2, _Mul)


def quotient_function(f1: PiecewiseFunction, f2: PiecewiseFunction) -> PiecewiseFunction:
    from .expr import Div as _Div

    return _binary(f1, f2, _Div)


def _binary(f1, f2, node):
    pieces = []
    for p in f1.pieces:
        for q in f2.pieces:
            D = p.domain.intersect(q.domain)
            if D.is_empty():
                continue
            pieces.append(Piece(D.canonical(), node(p.formula, q.formula)))
    return PiecewiseFunction(f1.dim, tuple(pieces))


def compose(h: PiecewiseFunction, gs: Sequence[PiecewiseFunction]) -> PiecewiseFunction:
    """h(g_1(x), ..., g_m(x)) for affine-piece inner functions g_i. Domains of h
    are pulled back through each affine piece of the inner map."""
    gs = list(gs)
    if len(gs) != h.dim:
        raise ValueError("number of inner functions must match the outer dimension")
    n = gs[0].dim
    pieces = []
    for combo in _refine([g.pieces for g in gs]):
        D = combo[0].domain
        for p in combo[1:]:
            D = D.intersect(p.domain)
        if D.is_empty():
            continue
        if not all(p.affine_flag for p in combo):
            raise NonAffineError("composition needs affine inner pieces")
        M = [p.affine[0] for p in combo]
        c = [p.affine[1] for p in combo]
        inner = [affine_expr(a, k) for a, k in zip(M, c)]
        for q in h.pieces:
            dom = D.intersect(q.domain.affine_preimage(M, c))
            if dom.is_empty():
                continue
            formula = substitute(q.formula, inner)
            af = affine_form(formula, n)
            if af is not None:
                formula = affine_expr(*af)
            pieces.append(Piece(dom.canonical(), formula))
    return PiecewiseFunction(n, tuple(pieces))


def linearize(f: PiecewiseFunction, xbar: Sequence) -> PiecewiseFunction:
    """First-order model at xbar: each piece through xbar replaced by its
    tangent affine function on its tangent cone (translated to xbar). Agrees with
    f up to o(|x - xbar|) near xbar, so regular and singular subdifferentials at
    xbar coincide for piecewise-C¹ functions."""
    xbar = vec(xbar)
    pieces = []
    for p in f.pieces:
        if not p.domain.contains(xbar, ACTIVE_TOL):
            continue
        v, g = value_and_grad(p.formula, xbar, f.dim)
        g = vec(g)
        v = to_frac(v)
        T = p.domain.tangent_cone(xbar).translate(xbar)
        pieces.append(Piece(T, affine_expr(g, v - dot(g, xbar))))
    if not pieces:
        raise ValueError("point outside the domain")
    return PiecewiseFunction(f.dim, tuple(pieces))


# ---------------------------------------------------------------- builders


def affine_function(coeffs: Sequence, const=0, domain: Polyhedron | None = None) -> PiecewiseFunction:
    n = len(coeffs)
    dom = domain if domain is not None else Polyhedron.whole(n)
    return PiecewiseFunction(n, (Piece(dom, affine_expr(coeffs, const)),))


def indicator(S) -> PiecewiseFunction:
    """0 on S, +∞ elsewhere."""
    pieces = S.as_pieces() if isinstance(S, PolyhedralUnion) else (S,)
    n = pieces[0].dim
    return PiecewiseFunction(n, tuple(Piece(P, Const(Fraction(0))) for P in pieces))


def max_affine(rows: Sequence, consts: Sequence | None = None) -> PiecewiseFunction:
    """max_i (a_i·x + c_i) split into the regions where each term is largest."""
    rows = [vec(r) for r in rows]
    n = len(rows[0])
    consts = vec(consts) if consts is not None else zeros(len(rows))
    pieces = []
    for i, (a, c) in enumerate(zip(rows, consts)):
        A = [sub(rows[j], a) for j in range(len(rows)) if j != i]
        b = [c - consts[j] for j in range(len(rows)) if j != i]
        D = Polyhedron(n, A, b)
        if not D.is_empty():
            pieces.append(Piece(D, affine_expr(a, c)))
    return PiecewiseFunction(n, tuple(pieces))


def min_affine(rows: Sequence, consts: Sequence | None = None) -> PiecewiseFunction:
    consts = consts if consts is not None else [0] * len(rows)
    return max_affine([neg(vec(r)) for r in rows], [-to_frac(c) for c in consts]).negated()


def abs_function(dim: int = 1, index: int = 0) -> PiecewiseFunction:
    e = unit(dim, index)
    return max_affine([e, neg(e)])


# ---------------------------------------------------------------- set-valued maps


@dataclass(frozen=True)
class SetValuedMap:
    dim_x: int
    dim_y: int
    graph: PolyhedralUnion

    def __post_init__(self):
        if self.graph.dim != self.dim_x + self.dim_y:
            raise ValueError("graph dimension must be dim_x + dim_y")

    def __call__(self, x):
        return slice_map(self, x)

    def domain(self) -> PolyhedralUnion:
        keep = list(range(self.dim_x))
        return self.graph.map(lambda P: P.project(keep))

    @classmethod
    def from_functions(cls, fs: Sequence[PiecewiseFunction]) -> "SetValuedMap":
        return cls(fs[0].dim, len(fs), graph_of(fs))

    @classmethod
    def constant(cls, dim_x: int, S) -> "SetValuedMap":
        pieces = S.as_pieces() if isinstance(S, PolyhedralUnion) else (S,)
        m = pieces[0].dim
        whole = Polyhedron.whole(dim_x)
        return cls(dim_x, m, PolyhedralUnion.of(dim_x + m, [whole.product(P) for P in pieces]))


def slice_map(G: SetValuedMap, x: Sequence) -> PolyhedralUnion:
    x = vec(x)
    if len(x) != G.dim_x:
        raise ValueError("dimension mismatch")
    if G.graph.tag == "ALL":
        return PolyhedralUnion.whole(G.dim_y)
    if G.graph.is_empty():
        return PolyhedralUnion.empty(G.dim_y)
    fixed = [P.fix({i: v for i, v in enumerate(x)}) for P in G.graph.pieces]
    return PolyhedralUnion.of(G.dim_y, [P.canonical() for P in fixed if not P.is_empty()])
