"""Finite unions of polyhedra, norms, distances and inclusion tests."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

from .. import lp
from .._rational import add, neg, scale, to_frac, unit, vec, zeros
from .polyhedron import Polyhedron, minkowski_sum

NORMAL = "NORMAL"
EMPTY = "EMPTY"
ALL = "ALL"


class NormChoice(Enum):
    L1 = "L1"
    LINF = "LINF"

    @property
    def dual(self) -> "NormChoice":
        return NormChoice.LINF if self is NormChoice.L1 else NormChoice.L1

    def __call__(self, v: Sequence):
        if self is NormChoice.L1:
            return sum(abs(x) for x in v)
        return max((abs(x) for x in v), default=0)

    def unit_ball(self, dim: int) -> Polyhedron:
        if self is NormChoice.LINF:
            return Polyhedron.box([-1] * dim, [1] * dim)
        pts = [unit(dim, i) for i in range(dim)] + [neg(unit(dim, i)) for i in range(dim)]
        return Polyhedron.from_generators(dim, pts)

    def dual_ball(self, dim: int) -> Polyhedron:
        return self.dual.unit_ball(dim)


@dataclass(frozen=True)
class PolyhedralUnion:
    dim: int
    tag: str
    pieces: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.tag not in (NORMAL, EMPTY, ALL):
            raise ValueError(f"unknown tag {self.tag!r}")
        if (self.tag == NORMAL) != bool(self.pieces):
            raise ValueError("pieces must be present exactly when the tag is NORMAL")
        for P in self.pieces:
            if P.dim != self.dim:
                raise ValueError("piece dimension differs from union dimension")

    @classmethod
    def of(cls, dim: int, pieces: Iterable[Polyhedron]) -> "PolyhedralUnion":
        kept = []
        for P in pieces:
            if P.dim != dim:
                raise ValueError("piece dimension differs from union dimension")
            if P.is_whole():
                return cls(dim, ALL)
            if not P.is_empty():
                kept.append(P)
        return cls(dim, NORMAL, kept) if kept else cls(dim, EMPTY)

    @classmethod
    def empty(cls, dim: int) -> "PolyhedralUnion":
        return cls(dim, EMPTY)

    @classmethod
    def whole(cls, dim: int) -> "PolyhedralUnion":
        return cls(dim, ALL)

    @classmethod
    def single(cls, P: Polyhedron) -> "PolyhedralUnion":
        return cls.of(P.dim, [P])

    def as_pieces(self) -> tuple:
        if self.tag == ALL:
            return (Polyhedron.whole(self.dim),)
        return self.pieces

    def is_empty(self) -> bool:
        return self.tag == EMPTY

    def is_convex_piece(self) -> bool:
        return self.tag != NORMAL or len(self.pieces) == 1

    def as_polyhedron(self) -> Polyhedron:
        if self.tag == EMPTY:
            return Polyhedron.empty(self.dim)
        if self.tag == ALL:
            return Polyhedron.whole(self.dim)
        if len(self.pieces) != 1:
            raise ValueError("union has several pieces")
        return self.pieces[0]

    def contains(self, x: Sequence, tol=0) -> bool:
        return contains(self, x, tol)

    def map(self, fn) -> "PolyhedralUnion":
        if self.tag == EMPTY:
            return self
        out = [fn(P) for P in self.as_pieces()]
        return PolyhedralUnion.of(out[0].dim, out)

    def simplify(self) -> "PolyhedralUnion":
        """Drop pieces contained in another piece (exact)."""
        if self.tag != NORMAL:
            return self
        ps = [P.canonical() for P in self.pieces]
        keep: list[Polyhedron] = []
        for i, P in enumerate(ps):
            dominated = False
            for j, Q in enumerate(ps):
                if i == j:
                    continue
                if Q.includes(P)[0] and (not P.includes(Q)[0] or j < i):
                    dominated = True
                    break
            if not dominated:
                keep.append(P)
        return PolyhedralUnion.of(self.dim, keep)


def as_union(U) -> PolyhedralUnion:
    if isinstance(U, PolyhedralUnion):
        return U
    if isinstance(U, Polyhedron):
        return PolyhedralUnion.single(U)
    raise TypeError(f"expected a polyhedron or polyhedral union, got {type(U).__name__}")


def contains(U, x: Sequence, tol=0) -> bool:
    U = as_union(U)
    x = vec(x)
    if len(x) != U.dim:
        raise ValueError(f"point of dimension {len(x)} tested against a set in dimension {U.dim}")
    if to_frac(tol) < 0:
        raise ValueError("tolerance must be nonnegative")
    if U.tag == ALL:
        return True
    return any(P.contains(x, tol) for P in U.pieces)


def _piece_distance(x, P: Polyhedron, norm: NormChoice) -> Fraction:
    n = P.dim
    z = zeros(n)
    A, b = [], []
    if norm is NormChoice.L1:
        # variables (y, t)
        for i in range(n):
            e = unit(n, i)
            A.append(e + neg(e))
            b.append(x[i])
            A.append(neg(e) + neg(e))
            b.append(-x[i])
        A += [tuple(a) + z for a in P.A]
        b += list(P.b)
        E = [tuple(e) + z for e in P.E]
        c = z + (Fraction(1),) * n
        nv = 2 * n
    else:
        for i in range(n):
            e = unit(n, i)
            A.append(e + (Fraction(-1),))
            b.append(x[i])
            A.append(neg(e) + (Fraction(-1),))
            b.append(-x[i])
        A += [tuple(a) + (Fraction(0),) for a in P.A]
        b += list(P.b)
        E = [tuple(e) + (Fraction(0),) for e in P.E]
        c = z + (Fraction(1),)
        nv = n + 1
    res = lp.linprog(c, A, b, E, P.d, n=nv)
    if res.status == lp.INFEASIBLE:
        return math.inf
    if res.status == lp.UNBOUNDED:
        raise ArithmeticError("distance LP unbounded; malformed piece")
    return res.value


def distance(x: Sequence, U, norm: NormChoice = NormChoice.L1):
    U = as_union(U)
    x = vec(x)
    if len(x) != U.dim:
        raise ValueError("dimension mismatch")
    if U.tag == ALL:
        return Fraction(0)
    if U.tag == EMPTY:
        return math.inf
    return min(_piece_distance(x, P, norm) for P in U.pieces)


# ---------------------------------------------------------------- inclusion


@dataclass(frozen=True)
class Inclusion:
    holds: bool
    mode: str
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.holds


def _uncovered(region, outers, tol, n):
    """A point of region = (A, b, E, d, S, s) with S x < s that lies in no outer
    piece, or None."""
    A, b, E, d, S, s = region
    here = lp.strictly_feasible_point(A, b, E, d, S, s, n)
    if here is None or not outers:
        return here
    Q, rest = outers[0], outers[1:]
    qa = [tuple(q) for q in Q.A] + [tuple(e) for e in Q.E] + [neg(e) for e in Q.E]
    qb = [c + tol for c in Q.b] + [c + tol for c in Q.d] + [tol - c for c in Q.d]
    hit = lp.strictly_feasible_point(list(A) + qa, list(b) + qb, E, d, S, s, n)
    if hit is None:
        return _uncovered(region, rest, tol, n)
    branches = []
    for q, c in zip(Q.A, Q.b):
        branches.append((neg(q), -c - tol))
    for e, c in zip(Q.E, Q.d):
        branches.append((neg(e), -c - tol))
        branches.append((tuple(e), c - tol))
    for row, rhs in branches:
        w = _uncovered((A, b, E, d, list(S) + [row], list(s) + [rhs]), rest, tol, n)
        if w is not None:
            return w
    return None


def _sample_points(P: Polyhedron, rng: random.Random, count: int):
    g = P.generators
    pts = list(g.points)
    dirs = list(g.rays) + list(g.lines) + [neg(l) for l in g.lines]
    for p in g.points:
        for r in dirs:
            for t in (1, 10, 100):
                pts.append(add(p, scale(t, r)))
    for _ in range(count):
        w = [Fraction(rng.randint(1, 1000)) for _ in g.points]
        tot = sum(w)
        x = zeros(P.dim)
        for wi, p in zip(w, g.points):
            x = add(x, scale(wi / tot, p))
        for r in g.rays:
            x = add(x, scale(Fraction(rng.randint(0, 1000), 100), r))
        for l in g.lines:
            x = add(x, scale(Fraction(rng.randint(-1000, 1000), 100), l))
        pts.append(x)
    return pts


def includes(outer, inner, tol=0, mode: str = "auto") -> Inclusion:
    """Test inner ⊆ outer.

    With one outer piece the test is the exact generator test. With several
    outer pieces the default is still exact (recursive set difference with
    strict inequalities, decided by LP); mode="sampled" uses vertices, scaled
    rays and 200 random points per inner piece instead.
    """
    outer, inner = as_union(outer), as_union(inner)
    if outer.dim != inner.dim:
        raise ValueError(f"dimension mismatch: {outer.dim} vs {inner.dim}")
    tol = to_frac(tol)
    n = outer.dim
    if inner.tag == EMPTY or outer.tag == ALL:
        return Inclusion(True, "exact")
    if outer.tag == EMPTY:
        return Inclusion(False, "exact", inner.as_pieces()[0].any_point())
    if mode == "sampled" and len(outer.pieces) > 1:
        rng = random.Random(0)
        for P in inner.as_pieces():
            for x in _sample_points(P, rng, 200):
                if not any(Q.contains(x, tol) for Q in outer.pieces):
                    return Inclusion(False, "sampled", x)
        return Inclusion(True, "sampled")
    if len(outer.pieces) == 1:
        Q = outer.pieces[0]
        for P in inner.as_pieces():
            ok, w = Q.includes(P, tol)
            if not ok:
                return Inclusion(False, "exact", w)
        return Inclusion(True, "exact")
    for P in inner.as_pieces():
        w = _uncovered((P.A, P.b, P.E, P.d, [], []), list(outer.pieces), tol, n)
        if w is not None:
            return Inclusion(False, "exact", w)
    return Inclusion(True, "exact")


def same_set(U, V) -> bool:
    return includes(U, V).holds and includes(V, U).holds


def minkowski_sum_union(U, V) -> PolyhedralUnion:
    U, V = as_union(U), as_union(V)
    if U.dim != V.dim:
        raise ValueError("dimension mismatch")
    if U.is_empty() or V.is_empty():
        return PolyhedralUnion.empty(U.dim)
    return PolyhedralUnion.of(U.dim, [minkowski_sum(P, Q) for P in U.as_pieces() for Q in V.as_pieces()])


def intersect_unions(U, V) -> PolyhedralUnion:
    U, V = as_union(U), as_union(V)
    if U.tag == ALL:
        return V
    if V.tag == ALL:
        return U
    if U.is_empty() or V.is_empty():
        return PolyhedralUnion.empty(U.dim)
    return PolyhedralUnion.of(U.dim, [P.intersect(Q) for P in U.pieces for Q in V.pieces])


def union_of(dim: int, unions: Iterable) -> PolyhedralUnion:
    pieces = []
    for U in unions:
        U = as_union(U)
        if U.tag == ALL:
            return PolyhedralUnion.whole(dim)
        pieces.extend(U.pieces)
    return PolyhedralUnion.of(dim, pieces)


def product_union(U, V) -> PolyhedralUnion:
    U, V = as_union(U), as_union(V)
    dim = U.dim + V.dim
    if U.is_empty() or V.is_empty():
        return PolyhedralUnion.empty(dim)
    return PolyhedralUnion.of(dim, [P.product(Q) for P in U.as_pieces() for Q in V.as_pieces()])
