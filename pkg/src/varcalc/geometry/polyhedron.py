"""Convex polyhedra in exact rational arithmetic.

A polyhedron is stored in H-form {x : A x <= b, E x == d}. The generator form
(points, rays, lines) is computed on demand with the double description
method and cached.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .. import lp
from .._rational import (
    Vec,
    add,
    canonical_line,
    dot,
    is_zero,
    mat,
    neg,
    nullspace,
    primitive,
    scale,
    sub,
    to_frac,
    unit,
    vec,
    zeros,
)

ACTIVE_TOL = Fraction(1, 10**9)


class EmptySetError(ValueError):
    pass


@dataclass(frozen=True)
class VRep:
    points: tuple
    rays: tuple
    lines: tuple


# ---------------------------------------------------------------- double description


def _normalize_rows(rows):
    out = []
    seen = set()
    for r in rows:
        p = primitive(r)
        if is_zero(p) or p in seen:
            continue
        seen.add(p)
        out.append(p)
    return out


def cone_generators(dim: int, M: Sequence[Sequence], N: Sequence[Sequence] = ()):
    """Extreme rays and a lineality basis of {z : M z <= 0, N z == 0}."""
    M = _normalize_rows(mat(M))
    N = [r for r in mat(N) if not is_zero(r)]
    lines = nullspace(N, dim) if N else [unit(dim, i) for i in range(dim)]
    rays: list[Vec] = []
    processed: list[Vec] = []
    for m in M:
        vl = [dot(m, l) for l in lines]
        k = next((i for i, v in enumerate(vl) if v != 0), None)
        if k is not None:
            l0, a0 = lines[k], vl[k]
            lines = [sub(l, scale(v / a0, l0)) for i, (l, v) in enumerate(zip(lines, vl)) if i != k]
            rays = [sub(r, scale(dot(m, r) / a0, l0)) for r in rays]
            rays.append(l0 if a0 < 0 else neg(l0))
        else:
            vals = [dot(m, r) for r in rays]
            pos = [i for i, v in enumerate(vals) if v > 0]
            negs = [i for i, v in enumerate(vals) if v < 0]
            new = [r for r, v in zip(rays, vals) if v <= 0]
            if pos and negs:
                zsets = [frozenset(j for j, pm in enumerate(processed) if dot(pm, r) == 0) for r in rays]
                for i in pos:
                    for j in negs:
                        common = zsets[i] & zsets[j]
                        if any(q != i and q != j and common <= zsets[q] for q in range(len(rays))):
                            continue
                        new.append(sub(scale(vals[i], rays[j]), scale(vals[j], rays[i])))
            rays = new
        processed.append(m)
        rays = _dedupe([primitive(r) for r in rays])
    lines = [canonical_line(l) for l in lines]
    return rays, lines


def _dedupe(vs):
    out, seen = [], set()
    for v in vs:
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


def h_to_v(dim, A, b, E, d) -> VRep:
    M = [tuple(a) + (-bi,) for a, bi in zip(A, b)]
    M.insert(0, zeros(dim) + (Fraction(-1),))
    N = [tuple(e) + (-di,) for e, di in zip(E, d)]
    rays, lines = cone_generators(dim + 1, M, N)
    points, prays = [], []
    for r in rays:
        if r[dim] > 0:
            points.append(tuple(x / r[dim] for x in r[:dim]))
        else:
            prays.append(primitive(r[:dim]))
    plines = [canonical_line(l[:dim]) for l in lines if not is_zero(l[:dim])]
    if not points:
        return VRep((), (), ())
    return VRep(tuple(sorted(_dedupe(points))), tuple(sorted(_dedupe(prays))), tuple(sorted(_dedupe(plines))))


def v_to_h(dim, points, rays, lines):
    """Irredundant H-form of conv(points) + cone(rays) + span(lines)."""
    if not points:
        return (zeros(dim),), (Fraction(-1),), (), ()
    gens = [tuple(p) + (Fraction(1),) for p in points] + [tuple(r) + (Fraction(0),) for r in rays]
    Nl = [tuple(l) + (Fraction(0),) for l in lines]
    wr, wl = cone_generators(dim + 1, gens, Nl)
    A, b, E, d = [], [], [], []
    for w in wr:
        a = w[:dim]
        if is_zero(a):
            continue
        A.append(a)
        b.append(-w[dim])
    for w in wl:
        a = w[:dim]
        if is_zero(a):
            continue
        E.append(a)
        d.append(-w[dim])
    order = sorted(range(len(A)), key=lambda i: (A[i], b[i]))
    eorder = sorted(range(len(E)), key=lambda i: (E[i], d[i]))
    return (
        tuple(A[i] for i in order),
        tuple(b[i] for i in order),
        tuple(E[i] for i in eorder),
        tuple(d[i] for i in eorder),
    )


# ---------------------------------------------------------------- the polyhedron type


@dataclass(frozen=True)
class Polyhedron:
    dim: int
    A: tuple = ()
    b: tuple = ()
    E: tuple = ()
    d: tuple = ()

    def __post_init__(self):
        if self.dim < 0:
            raise ValueError("dimension must be nonnegative")
        object.__setattr__(self, "A", mat(self.A))
        object.__setattr__(self, "b", vec(self.b))
        object.__setattr__(self, "E", mat(self.E))
        object.__setattr__(self, "d", vec(self.d))
        if len(self.A) != len(self.b) or len(self.E) != len(self.d):
            raise ValueError("row count of matrix and right-hand side differ")
        for r in self.A + self.E:
            if len(r) != self.dim:
                raise ValueError(f"constraint row of length {len(r)} in dimension {self.dim}")

    # -- constructors
    @classmethod
    def whole(cls, dim: int) -> "Polyhedron":
        return cls(dim)

    @classmethod
    def empty(cls, dim: int) -> "Polyhedron":
        return cls(dim, (zeros(dim),), (Fraction(-1),))

    @classmethod
    def point(cls, x: Sequence) -> "Polyhedron":
        x = vec(x)
        n = len(x)
        return cls(n, (), (), tuple(unit(n, i) for i in range(n)), x)

    @classmethod
    def from_constraints(cls, dim, ineqs: Iterable = (), eqs: Iterable = ()) -> "Polyhedron":
        ineqs, eqs = list(ineqs), list(eqs)
        return cls(dim, [a for a, _ in ineqs], [c for _, c in ineqs], [e for e, _ in eqs], [c for _, c in eqs])

    @classmethod
    def box(cls, lo: Sequence, hi: Sequence) -> "Polyhedron":
        n = len(lo)
        A, b = [], []
        for i in range(n):
            A.append(unit(n, i))
            b.append(to_frac(hi[i]))
            A.append(neg(unit(n, i)))
            b.append(-to_frac(lo[i]))
        return cls(n, A, b)

    @classmethod
    def from_generators(cls, dim, points=(), rays=(), lines=()) -> "Polyhedron":
        points = [vec(p) for p in points]
        rays = [primitive(r) for r in map(vec, rays) if not is_zero(r)]
        lines = [canonical_line(l) for l in map(vec, lines) if not is_zero(l)]
        A, b, E, d = v_to_h(dim, points, rays, lines)
        P = cls(dim, A, b, E, d)
        if points:
            # generators are already known; the cache still goes through h_to_v on
            # demand so that the cached form is minimal.
            pass
        return P

    @classmethod
    def cone(cls, dim, rays=(), lines=()) -> "Polyhedron":
        return cls.from_generators(dim, [zeros(dim)], rays, lines)

    # -- basic queries
    @cached_property
    def generators(self) -> VRep:
        return h_to_v(self.dim, self.A, self.b, self.E, self.d)

    @cached_property
    def _empty(self) -> bool:
        if self.dim == 0:
            return any(bi < 0 for bi in self.b) or any(di != 0 for di in self.d)
        return lp.feasible_point(self.A, self.b, self.E, self.d, n=self.dim) is None

    def is_empty(self) -> bool:
        return self._empty

    def is_whole(self) -> bool:
        return all(is_zero(a) and bi >= 0 for a, bi in zip(self.A, self.b)) and all(
            is_zero(e) and di == 0 for e, di in zip(self.E, self.d)
        )

    def is_bounded(self) -> bool:
        g = self.generators
        return not g.rays and not g.lines

    def is_cone(self) -> bool:
        """True when the set is a (nonempty) cone with apex at the origin."""
        if self.is_empty():
            return False
        return self.contains(zeros(self.dim)) and all(is_zero(p) for p in self.generators.points)

    def contains(self, x: Sequence, tol=0) -> bool:
        x = vec(x)
        if len(x) != self.dim:
            raise ValueError(f"point of dimension {len(x)} tested against a set in dimension {self.dim}")
        tol = to_frac(tol)
        for a, bi in zip(self.A, self.b):
            if dot(a, x) > bi + tol:
                return False
        for e, di in zip(self.E, self.d):
            if abs(dot(e, x) - di) > tol:
                return False
        return True

    def active_rows(self, x: Sequence, tol=ACTIVE_TOL) -> list[int]:
        x = vec(x)
        return [i for i, (a, bi) in enumerate(zip(self.A, self.b)) if abs(dot(a, x) - bi) <= tol]

    def any_point(self) -> Vec:
        x = lp.feasible_point(self.A, self.b, self.E, self.d, n=self.dim) if self.dim else ()
        if x is None:
            raise EmptySetError("empty polyhedron has no points")
        return x

    def relint_point(self) -> Vec:
        """A point in the relative interior."""
        if self.is_empty():
            raise EmptySetError("empty polyhedron has no points")
        g = self.generators
        n = len(g.points)
        p = scale(Fraction(1, n), _vsum(g.points, self.dim))
        for r in g.rays:
            p = add(p, r)
        return p

    # -- set operations (all return new polyhedra)
    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        _same_dim(self, other)
        return Polyhedron(self.dim, self.A + other.A, self.b + other.b, self.E + other.E, self.d + other.d)

    def product(self, other: "Polyhedron") -> "Polyhedron":
        n, m = self.dim, other.dim
        A = [tuple(a) + zeros(m) for a in self.A] + [zeros(n) + tuple(a) for a in other.A]
        E = [tuple(e) + zeros(m) for e in self.E] + [zeros(n) + tuple(e) for e in other.E]
        return Polyhedron(n + m, A, self.b + other.b, E, self.d + other.d)

    def affine_preimage(self, M: Sequence[Sequence], c: Sequence) -> "Polyhedron":
        """{z : M z + c in self}."""
        M, c = mat(M), vec(c)
        ncols = len(M[0]) if M else 0
        cols = list(zip(*M)) if M else []

        def pull(a):
            return tuple(dot(a, col) for col in cols) if cols else zeros(ncols)

        A = [pull(a) for a in self.A]
        b = [bi - dot(a, c) for a, bi in zip(self.A, self.b)]
        E = [pull(e) for e in self.E]
        d = [di - dot(e, c) for e, di in zip(self.E, self.d)]
        return Polyhedron(ncols, A, b, E, d)

    def fix(self, values: dict) -> "Polyhedron":
        """Substitute fixed values for some coordinates and drop them."""
        values = {i: to_frac(v) for i, v in values.items()}
        keep = [i for i in range(self.dim) if i not in values]

        def red(a, rhs):
            return tuple(a[i] for i in keep), rhs - sum((a[i] * v for i, v in values.items()), Fraction(0))

        A, b = zip(*[red(a, bi) for a, bi in zip(self.A, self.b)]) if self.A else ((), ())
        E, d = zip(*[red(e, di) for e, di in zip(self.E, self.d)]) if self.E else ((), ())
        return Polyhedron(len(keep), A, b, E, d)

    def fix_last(self, values: Sequence) -> "Polyhedron":
        values = vec(values)
        k = len(values)
        return self.fix({self.dim - k + i: v for i, v in enumerate(values)})

    def linear_image(self, M: Sequence[Sequence]) -> "Polyhedron":
        """{M x : x in self}, via generators."""
        M = mat(M)
        out = len(M)
        if self.is_empty():
            return Polyhedron.empty(out)
        g = self.generators

        def app(v):
            return tuple(dot(row, v) for row in M)

        return Polyhedron.from_generators(out, [app(p) for p in g.points], [app(r) for r in g.rays], [app(l) for l in g.lines])

    def project(self, keep: Sequence[int], method: str = "fm") -> "Polyhedron":
        keep = list(keep)
        if method == "generators":
            M = [unit(self.dim, i) for i in keep]
            return self.linear_image(M)
        P = self
        order = list(range(self.dim))
        for k in sorted((i for i in range(self.dim) if i not in keep), reverse=True):
            P = fourier_motzkin(P, k)
            order.pop(k)
        if order != keep:
            perm = [order.index(i) for i in keep]
            P = Polyhedron(
                P.dim,
                [tuple(a[j] for j in perm) for a in P.A],
                P.b,
                [tuple(e[j] for j in perm) for e in P.E],
                P.d,
            )
        return P

    def translate(self, v: Sequence) -> "Polyhedron":
        v = vec(v)
        return Polyhedron(
            self.dim,
            self.A,
            [bi + dot(a, v) for a, bi in zip(self.A, self.b)],
            self.E,
            [di + dot(e, v) for e, di in zip(self.E, self.d)],
        )

    def scale(self, c) -> "Polyhedron":
        """{c x : x in self}."""
        c = to_frac(c)
        if c == 0:
            return Polyhedron.empty(self.dim) if self.is_empty() else Polyhedron.point(zeros(self.dim))
        if c > 0:
            return Polyhedron(self.dim, self.A, [bi * c for bi in self.b], self.E, [di * c for di in self.d])
        return Polyhedron(self.dim, [neg(a) for a in self.A], [-bi * c for bi in self.b], self.E, [di * c for di in self.d])

    def negate(self) -> "Polyhedron":
        return self.scale(-1)

    def recession_cone(self) -> "Polyhedron":
        return Polyhedron(self.dim, self.A, zeros(len(self.A)), self.E, zeros(len(self.E)))

    def tangent_cone(self, xbar: Sequence, tol=ACTIVE_TOL) -> "Polyhedron":
        xbar = vec(xbar)
        if not self.contains(xbar, tol):
            raise ValueError("point is not in the polyhedron")
        act = self.active_rows(xbar, tol)
        return Polyhedron(self.dim, [self.A[i] for i in act], zeros(len(act)), self.E, zeros(len(self.E)))

    def polar(self) -> "Polyhedron":
        """Polar of a cone {v : A v <= 0, E v = 0}: cone(rows of A) + span(rows of E)."""
        if any(bi != 0 for bi in self.b) or any(di != 0 for di in self.d):
            if not self.is_cone():
                raise ValueError("polar is only defined here for cones")
            K = Polyhedron.cone(self.dim, self.generators.rays, self.generators.lines)
            return K.polar()
        return Polyhedron.cone(self.dim, self.A, self.E)

    def canonical(self) -> "Polyhedron":
        """Irredundant H-form computed from the generators."""
        if self.is_empty():
            return Polyhedron.empty(self.dim)
        g = self.generators
        return Polyhedron.from_generators(self.dim, g.points, g.rays, g.lines)

    def includes(self, other: "Polyhedron", tol=0):
        """Exact test other ⊆ self. Returns (holds, witness)."""
        _same_dim(self, other)
        if other.is_empty():
            return True, None
        if self.is_empty():
            return False, other.any_point()
        tol = to_frac(tol)
        g = other.generators
        for p in g.points:
            if not self.contains(p, tol):
                return False, p
        base = g.points[0]
        for r, both in [(r, False) for r in g.rays] + [(l, True) for l in g.lines]:
            for sgn in ((1, -1) if both else (1,)):
                v = scale(sgn, r)
                w = self._escape(base, v, tol)
                if w is not None:
                    return False, w
        return True, None

    def _escape(self, base, v, tol):
        """A point base + t v outside self, or None if v is a recession direction."""
        for a, bi in zip(self.A, self.b):
            s = dot(a, v)
            if s > 0:
                t = max(Fraction(0), (bi + tol - dot(a, base)) / s) + 1
                return add(base, scale(t, v))
        for e, di in zip(self.E, self.d):
            s = dot(e, v)
            if s != 0:
                t = (abs(di - dot(e, base)) + tol + 1) / abs(s)
                return add(base, scale(t, v))
        return None

    def same_set(self, other: "Polyhedron") -> bool:
        return self.includes(other)[0] and other.includes(self)[0]


def _same_dim(P, Q):
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")


def _vsum(vs, dim):
    out = zeros(dim)
    for v in vs:
        out = add(out, v)
    return out


def minkowski_sum(P: Polyhedron, Q: Polyhedron) -> Polyhedron:
    _same_dim(P, Q)
    if P.is_empty() or Q.is_empty():
        raise EmptySetError("Minkowski sum with an empty operand")
    gp, gq = P.generators, Q.generators
    pts = [add(p, q) for p in gp.points for q in gq.points]
    return Polyhedron.from_generators(P.dim, pts, gp.rays + gq.rays, gp.lines + gq.lines)


# ---------------------------------------------------------------- Fourier–Motzkin


def remove_redundant(P: Polyhedron) -> Polyhedron:
    """Drop inequalities implied by the remaining ones (exact LPs)."""
    A = [tuple(a) for a in P.A]
    b = list(P.b)
    seen = {}
    for a, bi in zip(A, b):
        if is_zero(a):
            if bi < 0:
                return Polyhedron.empty(P.dim)
            continue
        key = primitive(a)
        s = a[next(i for i, x in enumerate(a) if x != 0)] / key[next(i for i, x in enumerate(key) if x != 0)]
        rhs = bi / s
        if key not in seen or rhs < seen[key]:
            seen[key] = rhs
    A = list(seen.keys())
    b = [seen[k] for k in A]
    i = 0
    while i < len(A):
        others_A = A[:i] + A[i + 1 :]
        others_b = b[:i] + b[i + 1 :]
        res = lp.maximize(A[i], others_A, others_b, P.E, P.d, n=P.dim)
        if res.status == lp.INFEASIBLE:
            return Polyhedron.empty(P.dim)
        if res.ok and res.value <= b[i]:
            del A[i]
            del b[i]
            continue
        i += 1
    return Polyhedron(P.dim, A, b, P.E, P.d)


def fourier_motzkin(P: Polyhedron, k: int) -> Polyhedron:
    """Eliminate coordinate k (existential projection)."""
    n = P.dim

    def drop(a):
        return tuple(a[:k]) + tuple(a[k + 1 :])

    eq_idx = next((i for i, e in enumerate(P.E) if e[k] != 0), None)
    if eq_idx is not None:
        e, de = P.E[eq_idx], P.d[eq_idx]
        ek = e[k]

        def subst(a, rhs):
            f = a[k] / ek
            return drop(sub(a, scale(f, e))), rhs - f * de

        A, b = [], []
        for a, bi in zip(P.A, P.b):
            na, nb = subst(a, bi)
            A.append(na)
            b.append(nb)
        E, d = [], []
        for i, (e2, d2) in enumerate(zip(P.E, P.d)):
            if i == eq_idx:
                continue
            na, nb = subst(e2, d2)
            if is_zero(na):
                if nb != 0:
                    return Polyhedron.empty(n - 1)
                continue
            E.append(na)
            d.append(nb)
        return remove_redundant(Polyhedron(n - 1, A, b, E, d))

    pos, negs, zero = [], [], []
    for a, bi in zip(P.A, P.b):
        (pos if a[k] > 0 else negs if a[k] < 0 else zero).append((a, bi))
    A = [drop(a) for a, _ in zero]
    b = [bi for _, bi in zero]
    for ap, bp in pos:
        for an, bn in negs:
            cp, cn = ap[k], -an[k]
            row = add(scale(cn, ap), scale(cp, an))
            A.append(drop(row))
            b.append(cn * bp + cp * bn)
    E = [drop(e) for e in P.E]
    return remove_redundant(Polyhedron(n - 1, A, b, E, P.d))
