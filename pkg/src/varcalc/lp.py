"""Exact two-phase simplex over the rationals.

All variables are free unless stated otherwise. Bland's rule is used
throughout, so degenerate problems terminate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from ._rational import Vec, dot, mat, vec

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass(frozen=True)
class LPResult:
    status: str
    x: Vec | None = None
    value: Fraction | None = None
    ray: Vec | None = None  # improving direction when unbounded

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, rows, rhs, basis):
        self.rows = rows
        self.rhs = rhs
        self.basis = basis

    def pivot(self, r: int, c: int, obj: list[Fraction], objval: list[Fraction]):
        row = self.rows[r]
        p = row[c]
        if p != 1:
            inv = 1 / p
            row = [x * inv for x in row]
            self.rows[r] = row
            self.rhs[r] = self.rhs[r] * inv
        nz = [j for j, x in enumerate(row) if x != 0]
        b = self.rhs[r]
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other[c]
            if f == 0:
                continue
            for j in nz:
                other[j] -= f * row[j]
            self.rhs[i] -= f * b
        f = obj[c]
        if f != 0:
            for j in nz:
                obj[j] -= f * row[j]
            objval[0] -= f * b
        self.basis[r] = c


def _run(tab: _Tableau, obj: list[Fraction], objval: list[Fraction], allowed: list[bool]):
    """Minimize; obj holds reduced costs. Returns None when optimal or the
    entering column of an unbounded direction."""
    while True:
        enter = next((j for j, dj in enumerate(obj) if allowed[j] and dj < 0), None)
        if enter is None:
            return None
        best = None
        for i, row in enumerate(tab.rows):
            a = row[enter]
            if a > 0:
                ratio = tab.rhs[i] / a
                key = (ratio, tab.basis[i])
                if best is None or key < best[0]:
                    best = (key, i)
        if best is None:
            return enter
        tab.pivot(best[1], enter, obj, objval)


def linprog(
    c: Sequence,
    A_ub: Sequence[Sequence] = (),
    b_ub: Sequence = (),
    A_eq: Sequence[Sequence] = (),
    b_eq: Sequence = (),
    n: int | None = None,
) -> LPResult:
    """Minimize c·x subject to A_ub x <= b_ub and A_eq x == b_eq, x free."""
    A_ub, A_eq = mat(A_ub), mat(A_eq)
    b_ub, b_eq = vec(b_ub), vec(b_eq)
    c = vec(c)
    if n is None:
        n = len(c)
    if not c:
        c = (_ZERO,) * n
    m1, m2 = len(A_ub), len(A_eq)
    if len(b_ub) != m1 or len(b_eq) != m2:
        raise ValueError("constraint matrix and right-hand side lengths differ")
    for row in A_ub + A_eq:
        if len(row) != n:
            raise ValueError("constraint row has wrong length")

    # standard form columns: x+ (n), x- (n), slacks (m1), artificials (added below)
    nstd = 2 * n + m1
    rows: list[list[Fraction]] = []
    rhs: list[Fraction] = []
    basis: list[int] = []
    needs_art: list[int] = []
    for i, (a, bi) in enumerate(zip(A_ub, b_ub)):
        row = list(a) + [-x for x in a] + [_ZERO] * m1
        row[2 * n + i] = _ONE
        if bi < 0:
            row = [-x for x in row]
            bi = -bi
            needs_art.append(len(rows))
            basis.append(-1)
        else:
            basis.append(2 * n + i)
        rows.append(row)
        rhs.append(bi)
    for a, bi in zip(A_eq, b_eq):
        row = list(a) + [-x for x in a] + [_ZERO] * m1
        if bi < 0:
            row = [-x for x in row]
            bi = -bi
        needs_art.append(len(rows))
        basis.append(-1)
        rows.append(row)
        rhs.append(bi)

    nart = len(needs_art)
    ncols = nstd + nart
    for row in rows:
        row.extend([_ZERO] * nart)
    for k, r in enumerate(needs_art):
        rows[r][nstd + k] = _ONE
        basis[r] = nstd + k
    tab = _Tableau(rows, rhs, basis)

    if nart:
        obj = [_ZERO] * ncols
        objval = [_ZERO]
        for r in needs_art:
            for j in range(nstd):
                obj[j] -= rows[r][j]
            objval[0] -= rhs[r]
        allowed = [True] * ncols
        _run(tab, obj, objval, allowed)
        if -objval[0] > 0:
            return LPResult(INFEASIBLE)
        # drive remaining artificials out of the basis
        r = 0
        while r < len(tab.rows):
            if tab.basis[r] >= nstd:
                col = next((j for j in range(nstd) if tab.rows[r][j] != 0), None)
                if col is None:
                    del tab.rows[r]
                    del tab.rhs[r]
                    del tab.basis[r]
                    continue
                tab.pivot(r, col, [_ZERO] * ncols, [_ZERO])
            r += 1

    cstd = list(c) + [-x for x in c] + [_ZERO] * (m1 + nart)
    obj = list(cstd)
    objval = [_ZERO]
    for i, bcol in enumerate(tab.basis):
        cb = cstd[bcol]
        if cb != 0:
            for j, x in enumerate(tab.rows[i]):
                if x != 0:
                    obj[j] -= cb * x
            objval[0] -= cb * tab.rhs[i]
    allowed = [j < nstd for j in range(ncols)]
    enter = _run(tab, obj, objval, allowed)

    z = [_ZERO] * ncols
    for i, bcol in enumerate(tab.basis):
        z[bcol] = tab.rhs[i]
    x = tuple(z[j] - z[n + j] for j in range(n))
    if enter is not None:
        d = [_ZERO] * ncols
        d[enter] = _ONE
        for i, bcol in enumerate(tab.basis):
            d[bcol] = -tab.rows[i][enter]
        ray = tuple(d[j] - d[n + j] for j in range(n))
        return LPResult(UNBOUNDED, x=x, ray=ray)
    return LPResult(OPTIMAL, x=x, value=dot(c, x))


def feasible_point(A_ub=(), b_ub=(), A_eq=(), b_eq=(), n: int | None = None) -> Vec | None:
    if n is None:
        n = len(A_ub[0]) if A_ub else len(A_eq[0])
    res = linprog((_ZERO,) * n, A_ub, b_ub, A_eq, b_eq, n=n)
    return res.x if res.ok else None


def maximize(c, A_ub=(), b_ub=(), A_eq=(), b_eq=(), n: int | None = None) -> LPResult:
    c = vec(c)
    res = linprog(tuple(-x for x in c), A_ub, b_ub, A_eq, b_eq, n=n)
    if res.ok:
        return LPResult(OPTIMAL, x=res.x, value=-res.value)
    return res


def strictly_feasible_point(A_ub, b_ub, A_eq, b_eq, strict_A, strict_b, n: int) -> Vec | None:
    """A point with A_ub x <= b_ub, A_eq x == b_eq and strict_A x < strict_b,
    or None. Decided exactly by maximizing a common slack t capped at 1."""
    if not strict_A:
        return feasible_point(A_ub, b_ub, A_eq, b_eq, n=n)
    rows = [tuple(r) + (Fraction(0),) for r in mat(A_ub)]
    rhs = list(vec(b_ub))
    for r, bi in zip(mat(strict_A), vec(strict_b)):
        rows.append(tuple(r) + (_ONE,))
        rhs.append(bi)
    rows.append((_ZERO,) * n + (_ONE,))
    rhs.append(_ONE)
    eqs = [tuple(r) + (_ZERO,) for r in mat(A_eq)]
    res = maximize((_ZERO,) * n + (_ONE,), rows, rhs, eqs, b_eq, n=n + 1)
    if res.ok and res.value > 0:
        return res.x[:n]
    return None
