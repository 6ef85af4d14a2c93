"""Small helpers for exact rational vectors."""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

Vec = tuple  # tuple of Fraction


def to_frac(v) -> Fraction:
    """Convert a number to a Fraction. Floats go through their shortest repr,
    so 0.1 becomes 1/10 rather than the binary expansion."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        return Fraction(int(v))
    if isinstance(v, (int, Rational)):
        return Fraction(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError(f"cannot convert {v!r} to a rational")
        return Fraction(repr(float(v)))
    if isinstance(v, str):
        return Fraction(v.strip())
    try:  # numpy scalars
        return to_frac(float(v))
    except (TypeError, ValueError) as exc:
        raise TypeError(f"not a number: {v!r}") from exc


def vec(xs: Iterable) -> Vec:
    return tuple(to_frac(x) for x in xs)


def mat(rows: Iterable[Iterable]) -> tuple:
    return tuple(vec(r) for r in rows)


def dot(a: Sequence, b: Sequence):
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def add(a: Sequence, b: Sequence) -> Vec:
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Sequence, b: Sequence) -> Vec:
    return tuple(x - y for x, y in zip(a, b))


def scale(c, a: Sequence) -> Vec:
    return tuple(c * x for x in a)


def neg(a: Sequence) -> Vec:
    return tuple(-x for x in a)


def zeros(n: int) -> Vec:
    return (Fraction(0),) * n


def unit(n: int, i: int) -> Vec:
    return tuple(Fraction(1 if j == i else 0) for j in range(n))


def is_zero(a: Sequence) -> bool:
    return all(x == 0 for x in a)


def norm1(a: Sequence):
    return sum((abs(x) for x in a), Fraction(0))


def norm_inf(a: Sequence):
    return max((abs(x) for x in a), default=Fraction(0))


def primitive(a: Sequence) -> Vec:
    """Scale a nonzero rational vector to the primitive integer vector with the
    same direction (positive multiple)."""
    a = vec(a)
    if is_zero(a):
        return a
    den = 1
    for x in a:
        den = den * x.denominator // math.gcd(den, x.denominator)
    ints = [int(x * den) for x in a]
    g = 0
    for k in ints:
        g = math.gcd(g, abs(k))
    return tuple(Fraction(k // g) for k in ints)


def canonical_line(a: Sequence) -> Vec:
    """Primitive representative of a line direction: the first nonzero entry is
    made positive."""
    p = primitive(a)
    for x in p:
        if x != 0:
            return p if x > 0 else neg(p)
    return p


def rref(rows: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form; returns (nonzero rows, pivot columns)."""
    m = [list(vec(r)) for r in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        m[r] = [x / p for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows: Sequence[Sequence]) -> int:
    return len(rref(rows)[1])


def nullspace(rows: Sequence[Sequence], ncols: int) -> list[Vec]:
    """Basis of {v : row·v = 0 for all rows}."""
    if not rows:
        return [unit(ncols, i) for i in range(ncols)]
    red, piv = rref(rows)
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for r, pc in zip(red, piv):
            v[pc] = -r[f]
        basis.append(tuple(v))
    return basis


def fmt(x) -> str:
    x = to_frac(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
