"""Expression trees with exact evaluation and forward-mode derivatives."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .._rational import to_frac

KINK_TOL = 1e-12


class KinkError(ValueError):
    """Raised when a derivative is requested at an abs/min/max kink."""


class EvalDomainError(ValueError):
    """Division by zero or square root of a negative number."""


class Expr:
    __slots__ = ()

    def __post_init__(self):
        # plain numbers given as operands become constants
        for name in ("a", "b"):
            v = getattr(self, name, None)
            if v is not None and not isinstance(v, Expr):
                object.__setattr__(self, name, lift(v))

    def __add__(self, o):
        return Add(self, lift(o))

    def __radd__(self, o):
        return Add(lift(o), self)

    def __sub__(self, o):
        return Sub(self, lift(o))

    def __rsub__(self, o):
        return Sub(lift(o), self)

    def __mul__(self, o):
        return Mul(self, lift(o))

    def __rmul__(self, o):
        return Mul(lift(o), self)

    def __truediv__(self, o):
        return Div(self, lift(o))

    def __rtruediv__(self, o):
        return Div(lift(o), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, k):
        return Pow(self, int(k))

    def __call__(self, x):
        return evaluate(self, x)


def lift(v) -> Expr:
    return v if isinstance(v, Expr) else Const(to_frac(v))


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True)
class Pow(Expr):
    a: Expr
    k: int


@dataclass(frozen=True)
class Abs(Expr):
    a: Expr


@dataclass(frozen=True)
class Min(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Max(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sqrt(Expr):
    a: Expr


BINARY = (Add, Sub, Mul, Div, Min, Max)
UNARY = (Neg, Abs, Sqrt)


def children(e: Expr):
    if isinstance(e, BINARY):
        return (e.a, e.b)
    if isinstance(e, (Neg, Abs, Sqrt, Pow)):
        return (e.a,)
    return ()


def max_var(e: Expr) -> int:
    """One more than the largest variable index used (0 if none)."""
    if isinstance(e, Var):
        return e.index + 1
    return max((max_var(c) for c in children(e)), default=0)


def substitute(e: Expr, mapping: Sequence[Expr]) -> Expr:
    """Replace Var(i) by mapping[i]."""
    if isinstance(e, Var):
        return mapping[e.index]
    if isinstance(e, Const):
        return e
    if isinstance(e, Pow):
        return Pow(substitute(e.a, mapping), e.k)
    if isinstance(e, UNARY):
        return type(e)(substitute(e.a, mapping))
    return type(e)(substitute(e.a, mapping), substitute(e.b, mapping))


def shift_vars(e: Expr, offset: int) -> Expr:
    n = max_var(e)
    return substitute(e, [Var(i + offset) for i in range(n)])


# ---------------------------------------------------------------- evaluation


def _sqrt_exact(v):
    if isinstance(v, Fraction):
        if v < 0:
            raise EvalDomainError("square root of a negative number")
        n, d = math.isqrt(v.numerator), math.isqrt(v.denominator)
        if n * n == v.numerator and d * d == v.denominator:
            return Fraction(n, d)
        return math.sqrt(v)
    if v < 0:
        raise EvalDomainError("square root of a negative number")
    return math.sqrt(v)


def evaluate(e: Expr, x: Sequence):
    """Scalar evaluation; exact for rational inputs whenever possible."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x[e.index]
    if isinstance(e, Add):
        return evaluate(e.a, x) + evaluate(e.b, x)
    if isinstance(e, Sub):
        return evaluate(e.a, x) - evaluate(e.b, x)
    if isinstance(e, Mul):
        return evaluate(e.a, x) * evaluate(e.b, x)
    if isinstance(e, Div):
        den = evaluate(e.b, x)
        if den == 0:
            raise EvalDomainError("division by zero")
        return evaluate(e.a, x) / den
    if isinstance(e, Neg):
        return -evaluate(e.a, x)
    if isinstance(e, Pow):
        base = evaluate(e.a, x)
        if e.k < 0 and base == 0:
            raise EvalDomainError("division by zero")
        return base**e.k
    if isinstance(e, Abs):
        return abs(evaluate(e.a, x))
    if isinstance(e, Min):
        return min(evaluate(e.a, x), evaluate(e.b, x))
    if isinstance(e, Max):
        return max(evaluate(e.a, x), evaluate(e.b, x))
    if isinstance(e, Sqrt):
        return _sqrt_exact(evaluate(e.a, x))
    raise TypeError(f"unknown node {type(e).__name__}")


def evaluate_batch(e: Expr, X: np.ndarray) -> np.ndarray:
    """Vectorized float evaluation over the rows of X. Invalid operations give nan."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return np.broadcast_to(_ev_np(e, X), (X.shape[0],)).astype(float)


def _ev_np(e, X):
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        return X[:, e.index]
    if isinstance(e, Add):
        return _ev_np(e.a, X) + _ev_np(e.b, X)
    if isinstance(e, Sub):
        return _ev_np(e.a, X) - _ev_np(e.b, X)
    if isinstance(e, Mul):
        return _ev_np(e.a, X) * _ev_np(e.b, X)
    if isinstance(e, Div):
        den = np.asarray(_ev_np(e.b, X), dtype=float)
        num = _ev_np(e.a, X)
        return np.where(den == 0, np.nan, num / np.where(den == 0, 1.0, den))
    if isinstance(e, Neg):
        return -_ev_np(e.a, X)
    if isinstance(e, Pow):
        return np.power(np.asarray(_ev_np(e.a, X), dtype=float), e.k)
    if isinstance(e, Abs):
        return np.abs(_ev_np(e.a, X))
    if isinstance(e, Min):
        return np.minimum(_ev_np(e.a, X), _ev_np(e.b, X))
    if isinstance(e, Max):
        return np.maximum(_ev_np(e.a, X), _ev_np(e.b, X))
    if isinstance(e, Sqrt):
        v = np.asarray(_ev_np(e.a, X), dtype=float)
        return np.where(v < 0, np.nan, np.sqrt(np.abs(v)))
    raise TypeError(f"unknown node {type(e).__name__}")


# ---------------------------------------------------------------- forward mode


class Dual:
    __slots__ = ("v", "g")

    def __init__(self, v, g):
        self.v = v
        self.g = g

    def _lin(self, a, other, b):
        return tuple(a * p + b * q for p, q in zip(self.g, other.g))


def _ad(e: Expr, x, n):
    if isinstance(e, Const):
        return Dual(e.value, (0,) * n)
    if isinstance(e, Var):
        return Dual(x[e.index], tuple(1 if j == e.index else 0 for j in range(n)))
    if isinstance(e, Neg):
        a = _ad(e.a, x, n)
        return Dual(-a.v, tuple(-q for q in a.g))
    if isinstance(e, (Add, Sub, Mul, Div, Min, Max)):
        a, b = _ad(e.a, x, n), _ad(e.b, x, n)
        if isinstance(e, Add):
            return Dual(a.v + b.v, a._lin(1, b, 1))
        if isinstance(e, Sub):
            return Dual(a.v - b.v, a._lin(1, b, -1))
        if isinstance(e, Mul):
            return Dual(a.v * b.v, a._lin(b.v, b, a.v))
        if isinstance(e, Div):
            if b.v == 0:
                raise EvalDomainError("division by zero")
            return Dual(a.v / b.v, a._lin(1 / b.v, b, -a.v / (b.v * b.v)))
        if abs(a.v - b.v) <= KINK_TOL and a.g != b.g:
            raise KinkError(f"{type(e).__name__.lower()} tie at the evaluation point")
        pick_a = (a.v <= b.v) if isinstance(e, Min) else (a.v >= b.v)
        return a if pick_a else b
    if isinstance(e, Pow):
        a = _ad(e.a, x, n)
        if e.k == 0:
            return Dual(Fraction(1), (0,) * n)
        if e.k < 0 and a.v == 0:
            raise EvalDomainError("division by zero")
        c = e.k * a.v ** (e.k - 1)
        return Dual(a.v**e.k, tuple(c * q for q in a.g))
    if isinstance(e, Abs):
        a = _ad(e.a, x, n)
        if abs(a.v) <= KINK_TOL:
            if any(q != 0 for q in a.g):
                raise KinkError("abs kink at the evaluation point")
            return Dual(abs(a.v), a.g)
        s = 1 if a.v > 0 else -1
        return Dual(abs(a.v), tuple(s * q for q in a.g))
    if isinstance(e, Sqrt):
        a = _ad(e.a, x, n)
        if a.v <= 0:
            if a.v == 0 and all(q == 0 for q in a.g):
                raise KinkError("square root is not differentiable at 0")
            if a.v < 0:
                raise EvalDomainError("square root of a negative number")
            raise KinkError("square root is not differentiable at 0")
        r = _sqrt_exact(a.v)
        return Dual(r, tuple(q / (2 * r) for q in a.g))
    raise TypeError(f"unknown node {type(e).__name__}")


def value_and_grad(e: Expr, x: Sequence, n: int | None = None):
    if n is None:
        n = len(x)
    d = _ad(e, x, n)
    return d.v, tuple(to_frac(q) if isinstance(q, int) else q for q in d.g)


def grad(e: Expr, x: Sequence, n: int | None = None):
    return value_and_grad(e, x, n)[1]


# ---------------------------------------------------------------- affine detection


def affine_form(e: Expr, n: int):
    """(coefficients, constant) if e is affine in its n variables, else None."""
    if isinstance(e, Const):
        return (Fraction(0),) * n, e.value
    if isinstance(e, Var):
        if e.index >= n:
            raise ValueError(f"variable index {e.index} outside dimension {n}")
        return tuple(Fraction(1 if j == e.index else 0) for j in range(n)), Fraction(0)
    if isinstance(e, Neg):
        f = affine_form(e.a, n)
        return None if f is None else (tuple(-c for c in f[0]), -f[1])
    if isinstance(e, (Add, Sub)):
        fa, fb = affine_form(e.a, n), affine_form(e.b, n)
        if fa is None or fb is None:
            return None
        s = 1 if isinstance(e, Add) else -1
        return tuple(p + s * q for p, q in zip(fa[0], fb[0])), fa[1] + s * fb[1]
    if isinstance(e, Mul):
        fa, fb = affine_form(e.a, n), affine_form(e.b, n)
        if fa is None or fb is None:
            return None
        if all(c == 0 for c in fa[0]):
            k, other = fa[1], fb
        elif all(c == 0 for c in fb[0]):
            k, other = fb[1], fa
        else:
            return None
        return tuple(k * c for c in other[0]), k * other[1]
    if isinstance(e, Div):
        fa, fb = affine_form(e.a, n), affine_form(e.b, n)
        if fa is None or fb is None or any(c != 0 for c in fb[0]) or fb[1] == 0:
            return None
        return tuple(c / fb[1] for c in fa[0]), fa[1] / fb[1]
    if isinstance(e, Pow):
        if e.k == 0:
            return (Fraction(0),) * n, Fraction(1)
        fa = affine_form(e.a, n)
        if fa is None:
            return None
        if e.k == 1:
            return fa
        if all(c == 0 for c in fa[0]) and not (e.k < 0 and fa[1] == 0):
            return fa[0], fa[1] ** e.k
        return None
    # abs/min/max/sqrt: affine only when constant
    if any(affine_form(c, n) is None or any(q != 0 for q in affine_form(c, n)[0]) for c in children(e)):
        return None
    try:
        v = evaluate(e, (Fraction(0),) * n)
    except EvalDomainError:
        return None
    if not isinstance(v, Fraction):
        return None
    return (Fraction(0),) * n, v


def affine_expr(coeffs: Sequence, const=0) -> Expr:
    """Build the canonical expression sum_i c_i z_i + c0."""
    out: Expr | None = None
    for i, c in enumerate(coeffs):
        c = to_frac(c)
        if c == 0:
            continue
        term = Var(i) if c == 1 else Mul(Const(c), Var(i))
        out = term if out is None else Add(out, term)
    const = to_frac(const)
    if out is None:
        return Const(const)
    return Add(out, Const(const)) if const != 0 else out


# ---------------------------------------------------------------- rendering


def _fmt_const(v: Fraction) -> str:
    s = str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return f"({s})" if v < 0 or v.denominator != 1 else s


def render(e: Expr, names: Sequence[str] | None = None) -> str:
    """Fully parenthesized text that parses back to the same tree."""

    def name(i):
        return names[i] if names is not None else f"z{i + 1}"

    def r(e):
        if isinstance(e, Const):
            return _fmt_const(e.value)
        if isinstance(e, Var):
            return name(e.index)
        if isinstance(e, Add):
            return f"({r(e.a)} + {r(e.b)})"
        if isinstance(e, Sub):
            return f"({r(e.a)} - {r(e.b)})"
        if isinstance(e, Mul):
            return f"({r(e.a)} * {r(e.b)})"
        if isinstance(e, Div):
            return f"({r(e.a)} / {r(e.b)})"
        if isinstance(e, Neg):
            return f"(-{r(e.a)})"
        if isinstance(e, Pow):
            return f"({r(e.a)} ^ {e.k})" if e.k >= 0 else f"({r(e.a)} ^ ({e.k}))"
        if isinstance(e, Abs):
            return f"abs({r(e.a)})"
        if isinstance(e, Sqrt):
            return f"sqrt({r(e.a)})"
        if isinstance(e, Min):
            return f"min({r(e.a)}, {r(e.b)})"
        if isinstance(e, Max):
            return f"max({r(e.a)}, {r(e.b)})"
        raise TypeError(type(e).__name__)

    return r(e)
