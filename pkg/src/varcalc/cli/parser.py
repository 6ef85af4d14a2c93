"""Problem files: a small sectioned text format.

    # comment
    [space]
    dim_x = 1
    dim_y = 1

    [function phi]
    piece = abs(x1) - y1
    piece = 0 if x1 <= 0, y1 == 0

    [map G]
    piece = x1 >= 0, y1 == x1

    [set S]
    piece = x1 + y1 <= 1

    [point]
    xbar = 0
    ybar = 0

    [task]
    function = phi

    [bilevel]
    psi = (x1 - y1)^2
    phi = y1
    g = -y1

Variables are x1..xn and y1..ym. A function section may set `vars = x` or
`vars = y` to live on one block only (then only those names are allowed).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

from ..functions.expr import Abs, Add, Const, Div, Expr, Max, Min, Mul, Neg, Pow, Sqrt, Sub, Var, affine_form
from ..functions.expr import render as render_expr
from ..functions.piecewise import InconsistentPiecesError, PiecewiseFunction, SetValuedMap
from ..geometry import Polyhedron, PolyhedralUnion


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message, self.line, self.column = message, line, column


SECTION_KEYS = {
    "space": {"dim_x", "dim_y"},
    "function": {"piece", "vars"},
    "map": {"piece"},
    "set": {"piece", "space"},
    "point": {"xbar", "ybar"},
    "task": {
        "function",
        "map",
        "set",
        "ystar",
        "hypothesis",
        "theorem",
        "rule",
        "f1",
        "f2",
        "outer",
        "inner",
        "kappa",
        "ustar",
        "force",
        "oracle_step",
        "oracle_range",
        "modulus",
        "kind",
    },
    "bilevel": {"psi", "phi", "g"},
}
REPEATABLE = {"piece", "g"}
VARS = ("xy", "x", "y")


# ---------------------------------------------------------------- expressions

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?(?:/\d+(?![\d.])(?!\s*\^))?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op><=|>=|==|[-+*/^(),<>=]))"
)
FUNCS = {"abs": (1, Abs), "sqrt": (1, Sqrt), "min": (2, Min), "max": (2, Max)}


def _num(text: str) -> Fraction:
    a, _, b = text.partition("/")
    return Fraction(a) / Fraction(b) if b else Fraction(a)


class _ExprParser:
    def __init__(self, text: str, line: int, col0: int, names: dict):
        self.text, self.line, self.col0, self.names = text, line, col0, names
        self.toks = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                self.fail("unexpected character " + repr(text[pos:].lstrip()[:1]), pos + len(text[pos:]) - len(text[pos:].lstrip()))
            kind = m.lastgroup
            start = m.start(kind)
            self.toks.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def fail(self, msg, pos=None):
        if pos is None:
            pos = self.toks[self.i][2] if self.i < len(self.toks) else len(self.text)
        raise ParseError(msg, self.line, self.col0 + pos + 1)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def take(self, value=None):
        t = self.peek()
        if t[0] is None:
            self.fail("unexpected end of expression")
        if value is not None and t[1] != value:
            self.fail(f"expected {value!r}, found {t[1]!r}")
        self.i += 1
        return t

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] is not None:
            self.fail(f"unexpected {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.term()
            e = Add(e, r) if op == "+" else Sub(e, r)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            r = self.unary()
            e = Mul(e, r) if op == "*" else Div(e, r)
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            k, v, _ = self.peek()
            nxt = self.toks[self.i + 1][1] if self.i + 1 < len(self.toks) else None
            if k == "num" and nxt != "^":
                self.take()
                return Const(-_num(v))
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            neg = False
            if self.peek()[1] == "(":
                self.take()
                self.take("-")
                neg = True
            k, v, p = self.take()
            if k != "num" or not re.fullmatch(r"\d+", v):
                self.fail("exponent must be an integer", p)
            if neg:
                self.take(")")
            return Pow(base, -int(v) if neg else int(v))
        return base

    def atom(self):
        k, v, p = self.take()
        if k == "num":
            return Const(_num(v))
        if k == "name":
            if v in FUNCS:
                arity, node = FUNCS[v]
                self.take("(")
                args = [self.expr()]
                for _ in range(arity - 1):
                    self.take(",")
                    args.append(self.expr())
                self.take(")")
                return node(*args)
            if v not in self.names:
                self.fail(f"unknown variable {v!r}", p)
            return Var(self.names[v])
        if v == "(":
            e = self.expr()
            self.take(")")
            return e
        self.fail(f"unexpected {v!r}", p)


def var_names(dim_x: int, dim_y: int, vars: str = "xy") -> dict:
    xs = [f"x{i + 1}" for i in range(dim_x)] if "x" in vars else []
    ys = [f"y{j + 1}" for j in range(dim_y)] if "y" in vars else []
    return {name: i for i, name in enumerate(xs + ys)}


def parse_expr(text: str, names: dict, line: int = 1, col0: int = 0) -> Expr:
    return _ExprParser(text, line, col0, names).parse()


def _split_top(text: str, sep: str = ","):
    """Split at separators outside parentheses; yields (chunk, offset)."""
    depth, start = 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            yield text[start:i], start
            start = i + 1
    yield text[start:], start


_REL = re.compile(r"<=|>=|==")


def parse_constraints(text: str, names: dict, line: int, col0: int) -> Polyhedron:
    dim = len(names)
    A, b, E, d = [], [], [], []
    if text.strip() == "all":
        return Polyhedron.whole(dim)
    for chunk, off in _split_top(text):
        if not chunk.strip():
            raise ParseError("empty constraint", line, col0 + off + 1)
        rels = list(_REL.finditer(chunk))
        if len(rels) != 1:
            raise ParseError("constraint needs exactly one of <=, >=, ==", line, col0 + off + 1)
        r = rels[0]
        lhs = parse_expr(chunk[: r.start()], names, line, col0 + off)
        rhs = parse_expr(chunk[r.end() :], names, line, col0 + off + r.end())
        fl, fr = affine_form(lhs, dim), affine_form(rhs, dim)
        if fl is None or fr is None:
            raise ParseError("constraints must be affine", line, col0 + off + 1)
        a = tuple(p - q for p, q in zip(fl[0], fr[0]))
        c = fr[1] - fl[1]  # a·z (rel) c
        if r.group() == "<=":
            A.append(a), b.append(c)
        elif r.group() == ">=":
            A.append(tuple(-v for v in a)), b.append(-c)
        else:
            E.append(a), d.append(c)
    return Polyhedron(dim, A, b, E, d)


# ---------------------------------------------------------------- document model


@dataclass
class FunctionSpec:
    function: PiecewiseFunction
    vars: str = "xy"


@dataclass
class BilevelSpec:
    psi: Expr
    phi: Expr
    g: tuple = ()


@dataclass
class ProblemFile:
    dim_x: int
    dim_y: int
    functions: dict = field(default_factory=dict)
    maps: dict = field(default_factory=dict)
    sets: dict = field(default_factory=dict)
    point: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    bilevel: BilevelSpec | None = None
    set_spaces: dict = field(default_factory=dict)
    task_positions: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def xbar(self):
        return self.point.get("xbar", ())

    @property
    def ybar(self):
        return self.point.get("ybar", ())


def _parse_vector(text: str, line: int, col0: int) -> tuple:
    out = []
    for chunk, off in _split_top(text):
        s = chunk.strip()
        if not s:
            if text.strip() == "":
                return ()
            raise ParseError("empty vector entry", line, col0 + off + 1)
        e = parse_expr(s, {}, line, col0 + off + (len(chunk) - len(chunk.lstrip())))
        form = affine_form(e, 0)
        if form is None:
            raise ParseError("vector entries must be numbers", line, col0 + off + 1)
        out.append(form[1])
    return tuple(out)


_HEADER = re.compile(r"^\[(?P<kind>[a-z]+)(?:\s+(?P<name>[A-Za-z_][A-Za-z_0-9]*))?\]\s*$")
_KV = re.compile(r"^(?P<key>[A-Za-z_][A-Za-z_0-9]*)\s*=\s*(?P<value>.*)$")


def _lex(text: str):
    """[(kind, name, header_line, [(key, value, line, value_col)])]"""
    sections = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.lstrip()
        indent = len(line) - len(stripped)
        if stripped.startswith("["):
            m = _HEADER.match(stripped)
            if not m:
                raise ParseError("malformed section header", ln, indent + 1)
            kind, name = m.group("kind"), m.group("name")
            if kind not in SECTION_KEYS:
                raise ParseError(f"unknown section {kind!r}", ln, indent + 2)
            if kind in ("function", "map", "set") and not name:
                raise ParseError(f"section {kind} needs a name", ln, indent + 1)
            if kind not in ("function", "map", "set") and name:
                raise ParseError(f"section {kind} takes no name", ln, indent + 2 + len(kind))
            sections.append((kind, name, ln, []))
            continue
        m = _KV.match(stripped)
        if not m:
            raise ParseError("expected 'key = value'", ln, indent + 1)
        if not sections:
            raise ParseError("entry outside of any section", ln, indent + 1)
        key = m.group("key")
        kind = sections[-1][0]
        if key not in SECTION_KEYS[kind]:
            raise ParseError(f"unknown key {key!r} in section [{kind}]", ln, indent + 1)
        sections[-1][3].append((key, m.group("value"), ln, indent + m.start("value")))
    return sections


def parse(text: str) -> ProblemFile:
    sections = _lex(text)
    seen = set()
    for kind, name, ln, _ in sections:
        ident = (kind, name)
        if ident in seen:
            raise ParseError(f"duplicate section [{kind}{' ' + name if name else ''}]", ln, 1)
        seen.add(ident)
    space = [s for s in sections if s[0] == "space"]
    if not space:
        raise ParseError("missing [space] section", 1, 1)
    dims = {}
    for key, value, ln, col in space[0][3]:
        if key in dims:
            raise ParseError(f"duplicate key {key!r}", ln, 1)
        if not re.fullmatch(r"\s*\d+\s*", value):
            raise ParseError(f"{key} must be a nonnegative integer", ln, col + 1)
        dims[key] = int(value)
    if "dim_x" not in dims:
        raise ParseError("[space] needs dim_x", space[0][2], 1)
    n, m = dims["dim_x"], dims.get("dim_y", 0)
    pf = ProblemFile(n, m)
    for kind, name, ln, entries in sections:
        if kind == "space":
            continue
        single = {}
        for key, value, eln, col in entries:
            if key not in REPEATABLE and key in single:
                raise ParseError(f"duplicate key {key!r}", eln, 1)
            single.setdefault(key, (value, eln, col))
        if kind == "function":
            pf.functions[name] = _parse_function(entries, n, m, ln, name)
        elif kind == "map":
            pf.maps[name] = _parse_map(entries, n, m, ln, name)
        elif kind == "set":
            vs = single.get("space", ("xy", ln, 0))
            if vs[0].strip() not in VARS:
                raise ParseError("space must be one of xy, x, y", vs[1], vs[2] + 1)
            names = var_names(n, m, vs[0].strip())
            pieces = [parse_constraints(v, names, eln, col) for k, v, eln, col in entries if k == "piece"]
            if not pieces:
                raise ParseError(f"set {name!r} has no pieces", ln, 1)
            pf.sets[name] = PolyhedralUnion.of(len(names), pieces)
            pf.set_spaces[name] = vs[0].strip()
        elif kind == "point":
            for key, (value, eln, col) in single.items():
                pf.point[key] = _parse_vector(value, eln, col)
            if "xbar" in pf.point and len(pf.point["xbar"]) != n:
                raise ParseError(f"xbar must have {n} entries", single["xbar"][1], single["xbar"][2] + 1)
            if "ybar" in pf.point and len(pf.point["ybar"]) != m:
                raise ParseError(f"ybar must have {m} entries", single["ybar"][1], single["ybar"][2] + 1)
        elif kind == "task":
            pf.task = {key: value.strip() for key, (value, _, _) in single.items()}
            pf.task_positions = {key: (eln, col + 1) for key, (_, eln, col) in single.items()}
        elif kind == "bilevel":
            names = var_names(n, m)
            if "psi" not in single or "phi" not in single:
                raise ParseError("[bilevel] needs psi and phi", ln, 1)
            psi = parse_expr(single["psi"][0], names, single["psi"][1], single["psi"][2])
            phi = parse_expr(single["phi"][0], names, single["phi"][1], single["phi"][2])
            gs = tuple(parse_expr(v, names, eln, col) for k, v, eln, col in entries if k == "g")
            pf.bilevel = BilevelSpec(psi, phi, gs)
    return pf


def _parse_function(entries, n, m, ln, name) -> FunctionSpec:
    vars_ = "xy"
    for key, value, eln, col in entries:
        if key == "vars":
            vars_ = value.strip()
            if vars_ not in VARS:
                raise ParseError("vars must be one of xy, x, y", eln, col + 1)
    names = var_names(n, m, vars_)
    dim = len(names)
    pieces = []
    for key, value, eln, col in entries:
        if key != "piece":
            continue
        parts = re.split(r"\bif\b", value, maxsplit=1)
        formula = parse_expr(parts[0], names, eln, col)
        if len(parts) == 2:
            dom = parse_constraints(parts[1], names, eln, col + len(parts[0]) + 2)
        else:
            dom = Polyhedron.whole(dim)
        pieces.append((dom, formula))
    if not pieces:
        raise ParseError(f"function {name!r} has no pieces", ln, 1)
    try:
        f = PiecewiseFunction.build(dim, pieces)
    except InconsistentPiecesError as exc:
        raise ParseError(f"function {name!r}: {exc}", ln, 1) from exc
    return FunctionSpec(f, vars_)


def _parse_map(entries, n, m, ln, name) -> SetValuedMap:
    names = var_names(n, m)
    pieces = [parse_constraints(v, names, eln, col) for k, v, eln, col in entries if k == "piece"]
    if not pieces:
        raise ParseError(f"map {name!r} has no pieces", ln, 1)
    return SetValuedMap(n, m, PolyhedralUnion.of(n + m, pieces))


# ---------------------------------------------------------------- rendering


def _names_list(n, m, vars_="xy"):
    d = var_names(n, m, vars_)
    return sorted(d, key=d.get)


def _fmt(v: Fraction) -> str:
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _row(a, names) -> str:
    terms = [f"({_fmt(c)})*{nm}" for c, nm in zip(a, names) if c != 0]
    return " + ".join(terms) if terms else "0"


def render_constraints(P: Polyhedron, names) -> str:
    if not P.A and not P.E:
        return "all"
    parts = [f"{_row(a, names)} <= {_fmt_signed(c)}" for a, c in zip(P.A, P.b)]
    parts += [f"{_row(e, names)} == {_fmt_signed(c)}" for e, c in zip(P.E, P.d)]
    return ", ".join(parts)


def _fmt_signed(c: Fraction) -> str:
    return f"({_fmt(c)})" if c < 0 else _fmt(c)


def render(pf: ProblemFile) -> str:
    """Text that parses back to an equal ProblemFile."""
    out = ["[space]", f"dim_x = {pf.dim_x}", f"dim_y = {pf.dim_y}"]
    for name, spec in pf.functions.items():
        names = _names_list(pf.dim_x, pf.dim_y, spec.vars)
        out += ["", f"[function {name}]", f"vars = {spec.vars}"]
        for p in spec.function.pieces:
            dom = render_constraints(p.domain, names)
            tail = "" if dom == "all" else f" if {dom}"
            out.append(f"piece = {render_expr(p.formula, names)}{tail}")
    for name, G in pf.maps.items():
        names = _names_list(pf.dim_x, pf.dim_y)
        out += ["", f"[map {name}]"]
        out += [f"piece = {render_constraints(P, names)}" for P in G.graph.as_pieces()]
    for name, S in pf.sets.items():
        vs = pf.set_spaces.get(name, "xy")
        names = _names_list(pf.dim_x, pf.dim_y, vs)
        out += ["", f"[set {name}]", f"space = {vs}"]
        out += [f"piece = {render_constraints(P, names)}" for P in S.as_pieces()]
    if pf.point:
        out += ["", "[point]"]
        for key in ("xbar", "ybar"):
            if key in pf.point:
                out.append(f"{key} = " + ", ".join(_fmt_signed(c) for c in pf.point[key]))
    if pf.task:
        out += ["", "[task]"] + [f"{k} = {v}" for k, v in pf.task.items()]
    if pf.bilevel is not None:
        names = _names_list(pf.dim_x, pf.dim_y)
        b = pf.bilevel
        out += ["", "[bilevel]", f"psi = {render_expr(b.psi, names)}", f"phi = {render_expr(b.phi, names)}"]
        out += [f"g = {render_expr(e, names)}" for e in b.g]
    return "\n".join(out) + "\n"
