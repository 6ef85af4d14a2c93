"""Canonical JSON: sorted keys, numbers with 12 significant digits, no
whitespace variation. Rationals that are integers print as integers."""

from __future__ import annotations

import json
import math
from dataclasses import fields, is_dataclass
from fractions import Fraction

import numpy as np

from ..geometry import Polyhedron, PolyhedralUnion
from ..marginal.checks import QualEntry, QualReport
from ..oracles import Consistency, OracleVerdict

SCHEMA_VERSION = "1.0"


def number(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, Fraction) and v.denominator == 1:
        return int(v.numerator)
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    if f == int(f) and abs(f) < 1e15:
        return int(f)
    return float(format(f, ".12g"))


def vector(v) -> list:
    return [number(c) for c in v]


def polyhedron(P: Polyhedron) -> dict:
    P = P.canonical()
    g = P.generators
    return {
        "h": {
            "ineq": [{"a": vector(a), "b": number(c)} for a, c in zip(P.A, P.b)],
            "eq": [{"a": vector(a), "b": number(c)} for a, c in zip(P.E, P.d)],
        },
        "v": {
            "points": sorted(vector(p) for p in g.points),
            "rays": sorted(vector(r) for r in g.rays),
            "lines": sorted(vector(r) for r in g.lines),
        },
    }


def union(U: PolyhedralUnion) -> dict:
    pieces = [] if U.is_empty() else [polyhedron(P) for P in U.as_pieces()]
    pieces.sort(key=lambda d: encode(d))
    return {"tag": U.tag, "dim": U.dim, "pieces": pieces}


def verdict(v: OracleVerdict) -> dict:
    acc = sorted(vector(p) for p in v.accepted)
    return {
        "mode": v.mode,
        "step": number(v.step),
        "accepted_count": len(acc),
        "accepted": acc,
        "rejected_count": len(v.rejected),
        "recession": [list(d) for d in v.recession_directions()],
    }


def consistency(c: Consistency) -> dict:
    return {
        "consistent": c.ok,
        "grid_points": c.grid_points,
        "inside_rejected": sorted(vector(p) for p in c.inside_rejected),
        "outside_accepted_count": len(c.outside_accepted),
    }


def entry(e: QualEntry) -> dict:
    return {
        "holds": e.holds,
        "modulus": None if e.modulus is None else number(e.modulus),
        "witness": to_json(e.witness),
        "mode": e.mode,
        "detail": e.detail,
        "constants": to_json(e.constants),
    }


def to_json(obj):
    """Plain JSON data for any result object the toolkit returns."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, float, Fraction, np.integer, np.floating)):
        return number(obj)
    if isinstance(obj, PolyhedralUnion):
        return union(obj)
    if isinstance(obj, Polyhedron):
        return union(PolyhedralUnion.of(obj.dim, [obj]))
    if isinstance(obj, OracleVerdict):
        return verdict(obj)
    if isinstance(obj, Consistency):
        return consistency(obj)
    if isinstance(obj, QualEntry):
        return entry(obj)
    if isinstance(obj, QualReport):
        return {k: entry(v) for k, v in obj.entries.items()}
    if isinstance(obj, dict):
        return {str(k): to_json(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist())
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [to_json(v) for v in obj]
        return sorted(items, key=encode) if isinstance(obj, (set, frozenset)) else items
    if is_dataclass(obj):
        return {f.name: to_json(getattr(obj, f.name)) for f in fields(obj)}
    return str(obj)


def encode(value) -> str:
    """Canonical text of already-converted JSON data."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def dumps(obj) -> str:
    return encode(to_json(obj)) + "\n"
