"""Tangent, regular normal and limiting normal cones of polyhedral unions."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from .. import lp
from .._rational import canonical_line, is_zero, neg, vec
from .polyhedron import ACTIVE_TOL, Polyhedron
from .union import PolyhedralUnion, as_union


def tangent_cone(P: Polyhedron, xbar: Sequence) -> Polyhedron:
    return P.tangent_cone(xbar)


def _pieces_at(U: PolyhedralUnion, xbar):
    if U.tag == "ALL":
        return [Polyhedron.whole(U.dim)]
    pieces = [P for P in U.pieces if P.contains(xbar, ACTIVE_TOL)]
    if not pieces:
        raise ValueError("point is not in the set")
    return pieces


def _normal_from_cones(cones, dim) -> Polyhedron:
    N = Polyhedron.whole(dim)
    for T in cones:
        N = N.intersect(T.polar())
    return N.canonical()


def regular_normal_cone(U, xbar: Sequence) -> Polyhedron:
    """Intersection of the polars of the tangent cones of the pieces through xbar."""
    U = as_union(U)
    xbar = vec(xbar)
    if len(xbar) != U.dim:
        raise ValueError("dimension mismatch")
    return _normal_from_cones([P.tangent_cone(xbar) for P in _pieces_at(U, xbar)], U.dim)


def arrangement_cells(dim: int, hyperplanes: Sequence[Sequence]) -> list:
    """One point in each relatively open cell of a central hyperplane
    arrangement (sign vectors in {-,0,+}), found by depth-first search with an
    LP feasibility test at every node."""
    hs = []
    seen = set()
    for h in hyperplanes:
        c = canonical_line(vec(h))
        if not is_zero(c) and c not in seen:
            seen.add(c)
            hs.append(c)
    cells = []

    def rec(k, A, b, E):
        x = lp.feasible_point(A, b, E, [Fraction(0)] * len(E), n=dim)
        if x is None:
            return
        if k == len(hs):
            cells.append(x)
            return
        h = hs[k]
        rec(k + 1, A, b, E + [h])
        rec(k + 1, A + [h], b + [Fraction(-1)], E)
        rec(k + 1, A + [neg(h)], b + [Fraction(-1)], E)

    rec(0, [], [], [])
    return cells


def limiting_normal_cone(U, xbar: Sequence) -> PolyhedralUnion:
    """Union of regular normal cones over the cells of the local stratification.

    Near xbar the set coincides with xbar + (union of tangent cones), and a
    cone's regular normal cone is constant along each cell of the arrangement
    spanned by the constraint hyperplanes of those tangent cones.
    """
    U = as_union(U)
    xbar = vec(xbar)
    if len(xbar) != U.dim:
        raise ValueError("dimension mismatch")
    cones = [P.tangent_cone(xbar) for P in _pieces_at(U, xbar)]
    hyper = [a for T in cones for a in T.A] + [e for T in cones for e in T.E]
    normals = []
    for v in arrangement_cells(U.dim, hyper):
        here = [T.tangent_cone(v) for T in cones if T.contains(v)]
        if here:
            normals.append(_normal_from_cones(here, U.dim))
    return PolyhedralUnion.of(U.dim, normals).simplify()
