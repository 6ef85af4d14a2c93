"""Exact polyhedral geometry: representations, cones, distances, inclusion."""

from .cones import arrangement_cells, limiting_normal_cone, regular_normal_cone, tangent_cone
from .polyhedron import (
    ACTIVE_TOL,
    EmptySetError,
    Polyhedron,
    VRep,
    cone_generators,
    fourier_motzkin,
    minkowski_sum,
    remove_redundant,
)
from .union import (
    ALL,
    EMPTY,
    NORMAL,
    Inclusion,
    NormChoice,
    PolyhedralUnion,
    as_union,
    contains,
    distance,
    includes,
    intersect_unions,
    minkowski_sum_union,
    product_union,
    same_set,
    union_of,
)
