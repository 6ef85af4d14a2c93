"""Expressions, piecewise functions and polyhedral set-valued maps."""

from .expr import (
    Abs,
    Add,
    Const,
    Div,
    EvalDomainError,
    Expr,
    KinkError,
    Max,
    Min,
    Mul,
    Neg,
    Pow,
    Sqrt,
    Sub,
    Var,
    affine_expr,
    affine_form,
    evaluate,
    evaluate_batch,
    grad,
    render,
    value_and_grad,
)
from .piecewise import (
    InconsistentPiecesError,
    NonAffineError,
    Piece,
    PiecewiseFunction,
    SetValuedMap,
    abs_function,
    affine_function,
    compose,
    covers_neighborhood,
    epigraph,
    eval_function,
    gradient,
    graph_of,
    indicator,
    linear_combination,
    linearize,
    max_affine,
    min_affine,
    product_function,
    quotient_function,
    slice_map,
)

eval = eval_function  # noqa: A001
slice = slice_map  # noqa: A001
