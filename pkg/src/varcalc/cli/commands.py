"""Command dispatch. Each command returns (results, exit_code)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from .. import bilevel as bl
from .. import calculus as calc
from ..exact_subdiff import (
    coderivative,
    gradient_or_none,
    graph_normal_cone,
    limiting_singular_subdiff,
    limiting_subdiff,
    regular_subdiff,
    singular_regular_subdiff,
    upper_regular_subdiff,
)
from ..functions.expr import affine_form
from ..functions.piecewise import (
    NonAffineError,
    PiecewiseFunction,
    affine_function,
    compose,
    linear_combination,
    product_function,
    quotient_function,
)
from ..geometry import Polyhedron, PolyhedralUnion, includes, limiting_normal_cone, regular_normal_cone, same_set
from ..marginal import (
    HYPOTHESES,
    EQUALITY,
    LOWER_ONLY,
    UPPER_ONLY,
    HypothesisError,
    MarginalProblem,
    NonDifferentiableError,
    QualReport,
    check_hypothesis,
    direct_marginal_subdiffs,
    exact_regular_diffcost,
    exact_regular_q2,
    exact_singular_diffcost,
    exact_singular_q2,
    first_hypothesis,
    lower_estimate_regular,
    lower_estimate_singular,
    qual_report,
    upper_estimate_regular,
    upper_estimate_singular,
)
from ..oracles import (
    OracleConfig,
    oracle_coderivative,
    oracle_regular_normal_cone,
    oracle_regular_subdiff,
    oracle_singular_regular_subdiff,
    oracle_upper_regular_subdiff,
    two_sided_check,
)
from .parser import ProblemFile, parse_expr

OK, DOWNGRADE, VIOLATION, INPUT_ERROR = 0, 2, 3, 4
COMMANDS = ("subdiff", "normal-cone", "coderivative", "marginal", "verify", "calculus", "bilevel-check", "oracle-compare")


class InputError(ValueError):
    """The file does not fit the command."""


@dataclass(frozen=True)
class Flags:
    kappa: Fraction | None = None
    force: bool = False
    oracle_step: float | None = None
    oracle_range: float | None = None


# ---------------------------------------------------------------- task helpers


def _pick(pf: ProblemFile, table: dict, key: str, what: str):
    name = pf.task.get(key)
    if name is None:
        if len(table) != 1:
            raise InputError(f"task needs '{key}' naming one of the {what}s: {sorted(table)}")
        name = next(iter(table))
    if name not in table:
        raise InputError(f"no {what} named {name!r}")
    return name, table[name]


def _point_for(pf: ProblemFile, vars_: str) -> tuple:
    need = {"xy": ("xbar", "ybar"), "x": ("xbar",), "y": ("ybar",)}[vars_]
    for k in need:
        if k not in pf.point and (k != "ybar" or pf.dim_y):
            raise InputError(f"[point] needs {k}")
    return tuple(c for k in need for c in pf.point.get(k, ()))


def _vector_task(pf: ProblemFile, key: str, length: int):
    raw = pf.task.get(key)
    if raw is None:
        return None
    vals = []
    for part in raw.split(","):
        f = affine_form(parse_expr(part, {}), 0)
        if f is None:
            raise InputError(f"{key} entries must be numbers")
        vals.append(f[1])
    if len(vals) != length:
        raise InputError(f"{key} must have {length} entries")
    return tuple(vals)


def _bool_task(pf, key) -> bool:
    raw = pf.task.get(key, "false").lower()
    if raw not in ("true", "false", "yes", "no", "1", "0"):
        raise InputError(f"{key} must be true or false")
    return raw in ("true", "yes", "1")


def _number_task(pf, key):
    raw = pf.task.get(key)
    if raw is None:
        return None
    try:
        return Fraction(raw)
    except ValueError as exc:
        raise InputError(f"{key} must be a number") from exc


def oracle_config(pf: ProblemFile, flags: Flags) -> OracleConfig:
    cfg = OracleConfig()
    step = flags.oracle_step if flags.oracle_step is not None else _number_task(pf, "oracle_step")
    rng = flags.oracle_range if flags.oracle_range is not None else _number_task(pf, "oracle_range")
    if step is not None:
        cfg = replace(cfg, dual_step=float(step))
    if rng is not None:
        cfg = replace(cfg, dual_range=float(rng))
    return cfg


def _force(pf, flags) -> bool:
    return flags.force or _bool_task(pf, "force")


def _attempt(fn, *args, **kw):
    """Run fn; exact failures become an error record instead of an exception."""
    try:
        return fn(*args, **kw), None
    except (NonAffineError, NonDifferentiableError, ValueError) as exc:
        return None, {"error": type(exc).__name__, "message": str(exc)}


# ---------------------------------------------------------------- subdiff


def cmd_subdiff(pf: ProblemFile, flags: Flags):
    name, spec = _pick(pf, pf.functions, "function", "function")
    f, z = spec.function, _point_for(pf, spec.vars)
    out = {"function": name, "point": z}
    for label, fn in (
        ("regular", regular_subdiff),
        ("singular", singular_regular_subdiff),
        ("upper", upper_regular_subdiff),
        ("limiting", limiting_subdiff),
        ("limiting_singular", limiting_singular_subdiff),
    ):
        value, err = _attempt(fn, f, z)
        out[label] = value if err is None else err
    code = OK if not isinstance(out["regular"], dict) else INPUT_ERROR
    return out, code


# ---------------------------------------------------------------- normal cones and coderivatives


def _set_and_point(pf: ProblemFile):
    if "set" in pf.task or (pf.sets and "map" not in pf.task):
        name, S = _pick(pf, pf.sets, "set", "set")
        return name, S, _point_for(pf, pf.set_spaces[name])
    name, G = _pick(pf, pf.maps, "map", "map")
    return name, G.graph, _point_for(pf, "xy")


def cmd_normal_cone(pf: ProblemFile, flags: Flags):
    name, S, z = _set_and_point(pf)
    if not S.contains(z):
        raise InputError("the point is not in the set")
    return {"set": name, "point": z, "regular": regular_normal_cone(S, z), "limiting": limiting_normal_cone(S, z)}, OK


def cmd_coderivative(pf: ProblemFile, flags: Flags):
    name, G = _pick(pf, pf.maps, "map", "map")
    xbar, ybar = _point_for(pf, "x"), _point_for(pf, "y")
    if not G.graph.contains(xbar + ybar):
        raise InputError("(xbar, ybar) is not on the graph")
    ystar = _vector_task(pf, "ystar", G.dim_y)
    if ystar is None:
        raise InputError("task needs ystar")
    return {
        "map": name,
        "ystar": ystar,
        "graph_normal_cone": graph_normal_cone(G, xbar, ybar),
        "coderivative": coderivative(G, xbar, ybar, ystar),
    }, OK


# ---------------------------------------------------------------- marginal functions


def marginal_problem(pf: ProblemFile) -> MarginalProblem:
    fname, spec = _pick(pf, pf.functions, "function", "function")
    if spec.vars != "xy":
        raise InputError("the cost function must use vars = xy")
    _, G = _pick(pf, pf.maps, "map", "map")
    try:
        return MarginalProblem(spec.function, G, _point_for(pf, "x"), _point_for(pf, "y"))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


THEOREMS = ("differentiable-cost", "q2", "lower-estimate")


def _theorem_pair(P: MarginalProblem, choice: str | None, hyp: str | None):
    """(name, regular fn, singular fn, provenance the theorem promises)."""
    if choice is None:
        choice = "differentiable-cost" if gradient_or_none(P.phi, P.zbar) is not None else "q2"
    if choice == "differentiable-cost":
        return choice, exact_regular_diffcost, exact_singular_diffcost, EQUALITY
    if choice == "q2":
        return choice, exact_regular_q2, exact_singular_q2, EQUALITY
    if choice == "lower-estimate":
        reg = lambda P, **kw: lower_estimate_regular(P, hypothesis=hyp, **kw)
        sing = lambda P, **kw: lower_estimate_singular(P, hypothesis=hyp, **kw)
        return choice, reg, sing, LOWER_ONLY
    raise InputError(f"theorem must be one of {THEOREMS}")


def _result(r):
    return {
        "value": r.value,
        "provenance": r.provenance,
        "theorem": r.theorem,
        "hypotheses": list(r.hypotheses),
        "mode": r.mode,
        "forced": r.forced,
        "notes": list(r.notes),
    }


def _gated(fn, *args, promised=None, **kw):
    """Result record; a failed hypothesis gives a blocked record carrying the
    provenance the theorem would have had."""
    try:
        return _result(fn(*args, **kw))
    except HypothesisError as exc:
        return {"blocked": True, "value": None, "provenance": promised, "message": str(exc), "entry": exc.entry}
    except (NonAffineError, NonDifferentiableError, ValueError) as exc:
        return {"error": type(exc).__name__, "message": str(exc)}


def cmd_marginal(pf: ProblemFile, flags: Flags):
    P = marginal_problem(pf)
    force = _force(pf, flags)
    hyp = pf.task.get("hypothesis")
    if hyp is not None and hyp not in HYPOTHESES:
        raise InputError(f"hypothesis must be one of {HYPOTHESES}")
    choice, reg_fn, sing_fn, promised = _theorem_pair(P, pf.task.get("theorem"), hyp)
    report = QualReport()
    out = {"mu_value": P.mu_value, "theorem": choice}
    reg = _gated(reg_fn, P, force=force, report=report, promised=promised)
    sing = _gated(sing_fn, P, force=force, report=report, promised=promised)
    out["regular"], out["singular"] = reg, sing
    out["estimates"] = {
        "regular_lower": _gated(lower_estimate_regular, P, hypothesis=hyp, force=force, report=report, promised=LOWER_ONLY),
        "regular_upper": _gated(upper_estimate_regular, P),
        "singular_lower": _gated(lower_estimate_singular, P, hypothesis=hyp, force=force, report=report, promised=LOWER_ONLY),
        "singular_upper": _gated(upper_estimate_singular, P, force=force, promised=UPPER_ONLY),
    }
    direct = direct_marginal_subdiffs(P, oracle_config(pf, flags) if not P.exact else None)
    out["direct"] = {"mode": direct.mode, "regular": direct.regular, "singular": direct.singular}
    out["checks"] = report
    errors = [r for r in (reg, sing) if "error" in r]
    if errors:
        raise InputError("; ".join(e["message"] for e in errors))
    downgraded = any(r.get("blocked") or r["provenance"] != promised for r in (reg, sing))
    return out, DOWNGRADE if downgraded else OK


def cmd_verify(pf: ProblemFile, flags: Flags):
    P = marginal_problem(pf)
    rep = qual_report(P)
    first = first_hypothesis(P, rep)
    hyps = {h: check_hypothesis(P, h, rep).holds for h in HYPOTHESES}
    out = {"checks": rep, "hypotheses": hyps, "licensing_hypothesis": first}
    return out, OK if first is not None else VIOLATION


# ---------------------------------------------------------------- calculus


RULES = ("sum", "product", "quotient", "reciprocal", "difference", "generalized-composition", "chain-q2", "chain-real-inner")


def _fn(pf, key) -> PiecewiseFunction:
    name = pf.task.get(key)
    if name is None:
        raise InputError(f"task needs {key}")
    if name not in pf.functions:
        raise InputError(f"no function named {name!r}")
    return pf.functions[name].function


def _inner_list(pf) -> list:
    raw = pf.task.get("inner")
    if raw is None:
        raise InputError("task needs inner")
    out = []
    for name in (s.strip() for s in raw.split(",")):
        if name not in pf.functions:
            raise InputError(f"no function named {name!r}")
        out.append(pf.functions[name].function)
    return out


def _identity(n):
    return [affine_function(tuple(1 if j == i else 0 for j in range(n))) for i in range(n)]


def _direct(rule, pf, xbar):
    """The composed function, for the engine's direct computation."""
    if rule in ("sum", "difference"):
        return linear_combination([_fn(pf, "f1"), _fn(pf, "f2")], (1, 1 if rule == "sum" else -1))
    if rule == "product":
        return product_function(_fn(pf, "f1"), _fn(pf, "f2"))
    if rule == "quotient":
        return quotient_function(_fn(pf, "f1"), _fn(pf, "f2"))
    if rule == "reciprocal":
        f = _fn(pf, "f1")
        return quotient_function(affine_function((0,) * f.dim, 1), f)
    if rule == "generalized-composition":
        return compose(_fn(pf, "outer"), _identity(len(xbar)) + _inner_list(pf))
    return compose(_fn(pf, "outer"), _inner_list(pf))


def cmd_calculus(pf: ProblemFile, flags: Flags):
    rule = pf.task.get("rule")
    if rule not in RULES:
        raise InputError(f"rule must be one of {RULES}")
    xbar = _point_for(pf, "x")
    force = _force(pf, flags)
    mod = _number_task(pf, "modulus")
    out = {"rule": rule, "xbar": xbar}
    if rule == "difference":
        try:
            v = bl.difference_rule_check(_fn(pf, "f1"), _fn(pf, "f2"), xbar)
        except NonAffineError as exc:
            raise InputError(str(exc)) from exc
        out["result"] = {"consistent": v.consistent, "witness": v.witness, "sub_f1": v.sub_f1, "sub_f2": v.sub_f2}
        return out, OK if v.consistent else VIOLATION
    try:
        if rule == "sum":
            r = calc.sum_rule(_fn(pf, "f1"), _fn(pf, "f2"), xbar, mod, force)
        elif rule == "product":
            r = calc.product_rule(_fn(pf, "f1"), _fn(pf, "f2"), xbar, mod, force)
        elif rule == "quotient":
            r = calc.quotient_rule(_fn(pf, "f1"), _fn(pf, "f2"), xbar, mod, force)
        elif rule == "reciprocal":
            r = calc.reciprocal_rule(_fn(pf, "f1"), xbar, mod, force)
        elif rule == "generalized-composition":
            r = calc.chain_generalized(_fn(pf, "outer"), _inner_list(pf), xbar, mod, force)
        elif rule == "chain-q2":
            r = calc.chain_q2(_fn(pf, "outer"), _inner_list(pf), xbar, mod, force)
        else:
            inner = _inner_list(pf)
            if len(inner) != 1:
                raise InputError("chain-real-inner takes exactly one inner function")
            r = calc.chain_real_inner(_fn(pf, "outer"), inner[0], xbar, mod, force)
    except HypothesisError as exc:
        out["result"] = {"error": "HypothesisError", "message": str(exc), "entry": exc.entry}
        return out, DOWNGRADE
    except (NonAffineError, NonDifferentiableError, ZeroDivisionError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    out["result"] = {
        "regular": r.regular,
        "singular": r.singular,
        "provenance": r.provenance,
        "preconditions": r.preconditions,
        "notes": list(r.notes),
    }
    direct, err = _attempt(lambda: _direct_sets(rule, pf, xbar))
    if err is None:
        dreg, dsing = direct
        out["direct"] = {
            "regular": dreg,
            "singular": dsing,
            "regular_equal": same_set(r.regular, dreg),
            "regular_rule_inside_direct": includes(dreg, r.regular).holds,
            "singular_equal": same_set(r.singular, dsing),
        }
    else:
        out["direct"] = err
    return out, OK if r.provenance == EQUALITY else DOWNGRADE


def _direct_sets(rule, pf, xbar):
    F = _direct(rule, pf, xbar)
    return regular_subdiff(F, xbar), singular_regular_subdiff(F, xbar)


# ---------------------------------------------------------------- bilevel


def bilevel_problem(pf: ProblemFile) -> bl.BilevelProblem:
    if pf.bilevel is None:
        raise InputError("file has no [bilevel] section")
    n = pf.dim_x + pf.dim_y
    phi = PiecewiseFunction.build(n, [(Polyhedron.whole(n), pf.bilevel.phi)])
    return bl.BilevelProblem(pf.dim_x, pf.dim_y, pf.bilevel.psi, phi, pf.bilevel.g)


def _certificate(c):
    if isinstance(c, bl.StationarityCertificate):
        return {"status": "certificate", **{k: getattr(c, k) for k in ("kappa", "lam", "beta", "ustar", "residuals", "comp_slack", "preconditions")}}
    return {"status": "infeasible", "kappas": c.kappas, "reason": c.reason, "preconditions": c.preconditions}


def _status_code(results) -> int:
    statuses = [r.get("status") for r in results]
    if "precondition_failed" in statuses:
        return DOWNGRADE
    if "infeasible" in statuses:
        return VIOLATION
    return OK


def cmd_bilevel(pf: ProblemFile, flags: Flags):
    B = bilevel_problem(pf)
    xbar, ybar = _point_for(pf, "x"), _point_for(pf, "y")
    force = _force(pf, flags)
    kappa = flags.kappa if flags.kappa is not None else _number_task(pf, "kappa")
    ustar = _vector_task(pf, "ustar", pf.dim_x)
    if not B.feasible(xbar + ybar):
        raise InputError("(xbar, ybar) violates the lower-level constraints")
    kind = pf.task.get("kind", "both")
    if kind not in ("smooth", "nonsmooth", "both"):
        raise InputError("kind must be smooth, nonsmooth or both")
    out = {}
    smooth = nonsmooth = None
    if kind != "nonsmooth":
        try:
            smooth = _certificate(bl.solve_stationarity_smooth(B, xbar, ybar, kappa=kappa, force=force))
        except bl.PreconditionError as exc:
            smooth = {"status": "precondition_failed", "message": str(exc), "preconditions": exc.entries}
        out["smooth"] = smooth
    if kind != "smooth":
        k = kappa if kappa is not None else (smooth or {}).get("kappa")
        for kk in [k] if k is not None else list(bl.KAPPA_GRID):
            try:
                res = bl.check_noc_nonsmooth(B, xbar, ybar, kk, ustar=ustar, force=force)
            except bl.PreconditionError as exc:
                nonsmooth = {"status": "precondition_failed", "message": str(exc), "preconditions": exc.entries}
                break
            items = [_certificate(c) for c in (res if isinstance(res, list) else [res])]
            found = [c for c in items if c["status"] == "certificate"]
            nonsmooth = {"status": "certificate" if found else "infeasible", "kappa": kk, "results": items}
            if found:
                break
        out["nonsmooth"] = nonsmooth
    return out, _status_code([r for r in (smooth, nonsmooth) if r is not None])


# ---------------------------------------------------------------- oracle comparison


KINDS = ("regular", "singular", "upper", "normal-cone", "coderivative")


def cmd_oracle_compare(pf: ProblemFile, flags: Flags):
    kind = pf.task.get("kind", "regular")
    if kind not in KINDS:
        raise InputError(f"kind must be one of {KINDS}")
    cfg = oracle_config(pf, flags)
    if kind in ("regular", "singular", "upper"):
        name, spec = _pick(pf, pf.functions, "function", "function")
        z = _point_for(pf, spec.vars)
        exact_fn, oracle_fn = {
            "regular": (regular_subdiff, oracle_regular_subdiff),
            "singular": (singular_regular_subdiff, oracle_singular_regular_subdiff),
            "upper": (upper_regular_subdiff, oracle_upper_regular_subdiff),
        }[kind]
        exact, err = _attempt(exact_fn, spec.function, z)
        if err:
            raise InputError(err["message"])
        v = oracle_fn(spec.function, z, cfg)
        subject = {"function": name, "point": z}
    elif kind == "normal-cone":
        name, S, z = _set_and_point(pf)
        exact = PolyhedralUnion.of(S.dim, [regular_normal_cone(S, z)])
        v = oracle_regular_normal_cone(S, z, cfg)
        subject = {"set": name, "point": z}
    else:
        name, G = _pick(pf, pf.maps, "map", "map")
        xbar, ybar = _point_for(pf, "x"), _point_for(pf, "y")
        ystar = _vector_task(pf, "ystar", G.dim_y)
        if ystar is None:
            raise InputError("task needs ystar")
        exact = coderivative(G, xbar, ybar, ystar)
        v = oracle_coderivative(G, xbar, ybar, ystar, cfg)
        subject = {"map": name, "ystar": ystar}
    c = two_sided_check(v, exact)
    out = {
        "kind": kind,
        "subject": subject,
        "oracle": {"dual_step": cfg.dual_step, "dual_range": cfg.dual_range, "tol": cfg.tol, "seed": cfg.seed},
        "exact": exact,
        "verdict": v,
        "consistency": c,
    }
    return out, OK if c.ok else VIOLATION


DISPATCH = {
    "subdiff": cmd_subdiff,
    "normal-cone": cmd_normal_cone,
    "coderivative": cmd_coderivative,
    "marginal": cmd_marginal,
    "verify": cmd_verify,
    "calculus": cmd_calculus,
    "bilevel-check": cmd_bilevel,
    "oracle-compare": cmd_oracle_compare,
}


def run(command: str, pf: ProblemFile, flags: Flags = Flags()):
    if command not in DISPATCH:
        raise InputError(f"unknown command {command!r}")
    return DISPATCH[command](pf, flags)
