from fractions import Fraction as F

import numpy as np
import pytest

from conftest import FIXTURES, fn, x, y
from varcalc.bilevel import (
    KAPPA_GRID,
    BilevelProblem,
    Infeasible,
    PreconditionError,
    StationarityCertificate,
    bcq_check,
    check_noc_nonsmooth,
    limiting_normals_inequality,
    mfcq_check,
    partial_calmness_probe,
    penalize,
    reformulate,
    solve_stationarity_smooth,
)
from varcalc.cli.commands import Flags, run
from varcalc.cli.parser import parse
from varcalc.functions import Abs
from varcalc.geometry import Polyhedron, PolyhedralUnion, same_set

PERTURBED = (F(1, 2), F(-1, 2), F(1), F(-1), F(3, 2))


def toy(scale=1) -> BilevelProblem:
    """Upper level (x - y)^2, lower level min y over 0 <= y <= 1."""
    return BilevelProblem(1, 1, (x - y) ** 2, fn(2, y), (-scale * y, scale * (y - 1)))


def brute_force_local_min(step=1e-3, radius=0.25, block=400):
    """Grid search over [-2, 2]^2: (0, 0) is feasible for the value-function
    reformulation and no feasible grid point within the radius does better."""
    xs = np.round(np.arange(-2.0, 2.0 + step / 2, step), 9)
    ys = xs.copy()
    lower_ok = (ys >= 0) & (ys <= 1)
    mu = np.min(np.where(lower_ok, ys, np.inf))  # mu(x) does not depend on x here
    best_near, best_far = np.inf, np.inf
    for i in range(0, len(xs), block):
        X = xs[i : i + block, None]
        Y = ys[None, :]
        feasible = lower_ok[None, :] & (Y <= mu + 1e-12)
        psi = np.where(feasible, (X - Y) ** 2, np.inf)
        near = (np.abs(X) <= radius) & (np.abs(Y) <= radius)
        best_near = min(best_near, float(np.min(np.where(near, psi, np.inf))))
        best_far = min(best_far, float(np.min(psi)))
    return best_near, best_far


def test_toy_solution_is_certified_by_grid_search():
    near, far = brute_force_local_min()
    assert near == 0.0 and far == 0.0


def test_smooth_certificate_at_toy_solution():
    c = solve_stationarity_smooth(toy(), (0,), (0,))
    assert isinstance(c, StationarityCertificate)
    assert c.kappa in KAPPA_GRID
    assert max(c.residuals.values()) <= 1e-6
    assert c.comp_slack == 0
    assert all(v >= 0 for v in c.lam + c.beta)


def test_nonsmooth_conditions_agree_with_smooth_certificate():
    smooth = solve_stationarity_smooth(toy(), (0,), (0,))
    certs = check_noc_nonsmooth(toy(), (0,), (0,), smooth.kappa)
    assert certs and all(isinstance(c, StationarityCertificate) for c in certs)
    for c in certs:
        assert (c.lam, c.beta) == (smooth.lam, smooth.beta)
        assert abs(max(c.residuals.values()) - max(smooth.residuals.values())) <= 1e-9


@pytest.mark.parametrize("xb", PERTURBED, ids=str)
def test_perturbed_points_are_rejected(xb):
    s = solve_stationarity_smooth(toy(), (xb,), (0,), force=True)
    assert isinstance(s, Infeasible) and s.kappas == KAPPA_GRID
    ns = check_noc_nonsmooth(toy(), (xb,), (0,), 1, force=True)
    assert all(isinstance(c, Infeasible) for c in ns)


@pytest.mark.parametrize("c", [2, F(1, 2), 5])
def test_scaling_constraints_rescales_multipliers(c):
    base = solve_stationarity_smooth(toy(), (0,), (0,), kappa=F(1, 32))
    scaled = solve_stationarity_smooth(toy(c), (0,), (0,), kappa=F(1, 32))
    assert isinstance(scaled, StationarityCertificate)
    assert scaled.lam == tuple(v / c for v in base.lam)
    assert scaled.beta == tuple(v / c for v in base.beta)


def test_unconstrained_smooth_case():
    B = BilevelProblem(1, 1, x * x + y * y, fn(2, y * y), ())
    c = solve_stationarity_smooth(B, (0,), (0,))
    assert c.lam == () and c.beta == () and max(c.residuals.values()) == 0


def test_ustar_outside_marginal_subdifferential_is_refused():
    with pytest.raises(PreconditionError):
        check_noc_nonsmooth(toy(), (0,), (0,), F(1, 32), ustar=(5,))


def test_partial_calmness_probe_on_toy():
    p = partial_calmness_probe(toy(), (0,), (0,))
    assert p.holds and p.kappa == 1 and p.samples > 0


def test_reformulation_and_penalty():
    r = reformulate(toy(), [(0,), (1,)])
    assert r.mu_samples == {(0.0,): 0.0, (1.0,): 0.0} and not r.feasible_set_empty
    pen = penalize(toy(), 2)
    assert pen.objective((0,), (0,)) == 0
    # psi = 1/4 plus kappa * (phi - mu) = 2 * 1/2
    assert pen.objective((0,), (F(1, 2),)) == F(5, 4)
    assert penalize(toy(), 4).penalty((0,), (F(1, 2),)) == 2 * pen.penalty((0,), (F(1, 2),))


def test_constraint_qualifications():
    one = bcq_check((y - 1 + x,), (0,), (1,))
    assert one.holds and mfcq_check((y - 1 + x,), (0,), (1,)).holds
    opposite = bcq_check((y, -y), (0,), (0,))
    assert not opposite.holds and opposite.witness is not None
    assert not mfcq_check((y, -y), (0,), (0,)).holds
    assert mfcq_check((x, y, x + y), (0,), (0,)).holds
    assert not mfcq_check((y, x, -x - y), (0,), (0,)).holds


def test_bcq_with_kinked_constraint():
    g = (Abs(x) + y,)
    assert bcq_check(g, (0,), (0,)).holds
    cone = Polyhedron.from_constraints(2, [((-1, -1), 0), ((1, -1), 0)])
    assert same_set(limiting_normals_inequality(g, (0,), (0,)), PolyhedralUnion.single(cone))


def test_kinked_lower_level_fixture():
    pf = parse((FIXTURES / "bilevel" / "kink_lower_level.vc").read_text())
    res, code = run("bilevel-check", pf, Flags())
    assert code == 0
    assert res["nonsmooth"]["status"] == "certificate"
