"""
Tests for the bifurcation function, its simple roots and branch continuation.
"""
import math

import numpy as np
import pytest

from services.basis_service import LegendreSeries
from services.bifurcation_service import BifurcationService
from services.expr_service import ExpressionService
from services.solver_service import SolverOptions
from services.verify_service import VerifyService

CUBIC_ROOT = math.sqrt(5.0 / 3.0)


def _eps_grid():
    return np.geomspace(1e-4, 0.1, 13)


def test_H_for_k0_is_twice_f():
    f = ExpressionService.parse("sin(s) + s/3")
    rng = np.random.default_rng(41)
    for alpha in rng.uniform(-5, 5, 20):
        expected = 2 * (math.sin(alpha) + alpha / 3)
        assert abs(BifurcationService.bifurcation_H(f, 0, alpha) - expected) < 1e-12


def test_H_closed_form_for_k1_cubic():
    f = ExpressionService.parse("s^3 - s")
    for alpha in (-2.0, -0.5, 0.0, 0.7, 1.9):
        expected = 0.4 * alpha ** 3 - 2.0 / 3.0 * alpha
        assert BifurcationService.bifurcation_H(f, 1, alpha) == pytest.approx(expected, abs=1e-13)
        assert BifurcationService.bifurcation_dH(f, 1, alpha) == pytest.approx(1.2 * alpha ** 2 - 2.0 / 3.0,
                                                                               abs=1e-13)


def test_dH_matches_finite_differences():
    rng = np.random.default_rng(43)
    f = ExpressionService.parse("tanh(s) + 0.1*sin(2*s)")
    h = 1e-6
    for _ in range(50):
        k = int(rng.integers(0, 5))
        alpha = rng.uniform(-3, 3)
        fd = (BifurcationService.bifurcation_H(f, k, alpha + h) - BifurcationService.bifurcation_H(f, k, alpha - h)) / (2 * h)
        assert BifurcationService.bifurcation_dH(f, k, alpha) == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_find_simple_roots_linear():
    roots = BifurcationService.find_simple_roots(ExpressionService.parse("s - 1"), 0, interval=(-5, 5))
    assert len(roots) == 1
    alpha, slope = roots[0]
    assert alpha == pytest.approx(1.0, abs=1e-12)
    assert slope == pytest.approx(2.0, abs=1e-12)


def test_find_simple_roots_cubic():
    roots = BifurcationService.find_simple_roots(ExpressionService.parse("s^3 - s"), 1)
    alphas = [alpha for alpha, _ in roots]
    assert len(alphas) == 3
    assert alphas == sorted(alphas)
    assert alphas[0] == pytest.approx(-CUBIC_ROOT, abs=1e-10)
    assert alphas[1] == pytest.approx(0.0, abs=1e-10)
    assert alphas[2] == pytest.approx(CUBIC_ROOT, abs=1e-10)
    assert roots[2][1] == pytest.approx(4.0 / 3.0, abs=1e-10)
    assert roots[1][1] == pytest.approx(-2.0 / 3.0, abs=1e-10)


def test_find_simple_roots_even_nonlinearity_has_none():
    assert BifurcationService.find_simple_roots(ExpressionService.parse("cos(s)"), 1) == []


def test_find_simple_roots_argument_checks():
    f = ExpressionService.parse("s")
    with pytest.raises(ValueError):
        BifurcationService.find_simple_roots(f, 0, interval=(1, -1))
    with pytest.raises(ValueError):
        BifurcationService.find_simple_roots(f, 0, grid=1)


def test_odd_kernel_criterion_at_cubic_root():
    criterion = BifurcationService.odd_kernel_criterion(ExpressionService.parse("s^3 - s"), CUBIC_ROOT)
    assert abs(criterion.integral) < 1e-10
    assert criterion.odd_part_nonzero
    assert not BifurcationService.odd_kernel_criterion(ExpressionService.parse("cos(s)"), 1.0).odd_part_nonzero


def test_continue_branch_cubic_k1():
    f = ExpressionService.parse("s^3 - s")
    opts = SolverOptions(N=32)
    report = BifurcationService.continue_branch(f, 1, CUBIC_ROOT, _eps_grid(), opts)
    assert report.complete
    assert len(report.points) == 14
    assert [p.epsilon for p in report.points] == sorted(p.epsilon for p in report.points)

    origin = report.points[0]
    assert origin.epsilon == 0.0
    assert origin.newton_iters == 0
    assert origin.distance_to_xbar == 0.0

    for point in report.points[1:]:
        assert point.residual_grid < 100 * opts.tol_residual
        assert VerifyService.oracle_residual(point.x, 2.0, f, eps_scale=point.epsilon) < 1e-8
    assert report.monotone_distance
    assert report.loglog_slope >= 0.9
    assert report.convergence_rate_estimate == pytest.approx(1.0, abs=0.2)
    assert report.dH_alpha0 == pytest.approx(4.0 / 3.0, abs=1e-10)


def test_continue_branch_two_sided():
    f = ExpressionService.parse("s^3 - s")
    grid = np.concatenate([-np.geomspace(1e-3, 1e-2, 3), np.geomspace(1e-3, 1e-2, 3)])
    report = BifurcationService.continue_branch(f, 1, CUBIC_ROOT, grid, SolverOptions(N=24))
    epsilons = [p.epsilon for p in report.points]
    assert epsilons == sorted(epsilons)
    assert epsilons.count(0.0) == 1
    assert len(epsilons) == 7
    assert report.complete


def test_continue_branch_linear_k0_is_exact():
    report = BifurcationService.continue_branch(ExpressionService.parse("s - 1"), 0, 1.0, _eps_grid(),
                                                SolverOptions(N=16))
    for point in report.points:
        assert np.max(np.abs(point.x.coeffs - LegendreSeries([1.0]).resized(16).coeffs)) < 1e-12
    assert report.convergence_rate_estimate is None
    assert report.loglog_slope is None
    assert report.to_dict()['points'][0]['sup_distance_to_xbar'] == 0.0


def test_continue_branch_rejects_nonsimple_root():
    with pytest.raises(ValueError, match="not a simple root"):
        BifurcationService.continue_branch(ExpressionService.parse("cos(s)"), 1, 1.0, _eps_grid(), SolverOptions(N=8))


def test_continue_branches_threads_keep_root_order():
    f = ExpressionService.parse("s^3 - s")
    roots = BifurcationService.find_simple_roots(f, 1)
    eps_grid = np.geomspace(1e-3, 1e-2, 4)
    reports = BifurcationService.continue_branches(f, 1, roots, eps_grid, SolverOptions(N=16), threads=3)
    assert [r.alpha0 for r in reports] == [alpha for alpha, _ in roots]
    sequential = BifurcationService.continue_branches(f, 1, roots, eps_grid, SolverOptions(N=16))
    for a, b in zip(reports, sequential):
        assert np.array_equal(a.points[-1].x.coeffs, b.points[-1].x.coeffs)
