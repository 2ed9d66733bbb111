"""
Tests for the non-resonant and resonant nonlinear solvers.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.basis_service import LegendreSeries
from services.errors import ResonanceError, SolvabilityRefusedError
from services.expr_service import ExpressionService
from services.solver_service import SolverOptions, SolverService
from services.verify_service import VerifyService

COS_FIXED_POINT = 0.7390851332151607


def test_residual_examples():
    f = ExpressionService.parse("tanh(s) - 0.3")
    x = LegendreSeries([math.atanh(0.3)] + [0.0] * 8)
    residual_coeff, residual_grid = SolverService.residual(x, 0.0, f)
    assert residual_coeff < 1e-12 and residual_grid < 1e-12

    residual_coeff, residual_grid = SolverService.residual(LegendreSeries([1.0, 0.0]), 1.0,
                                                           ExpressionService.parse("1"))
    assert residual_coeff < 1e-12 and residual_grid < 1e-12

    _, residual_grid = SolverService.residual(LegendreSeries.zeros(4), 1.0, ExpressionService.parse("cos(s)"))
    assert residual_grid == pytest.approx(1.0, abs=1e-15)


def test_solver_options_validation():
    with pytest.raises(ValueError, match="quadrature order below truncation"):
        SolverOptions(N=10, quad_order=5)
    with pytest.raises(ValueError, match="damping"):
        SolverOptions(damping=0.0)
    with pytest.raises(ValueError, match="damping"):
        SolverOptions(damping=1.5)
    with pytest.raises(ValueError, match="tol"):
        SolverOptions(tol_residual=0.0)
    with pytest.raises(ValueError, match="mode"):
        SolverOptions(mode='secant')
    with pytest.raises(ValueError):
        SolverOptions(N=-1)
    assert SolverOptions(N=10).resolved_quad_order == 36


def test_constant_forcing_newton_is_immediate():
    report = SolverService.solve_nonresonant(ExpressionService.parse("1"), 1.0, SolverOptions(N=16, mode='newton'))
    assert report.converged
    assert report.iterations <= 2
    assert_allclose(report.x.coeffs, [1.0] + [0.0] * 16, atol=1e-14)


def test_cosine_fixed_point():
    f = ExpressionService.parse("cos(s)")
    report = SolverService.solve_nonresonant(f, 1.0, SolverOptions(N=32))
    assert report.converged
    assert report.residual_coeff <= 1e-10
    assert report.x.coeffs[0] == pytest.approx(COS_FIXED_POINT, abs=1e-10)
    assert np.max(np.abs(report.x.coeffs[1:])) < 1e-12
    assert VerifyService.oracle_residual(report.x, 1.0, f) < 1e-8
    assert report.to_dict()['N'] == 32


def test_refinement_agreement():
    f = ExpressionService.parse("cos(s)")
    coarse = SolverService.solve_nonresonant(f, 1.0, SolverOptions(N=48))
    fine = SolverService.solve_nonresonant(f, 1.0, SolverOptions(N=96))
    assert coarse.converged and fine.converged
    assert VerifyService.sup_distance(coarse.x, fine.x) < 1e-8


def test_picard_and_newton_agree():
    f = ExpressionService.parse("cos(s)")
    picard = SolverService.solve_nonresonant(f, 1.0, SolverOptions(N=24, mode='picard'))
    newton = SolverService.solve_nonresonant(f, 1.0, SolverOptions(N=24, mode='newton'))
    assert picard.converged and newton.converged
    assert picard.mode == 'picard' and newton.mode == 'newton'
    assert VerifyService.sup_distance(picard.x, newton.x) < 1e-8


def test_epsilon_scales_forcing():
    f = ExpressionService.parse("cos(s)")
    report = SolverService.solve_nonresonant(f, 3.5, SolverOptions(N=12), epsilon=0.1)
    assert report.converged
    value = report.x.coeffs[0]
    assert 3.5 * value == pytest.approx(0.1 * math.cos(value), abs=1e-12)
    assert report.epsilon == 0.1


def test_honest_nonconvergence(caplog):
    f = ExpressionService.parse("cos(s)")
    with caplog.at_level('WARNING'):
        report = SolverService.solve_nonresonant(f, 1.0, SolverOptions(N=8, mode='picard', max_iters=2))
    assert not report.converged
    assert report.iterations == 2
    assert "did not converge" in caplog.text


def test_nonresonant_refuses_resonant_mu():
    with pytest.raises(ResonanceError):
        SolverService.solve_nonresonant(ExpressionService.parse("tanh(s)"), 2.0)


def test_resonant_k0_recovers_constant_root():
    f = ExpressionService.parse("tanh(s) - 0.3")
    report = SolverService.solve(f, mu=0.0, opts=SolverOptions(N=16))
    assert report.k == 0
    assert report.converged
    assert report.alpha == pytest.approx(math.atanh(0.3), abs=1e-8)
    assert VerifyService.sup_distance(report.x, LegendreSeries([math.atanh(0.3)])) < 1e-8
    assert report.aux_residual < 1e-10


def test_resonant_odd_nonlinearity_k1():
    f = ExpressionService.parse("atan(s)")
    report = SolverService.solve_resonant(f, 1, SolverOptions(N=32, alpha0=1.0))
    assert report.converged
    assert report.aux_residual < 1e-10
    assert report.residual_coeff <= 1e-10
    assert VerifyService.oracle_residual(report.x, 2.0, f) < 1e-8


def test_resonant_trivial_solution():
    report = SolverService.solve_resonant(ExpressionService.parse("tanh(s)"), 0, SolverOptions(N=8))
    assert report.converged
    assert report.x.max_abs() == 0.0


def test_resonant_refusal_and_override():
    f = ExpressionService.parse("1/(1 + s^2) + 1")
    with pytest.raises(SolvabilityRefusedError) as excinfo:
        SolverService.solve_resonant(f, 0, SolverOptions(N=8))
    assert excinfo.value.verdict is not None
    assert excinfo.value.verdict.to_dict()['verdict'] == 'not_established'

    report = SolverService.solve_resonant(
        f, 0, SolverOptions(N=8, mode='picard', max_iters=50, override_solvability=True))
    assert not report.converged
    assert np.all(np.isfinite(report.x.coeffs))


def test_resonant_refuses_unestablished_limits():
    with pytest.raises(SolvabilityRefusedError):
        SolverService.solve_resonant(ExpressionService.parse("s^3 - s"), 1, SolverOptions(N=8))


def test_resonant_argument_checks():
    f = ExpressionService.parse("tanh(s)")
    with pytest.raises(ValueError):
        SolverService.solve_resonant(f, 9, SolverOptions(N=8))
    with pytest.raises(ValueError, match="epsilon"):
        SolverService.solve_resonant(f, 0, SolverOptions(N=8), epsilon=0.0)
    with pytest.raises(ValueError):
        SolverService.solve(f)


def test_theorem2_box():
    box = SolverService.theorem2_box(ExpressionService.parse("tanh(s) - 0.3"), 0)
    assert box.r == pytest.approx(1.3, abs=1e-6)
    assert box.alpha0 == pytest.approx(box.r + 1.0)
    assert box.delta == pytest.approx(box.alpha0 + box.r)
    assert box.J1 > 0 > box.J2
    assert box.to_dict()['b1'] is None

    with pytest.raises(SolvabilityRefusedError):
        SolverService.theorem2_box(ExpressionService.parse("1"), 1)


def test_with_truncation():
    opts = SolverOptions(N=16, quad_order=40, x0=LegendreSeries([1.0, 2.0]))
    refined = SolverService.with_truncation(opts, 32)
    assert refined.N == 32
    assert refined.quad_order == 80
    assert refined.x0.N == 32
    assert SolverService.with_truncation(SolverOptions(N=16), 32).quad_order is None


@pytest.mark.parametrize('expression,k,alpha0', [
    ("tanh(s) - 0.3", 0, None),
    ("atan(s)", 1, 1.0),
])
def test_resonant_refinement_agreement(expression, k, alpha0):
    f = ExpressionService.parse(expression)
    coarse = SolverService.solve_resonant(f, k, SolverOptions(N=64, alpha0=alpha0))
    fine = SolverService.solve_resonant(f, k, SolverOptions(N=128, alpha0=alpha0))
    assert coarse.converged and fine.converged
    assert VerifyService.oracle_residual(coarse.x, k * (k + 1), f) < 1e-8
    assert VerifyService.sup_distance(coarse.x, fine.x) < 1e-7


@pytest.mark.parametrize('alpha0', [None, 1.0, -2.0])
def test_resonant_k1_converges_from_any_start(alpha0):
    f = ExpressionService.parse("atan(s)")
    report = SolverService.solve_resonant(f, 1, SolverOptions(N=32, alpha0=alpha0))
    assert report.converged
    assert report.aux_residual < 1e-10
    assert VerifyService.oracle_residual(report.x, 2.0, f) < 1e-8


def test_resonant_picard_and_newton_agree():
    f = ExpressionService.parse("atan(s)")
    picard = SolverService.solve_resonant(f, 1, SolverOptions(N=32, alpha0=1.0, mode='picard'))
    newton = SolverService.solve_resonant(f, 1, SolverOptions(N=32, alpha0=1.0, mode='newton'))
    assert picard.converged and newton.converged
    assert VerifyService.sup_distance(picard.x, newton.x) < 1e-8
