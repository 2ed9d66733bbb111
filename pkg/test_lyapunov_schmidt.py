"""
Tests for the resonant projections, partial inverse and solvability constants.
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.basis_service import LegendreSeries
from services.errors import LimitNotEstablishedError, RangeError
from services.expr_service import ExpressionService
from services.lyapunov_schmidt_service import LyapunovSchmidtService, SolvabilityCase
from services.resolvent_service import ResolventService

LS = LyapunovSchmidtService


def _random_series(rng, N=20):
    return LegendreSeries(rng.standard_normal(N + 1))


def test_projection_examples():
    x = LegendreSeries.basis_vector(3, 6, scale=3.0) + LegendreSeries.basis_vector(4, 6)
    assert_allclose(LS.project_U(x, 3).coeffs, LegendreSeries.basis_vector(3, 6, scale=3.0).coeffs)
    assert LS.project_U(LegendreSeries.basis_vector(2, 6), 3).max_abs() == 0.0
    assert LS.project_E(LegendreSeries.basis_vector(3, 6), 3).max_abs() == 0.0
    x = LegendreSeries.basis_vector(2, 4) + LegendreSeries.basis_vector(0, 4)
    assert_allclose(LS.project_E(x, 2).coeffs, [1, 0, 0, 0, 0])


def test_projection_algebra_is_exact():
    rng = np.random.default_rng(17)
    for _ in range(100):
        x = _random_series(rng)
        k = int(rng.integers(0, 21))
        u, e = LS.project_U(x, k), LS.project_E(x, k)
        assert np.array_equal(LS.project_U(u, k).coeffs, u.coeffs)
        assert np.array_equal(LS.project_E(e, k).coeffs, e.coeffs)
        assert LS.project_U(e, k).max_abs() == 0.0
        assert LS.project_E(u, k).max_abs() == 0.0
        assert np.array_equal((u + e).coeffs, x.coeffs)


def test_projection_requires_k_within_truncation():
    with pytest.raises(ValueError):
        LS.project_U(LegendreSeries([1.0, 2.0]), 3)


def test_apply_M_examples():
    h = LegendreSeries([1.0, 0.0, 0.0])
    assert_allclose(LS.apply_M(h, 1).coeffs, [0.5, 0.0, 0.0])
    with pytest.raises(RangeError, match="right-hand side not in Im"):
        LS.apply_M(LegendreSeries([0.0, 1.0, 0.0]), 1)
    LS.apply_M(LegendreSeries([0.0, 1e-11, 0.0]), 1)


def test_partial_inverse_identities():
    rng = np.random.default_rng(23)
    for _ in range(100):
        k = int(rng.integers(0, 21))
        mu = k * (k + 1)
        h = LS.project_E(_random_series(rng), k)
        assert (ResolventService.apply_L(LS.apply_M(h, k), mu) - h).max_abs() < 1e-12
        x = _random_series(rng)
        mlx = LS.apply_M(ResolventService.apply_L(x, mu), k)
        assert (mlx - LS.project_E(x, k)).max_abs() < 1e-12


def test_context_sign_integrals():
    ctx = LS.build_context(0, 4)
    assert ctx.sign_integral_pos == pytest.approx(2.0, abs=1e-14)
    assert ctx.sign_integral_neg == 0.0
    assert ctx.roots_of_Pk == ()

    ctx = LS.build_context(1, 4)
    assert abs(ctx.sign_integral_pos - 0.5) < 1e-12
    assert_allclose(ctx.roots_of_Pk, [0.0], atol=1e-15)

    ctx = LS.build_context(2, 4)
    antiderivative = lambda t: (t ** 3 - t) / 2
    expected = 2 * (antiderivative(1.0) - antiderivative(1 / math.sqrt(3)))
    assert abs(ctx.sign_integral_pos - expected) < 1e-10
    assert abs(ctx.sign_integral_pos - 2 / (3 * math.sqrt(3))) < 1e-10


def test_context_invariants_up_to_k_60():
    for k in range(1, 61):
        ctx = LS.build_context(k, k)
        assert len(ctx.roots_of_Pk) == k
        assert np.all(np.diff(ctx.roots_of_Pk) > 0)
        assert ctx.sign_integral_pos > 0
        if k <= 20:
            assert abs(ctx.sign_integral_pos + ctx.sign_integral_neg) < 1e-10


def test_context_rejects_small_truncation():
    with pytest.raises(ValueError):
        LS.build_context(3, 2)


def test_compute_J_examples():
    tanh = ExpressionService.parse("tanh(s)")
    atan = ExpressionService.parse("atan(s)")
    assert LS.compute_J(LS.build_context(0, 4), tanh) == (1.0, -1.0)

    J1, J2 = LS.compute_J(LS.build_context(1, 4), atan)
    assert J1 == pytest.approx(0.5 * math.pi, abs=1e-6)
    assert J2 == pytest.approx(-0.5 * math.pi, abs=1e-6)

    even = ExpressionService.parse("1/(1 + s^2)")
    J1, J2 = LS.compute_J(LS.build_context(3, 4), even)
    assert abs(J1) < 1e-12 and abs(J2) < 1e-12


def test_J_antisymmetry():
    for text in ("tanh(s)", "atan(s)"):
        f = ExpressionService.parse(text)
        for k in range(1, 8):
            J1, J2 = LS.compute_J(LS.build_context(k, k), f)
            assert abs(J1 + J2) < 1e-9


def test_compute_J_needs_limits():
    with pytest.raises(LimitNotEstablishedError):
        LS.compute_J(LS.build_context(1, 2), ExpressionService.parse("s^3"))


def test_solvability_verdicts():
    verdict = LS.solvability_check(LS.build_context(0, 4), ExpressionService.parse("tanh(s) - 0.3"))
    assert verdict.case is SolvabilityCase.K0_OPPOSITE_SIGNS
    assert verdict.established

    verdict = LS.solvability_check(LS.build_context(2, 4), ExpressionService.parse("atan(s)"))
    assert verdict.case is SolvabilityCase.K_GE1_DISTINCT_LIMITS

    verdict = LS.solvability_check(LS.build_context(0, 4), ExpressionService.parse("1/(1 + s^2) + 1"))
    assert verdict.case is SolvabilityCase.NOT_ESTABLISHED
    assert verdict.to_dict()['verdict'] == 'not_established'


def test_kernel_integral_approaches_limits():
    f = ExpressionService.parse("tanh(s)")
    rng = np.random.default_rng(31)
    for k in (0, 1, 2):
        ctx = LS.build_context(k, 6)
        upper, lower = LS.limit_integrals(ctx, f)
        coeffs = rng.uniform(-1, 1, 7)
        coeffs[k] = 0.0
        w = LegendreSeries(coeffs * 10 / np.sum(np.abs(coeffs)))
        assert abs(LS.kernel_integral(ctx, f, 1e6, w) - upper) < 1e-4
        assert abs(LS.kernel_integral(ctx, f, -1e6, w) - lower) < 1e-4


def test_kernel_integral_k1_odd_nonlinearity():
    ctx = LS.build_context(1, 2)
    f = ExpressionService.parse("s^3 - s")
    alpha = 1.3
    assert LS.kernel_integral(ctx, f, alpha) == pytest.approx(0.4 * alpha ** 3 - 2 / 3 * alpha, abs=1e-13)
