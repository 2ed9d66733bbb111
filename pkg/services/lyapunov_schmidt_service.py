"""
Lyapunov-Schmidt service for resonant mu = k(k+1): the projections U and E,
the partial inverse M, the sign-region integrals of P_k and the constants
J1, J2 that decide solvability.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from services.basis_service import BasisService, LegendreSeries
from services.errors import LimitNotEstablishedError, RangeError
from services.expr_service import ExpressionService, ScalarFunction
from services.resolvent_service import eigenvalues

logger = logging.getLogger(__name__)

RANGE_TOL = 1e-10
REGION_RULE_POINTS = 32
J_CROSS_CHECK_TOL = 1e-9


def _sign_regions(k: int, roots) -> list[tuple[float, float, int]]:
    """(a, b, sign of P_k on (a, b)) for the k+1 intervals between roots."""
    edges = [-1.0, *roots, 1.0]
    regions = []
    for a, b in zip(edges[:-1], edges[1:]):
        sign = int(np.sign(BasisService.eval_legendre(k, 0.5 * (a + b))))
        regions.append((a, b, sign))
    return regions


@dataclass(frozen=True)
class ResonantContext:
    """Kernel data for mu = k(k+1)."""

    k: int
    mu: float
    N: int
    sign_integral_pos: float
    sign_integral_neg: float
    roots_of_Pk: tuple

    @property
    def regions(self) -> list[tuple[float, float, int]]:
        return _sign_regions(self.k, self.roots_of_Pk)

    def to_dict(self) -> dict:
        return {
            'k': self.k,
            'mu': self.mu,
            'N': self.N,
            'sign_integral_pos': self.sign_integral_pos,
            'sign_integral_neg': self.sign_integral_neg,
            'roots_of_Pk': list(self.roots_of_Pk),
        }


class SolvabilityCase(str, Enum):
    K0_OPPOSITE_SIGNS = 'k0_opposite_signs'
    K_GE1_DISTINCT_LIMITS = 'k_ge1_distinct_limits'
    NOT_ESTABLISHED = 'not_established'


@dataclass(frozen=True)
class SolvabilityVerdict:
    case: SolvabilityCase
    J1: float
    J2: float

    @property
    def established(self) -> bool:
        return self.case is not SolvabilityCase.NOT_ESTABLISHED

    def to_dict(self) -> dict:
        return {'verdict': self.case.value, 'J1': self.J1, 'J2': self.J2}


class LyapunovSchmidtService:
    """Projection scheme and Landesman-Lazer constants for the resonant case."""

    @staticmethod
    def _check_index(x: LegendreSeries, k: int):
        if k < 0 or k > x.N:
            raise ValueError(f"resonant index k={k} exceeds truncation N={x.N}")

    @staticmethod
    def project_U(x: LegendreSeries, k: int) -> LegendreSeries:
        """
        Projection onto ker(L) = span{P_k}: keeps coefficient k only.

        Args:
            x: Series with N >= k
            k: Resonant index

        Returns:
            LegendreSeries: x_k P_k
        """
        LyapunovSchmidtService._check_index(x, k)
        coeffs = np.zeros_like(x.coeffs)
        coeffs[k] = x.coeffs[k]
        return LegendreSeries(coeffs)

    @staticmethod
    def project_E(x: LegendreSeries, k: int) -> LegendreSeries:
        """E = I - U: zeroes coefficient k."""
        LyapunovSchmidtService._check_index(x, k)
        coeffs = x.coeffs.copy()
        coeffs[k] = 0.0
        return LegendreSeries(coeffs)

    @staticmethod
    def partial_inverse_diagonal(k: int, N: int) -> np.ndarray:
        """1 / (mu - l(l+1)) for l != k, 0 at l = k."""
        diagonal = k * (k + 1.0) - eigenvalues(N)
        inverse = np.zeros(N + 1)
        mask = np.arange(N + 1) != k
        inverse[mask] = 1.0 / diagonal[mask]
        return inverse

    @staticmethod
    def apply_M(h: LegendreSeries, k: int) -> LegendreSeries:
        """
        Partial inverse of L on Im(L) = {h : <h, P_k> = 0}.

        Args:
            h: Right-hand side with |h_k| <= 1e-10
            k: Resonant index

        Returns:
            LegendreSeries: M h, coefficient k zero

        Raises:
            RangeError: If h has a kernel component
        """
        if k <= h.N and abs(h.coeffs[k]) > RANGE_TOL:
            raise RangeError(f"right-hand side not in Im(L): coefficient {k} is {h.coeffs[k]!r}")
        return LegendreSeries(h.coeffs * LyapunovSchmidtService.partial_inverse_diagonal(k, h.N))

    @staticmethod
    def build_context(k: int, N: int) -> ResonantContext:
        """
        Roots of P_k and the integrals of P_k over {P_k > 0} and {P_k < 0}.

        Each interval between consecutive roots is integrated with a mapped
        32-point Gauss rule; its sign comes from P_k at the midpoint.
        """
        if k < 0:
            raise ValueError("resonant index must be nonnegative")
        if N < k:
            raise ValueError(f"truncation N={N} below resonant index k={k}")
        roots = tuple(float(r) for r in BasisService.gauss_rule(k).nodes) if k >= 1 else ()
        rule = BasisService.gauss_rule(REGION_RULE_POINTS)
        positive = negative = 0.0
        for a, b, sign in _sign_regions(k, roots):
            nodes, weights = rule.mapped(a, b)
            integral = float(np.dot(weights, BasisService.eval_legendre(k, nodes)))
            if sign > 0:
                positive += integral
            else:
                negative += integral
        return ResonantContext(k=k, mu=float(k * (k + 1)), N=N, sign_integral_pos=positive,
                               sign_integral_neg=negative, roots_of_Pk=roots)

    @staticmethod
    def kernel_integral(ctx: ResonantContext, f: ScalarFunction, alpha: float,
                        w: LegendreSeries = None) -> float:
        """
        int f(alpha P_k + w) P_k dt, piecewise over the sign regions of P_k.
        """
        rule = BasisService.gauss_rule(REGION_RULE_POINTS)
        total = 0.0
        for a, b, _ in ctx.regions:
            nodes, weights = rule.mapped(a, b)
            p = BasisService.eval_legendre(ctx.k, nodes)
            argument = alpha * p
            if w is not None:
                argument = argument + BasisService.synthesize(w, nodes)
            total += float(np.dot(weights, ExpressionService.evaluate(f, argument) * p))
        return total

    @staticmethod
    def limit_integrals(ctx: ResonantContext, f: ScalarFunction) -> tuple[float, float]:
        """
        The alpha -> +inf and alpha -> -inf limits of int f(alpha P_k + w) P_k dt:
        f(inf) I+ + f(-inf) I- and f(inf) I- + f(-inf) I+.
        """
        lower, upper = ExpressionService.limits_at_infinity(f)
        if not (np.isfinite(lower) and np.isfinite(upper)):
            raise LimitNotEstablishedError("limits at infinity must be finite")
        pos, neg = ctx.sign_integral_pos, ctx.sign_integral_neg
        return upper * pos + lower * neg, upper * neg + lower * pos

    @staticmethod
    def compute_J(ctx: ResonantContext, f: ScalarFunction) -> tuple[float, float]:
        """
        Landesman-Lazer constants (J1, J2).

        For k >= 1 these are the two-region integrals, cross-checked against
        J1 = -J2 = I+ (f(inf) - f(-inf)). For k = 0 they are (f(inf), f(-inf)).

        Raises:
            LimitNotEstablishedError: If f's limits are not established
            RuntimeError: If the cross-check fails
        """
        J1, J2 = LyapunovSchmidtService.limit_integrals(ctx, f)
        lower, upper = ExpressionService.limits_at_infinity(f)
        if ctx.k == 0:
            return upper, lower

        expected = ctx.sign_integral_pos * (upper - lower)
        scale = max(1.0, abs(expected))
        if abs(J1 - expected) > J_CROSS_CHECK_TOL * scale or abs(J2 + expected) > J_CROSS_CHECK_TOL * scale:
            logger.error("J cross-check failed for k=%i: J1=%r J2=%r expected %r", ctx.k, J1, J2, expected)
            raise RuntimeError("sign-region integrals inconsistent with the k >= 1 simplification")
        return J1, J2

    @staticmethod
    def solvability_check(ctx: ResonantContext, f: ScalarFunction) -> SolvabilityVerdict:
        """
        Sign-condition verdict: k = 0 needs f(-inf) f(inf) < 0; k >= 1 needs
        f(-inf) != f(inf). not_established means the criterion is silent.
        """
        J1, J2 = LyapunovSchmidtService.compute_J(ctx, f)
        if ctx.k == 0:
            case = SolvabilityCase.K0_OPPOSITE_SIGNS if J1 * J2 < 0 else SolvabilityCase.NOT_ESTABLISHED
        else:
            lower, upper = ExpressionService.limits_at_infinity(f)
            case = SolvabilityCase.K_GE1_DISTINCT_LIMITS if lower != upper else SolvabilityCase.NOT_ESTABLISHED
        return SolvabilityVerdict(case=case, J1=J1, J2=J2)
