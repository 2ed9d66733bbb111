"""
Verification service: residual certificates computed on a path independent
of the solvers, coefficient-decay diagnostics and refinement cross-checks.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from services.basis_service import BasisService, LegendreSeries
from services.expr_service import ExpressionService, ScalarFunction

logger = logging.getLogger(__name__)

WELL_RESOLVED = 1e-6
REFINEMENT_TOL = 1e-7
ORACLE_FACTOR = 100.0
COMPARISON_POINTS = 401


@dataclass(frozen=True)
class OracleConfig:
    fine_quad_order: Optional[int] = None
    fd_step: float = 1e-6
    refinement_factor: int = 2

    def __post_init__(self):
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.refinement_factor < 2:
            raise ValueError("refinement_factor must be at least 2")

    def resolved_order(self, N: int, solver_quad_order: int = None) -> int:
        """Fine grid size; always above the solver's quadrature order."""
        order = self.fine_quad_order or 4 * N + 32
        if solver_quad_order is not None and order <= solver_quad_order:
            order = solver_quad_order + 1
        return order


class Verdict(str, Enum):
    PASS = 'pass'
    FAIL = 'fail'
    INCONCLUSIVE = 'inconclusive'


@dataclass(frozen=True)
class CrossCheckResult:
    verdict: Verdict
    refined_N: Optional[int]
    refinement_difference: Optional[float]
    oracle_residual: Optional[float]
    reason: str = ''

    def to_dict(self) -> dict:
        return {
            'verdict': self.verdict.value,
            'refined_N': self.refined_N,
            'refinement_difference': self.refinement_difference,
            'oracle_residual': self.oracle_residual,
            'reason': self.reason,
        }


class VerifyService:
    """Independent oracles for claimed solutions."""

    @staticmethod
    def differential_part(x: LegendreSeries, t) -> np.ndarray:
        """
        [(1 - t^2) x']' at interior points, term by term from
        (1 - t^2) P_k' = k (P_{k-1} - t P_k), so that
        [(1 - t^2) P_k']' = k (P_{k-1}' - P_k - t P_k').
        """
        t = np.asarray(t, dtype=np.float64)
        N = x.N
        values = BasisService.legendre_table(N, t)
        derivs = BasisService.legendre_deriv_table(N, t)
        terms = np.zeros_like(values)
        for k in range(1, N + 1):
            terms[k] = k * (derivs[k - 1] - values[k] - t * derivs[k])
        return x.coeffs @ terms

    @staticmethod
    def oracle_residual(x: LegendreSeries, mu: float, f: ScalarFunction, eps_scale: float = 1.0,
                        cfg: OracleConfig = None, solver_quad_order: int = None) -> float:
        """
        sup over a fine Gauss grid of |[(1 - t^2) x']' + mu x - eps f(x)|.

        Args:
            x: Claimed solution
            mu: Linear parameter
            f: Nonlinearity
            eps_scale: Factor in front of f
            cfg: Oracle configuration
            solver_quad_order: Solver grid size the fine grid must exceed

        Returns:
            float: Sup-norm defect
        """
        cfg = cfg or OracleConfig()
        nodes = BasisService.gauss_rule(cfg.resolved_order(x.N, solver_quad_order)).nodes
        x_values = BasisService.synthesize(x, nodes)
        operator_values = VerifyService.differential_part(x, nodes) + mu * x_values
        defect = operator_values - eps_scale * np.asarray(ExpressionService.evaluate(f, x_values))
        return float(np.max(np.abs(defect)))

    @staticmethod
    def decay_diagnostic(x: LegendreSeries) -> float:
        """
        max |c_k| over the top quarter of indices divided by max |c_k|.

        Values <= 1e-6 indicate a well-resolved series.
        """
        if x.N < 8:
            raise ValueError("decay diagnostic needs N >= 8")
        magnitudes = np.abs(x.coeffs)
        overall = float(np.max(magnitudes))
        if overall == 0.0:
            return 0.0
        return float(np.max(magnitudes[(3 * x.N) // 4:]) / overall)

    @staticmethod
    def is_well_resolved(x: LegendreSeries) -> bool:
        return VerifyService.decay_diagnostic(x) <= WELL_RESOLVED

    @staticmethod
    def sup_distance(a: LegendreSeries, b: LegendreSeries, points: int = COMPARISON_POINTS) -> float:
        """Sup-norm distance sampled on uniform points."""
        t = BasisService.uniform_points(points)
        return float(np.max(np.abs(BasisService.synthesize(a, t) - BasisService.synthesize(b, t))))

    @staticmethod
    def cross_check(report, problem, cfg: OracleConfig = None) -> CrossCheckResult:
        """
        Re-solve at refinement_factor * N and compare.

        Args:
            report: SolutionReport claimed converged
            problem: ProblemSpec that produced it
            cfg: Oracle configuration

        Returns:
            CrossCheckResult: pass iff the refined solution is within 1e-7 and
                the oracle residual is below 100 * tol
        """
        cfg = cfg or OracleConfig()
        if not report.converged:
            return CrossCheckResult(Verdict.INCONCLUSIVE, None, None, None, 'report did not converge')

        tol = problem.options.tol_residual
        residual = VerifyService.oracle_residual(report.x, problem.mu, problem.f, problem.epsilon, cfg,
                                                 problem.options.resolved_quad_order)
        refined_problem = problem.refined(cfg.refinement_factor)
        try:
            refined = refined_problem.solve()
        except (ValueError, RuntimeError) as e:
            logger.warning("refinement re-solve failed: %s", e)
            return CrossCheckResult(Verdict.INCONCLUSIVE, refined_problem.options.N, None, residual,
                                    f'refined solve failed: {e}')
        if not refined.converged:
            return CrossCheckResult(Verdict.INCONCLUSIVE, refined_problem.options.N, None, residual,
                                    'refined solve did not converge')

        difference = VerifyService.sup_distance(report.x, refined.x)
        passed = difference < REFINEMENT_TOL and residual < ORACLE_FACTOR * tol
        reason = '' if passed else (
            f'refinement difference {difference:.3e}' if difference >= REFINEMENT_TOL
            else f'oracle residual {residual:.3e}')
        return CrossCheckResult(Verdict.PASS if passed else Verdict.FAIL, refined_problem.options.N,
                                difference, residual, reason)
