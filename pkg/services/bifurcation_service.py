"""
Bifurcation service for the weakly nonlinear problem L x = eps f(x) at
mu = k(k+1): the bifurcation function H(alpha) = int P_k f(alpha P_k) dt,
its simple roots, and continuation of the branch x_eps from alpha0 P_k.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import bisect

from services.basis_service import BasisService, LegendreSeries, SpectralGrid
from services.errors import EvaluationError
from services.expr_service import ExpressionService, ScalarFunction
from services.lyapunov_schmidt_service import LyapunovSchmidtService
from services.solver_service import SolverOptions
from services.verify_service import ORACLE_FACTOR, VerifyService

logger = logging.getLogger(__name__)

H_RULE_POINTS = 128
CRITERION_RULE_POINTS = 256
ROOT_TOL = 1e-12
SIMPLE_TOL = 1e-8
POLISH_STEPS = 8
DEDUPE_TOL = 1e-9
CORRECTOR_MAX_ITERS = 30
STEP_TOL = 1e-14


@dataclass(frozen=True)
class BranchPoint:
    epsilon: float
    x: LegendreSeries
    alpha: float
    residual_grid: float
    newton_iters: int
    distance_to_xbar: float

    def to_dict(self) -> dict:
        return {
            'epsilon': self.epsilon,
            'alpha': self.alpha,
            'residual_grid': self.residual_grid,
            'newton_iters': self.newton_iters,
            'sup_distance_to_xbar': self.distance_to_xbar,
            'coefficients': self.x.to_list(),
        }


@dataclass(frozen=True)
class BranchReport:
    """Solutions x_eps along a branch, ordered by eps."""

    alpha0: float
    k: int
    dH_alpha0: float
    points: list = field(default_factory=list)
    convergence_rate_estimate: Optional[float] = None
    loglog_slope: Optional[float] = None
    monotone_distance: bool = True
    truncated_at: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.truncated_at

    def to_dict(self) -> dict:
        return {
            'alpha0': self.alpha0,
            'k': self.k,
            'dH_alpha0': self.dH_alpha0,
            'convergence_rate_estimate': self.convergence_rate_estimate,
            'loglog_slope': self.loglog_slope,
            'monotone_distance': self.monotone_distance,
            'truncated_at': list(self.truncated_at),
            'points': [point.to_dict() for point in self.points],
        }


@dataclass(frozen=True)
class KernelCriterion:
    """int t f(alpha t) dt for k = 1 and whether f(alpha) != f(-alpha)."""

    integral: float
    odd_part_nonzero: bool


def _h_rule(k: int):
    return BasisService.gauss_rule(max(H_RULE_POINTS, 2 * k + 8))


def _slope(d1: float, d2: float, e1: float, e2: float) -> Optional[float]:
    if d1 <= 0 or d2 <= 0 or e1 == e2:
        return None
    return (math.log(d2) - math.log(d1)) / (math.log(e2) - math.log(e1))


class _BranchCorrector:
    """
    Newton on the split system in y = (v, alpha), alpha stored at index k:
    rows l != k read v_l - eps m_l F_l(y) = 0, row k reads F_k(y) = 0,
    with F = P f(S y) and m the partial inverse of L.
    """

    def __init__(self, f: ScalarFunction, k: int, opts: SolverOptions):
        self.f = f
        self.k = k
        self.opts = opts
        self.grid = SpectralGrid(opts.N, opts.resolved_quad_order)
        self.inverse = LyapunovSchmidtService.partial_inverse_diagonal(k, opts.N)

    def _forcing(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        result = ExpressionService.evaluate_dual(self.f, self.grid.synthesis @ y)
        F = self.grid.projection @ np.asarray(result.value, dtype=np.float64)
        A = self.grid.projection @ (np.asarray(result.deriv)[:, None] * self.grid.synthesis)
        return F, A

    def residual_and_jacobian(self, y: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
        F, A = self._forcing(y)
        R = y - epsilon * self.inverse * F
        R[self.k] = F[self.k]
        J = np.eye(len(y)) - epsilon * self.inverse[:, None] * A
        J[self.k, :] = A[self.k, :]
        return R, J

    def correct(self, y: np.ndarray, epsilon: float) -> tuple[np.ndarray, int, bool]:
        target = self.opts.tol_residual * 1e-2
        for iteration in range(CORRECTOR_MAX_ITERS + 1):
            R, J = self.residual_and_jacobian(y, epsilon)
            size = float(np.max(np.abs(R)))
            if not np.isfinite(size):
                return y, iteration, False
            if size <= target:
                return y, iteration, True
            if iteration == CORRECTOR_MAX_ITERS:
                break
            lu, piv = lu_factor(J, check_finite=False)
            step = lu_solve((lu, piv), -R, check_finite=False)
            y = y + step
            if np.max(np.abs(step)) <= STEP_TOL * (1.0 + np.max(np.abs(y))):
                return y, iteration + 1, True
        logger.warning('branch corrector did not converge at eps=%r, residual is %s', epsilon, size)
        return y, CORRECTOR_MAX_ITERS, False


class BifurcationService:
    """Bifurcation function, simple roots and branch continuation."""

    @staticmethod
    def bifurcation_H(f: ScalarFunction, k: int, alpha: float) -> float:
        """
        H(alpha) = int_{-1}^{1} P_k(t) f(alpha P_k(t)) dt.

        Args:
            f: Nonlinearity
            k: Resonant index
            alpha: Kernel amplitude

        Returns:
            float: Quadrature value on a 128-point rule (more for large k)
        """
        rule = _h_rule(k)
        p = BasisService.eval_legendre(k, rule.nodes)
        return rule.integrate(p * ExpressionService.evaluate(f, alpha * p))

    @staticmethod
    def bifurcation_dH(f: ScalarFunction, k: int, alpha: float) -> float:
        """dH/dalpha = int P_k^2 f'(alpha P_k) dt."""
        rule = _h_rule(k)
        p = BasisService.eval_legendre(k, rule.nodes)
        derivs = ExpressionService.evaluate_dual(f, alpha * p).deriv
        return rule.integrate(p * p * derivs)

    @staticmethod
    def find_simple_roots(f: ScalarFunction, k: int, interval: tuple[float, float] = (-20.0, 20.0),
                          grid: int = 400) -> list[tuple[float, float]]:
        """
        Scan H on a uniform grid, bisect each sign change and polish with
        Newton. Roots with |dH| <= 1e-8 are discarded as not simple.

        Args:
            f: Nonlinearity
            k: Resonant index
            interval: Scan interval (a, b), a < b
            grid: Number of scan points, at least 2

        Returns:
            list: (alpha0, dH(alpha0)) pairs, strictly increasing in alpha0
        """
        a, b = float(interval[0]), float(interval[1])
        if not a < b:
            raise ValueError("root interval must satisfy a < b")
        if grid < 2:
            raise ValueError("root grid must have at least 2 points")

        def H(alpha):
            return BifurcationService.bifurcation_H(f, k, alpha)

        points = np.linspace(a, b, int(grid))
        values = []
        for alpha in points:
            try:
                values.append(H(alpha))
            except EvaluationError as e:
                logger.warning('H undefined at alpha=%r: %s', alpha, e)
                values.append(float('nan'))

        candidates = []
        for i, (alpha, value) in enumerate(zip(points, values)):
            if value == 0.0:
                candidates.append(float(alpha))
            if i + 1 < len(points):
                upper = values[i + 1]
                if np.isfinite(value) and np.isfinite(upper) and value * upper < 0:
                    candidates.append(bisect(H, alpha, points[i + 1], xtol=1e-15, maxiter=200))

        roots = []
        for alpha in candidates:
            slope = BifurcationService.bifurcation_dH(f, k, alpha)
            if abs(slope) <= SIMPLE_TOL:
                logger.debug('root at alpha=%r not simple at tolerance (dH=%r)', alpha, slope)
                continue
            for _ in range(POLISH_STEPS):
                value = H(alpha)
                if abs(value) <= ROOT_TOL * 1e-3:
                    break
                polished = alpha - value / slope
                if not (a <= polished <= b) or abs(H(polished)) > abs(value):
                    break
                alpha = polished
                slope = BifurcationService.bifurcation_dH(f, k, alpha)
            if abs(H(alpha)) > ROOT_TOL * max(1.0, abs(slope)):
                logger.warning('root near alpha=%r did not reach |H| <= %g', alpha, ROOT_TOL)
            if abs(slope) > SIMPLE_TOL:
                roots.append((float(alpha), float(slope)))

        roots.sort()
        unique = []
        for alpha, slope in roots:
            if unique and alpha - unique[-1][0] <= DEDUPE_TOL * max(1.0, abs(alpha)):
                continue
            unique.append((alpha, slope))
        return unique

    @staticmethod
    def odd_kernel_criterion(f: ScalarFunction, alpha: float) -> KernelCriterion:
        """
        k = 1 reading of H(alpha) = 0 on an independent 256-point rule:
        int_{-1}^{1} t f(alpha t) dt, and f(alpha) != f(-alpha).
        """
        rule = BasisService.gauss_rule(CRITERION_RULE_POINTS)
        integral = rule.integrate(rule.nodes * ExpressionService.evaluate(f, alpha * rule.nodes))
        odd = ExpressionService.evaluate(f, alpha) != ExpressionService.evaluate(f, -alpha)
        return KernelCriterion(integral=float(integral), odd_part_nonzero=bool(odd))

    @staticmethod
    def _chain(corrector: _BranchCorrector, xbar: LegendreSeries, epsilons: list[float],
               mu: float) -> tuple[list[BranchPoint], Optional[float]]:
        """Continue from xbar along eps values sorted by |eps|; stop at the first failure."""
        opts = corrector.opts
        y = xbar.coeffs.copy()
        points = []
        for epsilon in epsilons:
            y_new, iters, converged = corrector.correct(y.copy(), epsilon)
            if not converged:
                logger.warning('branch truncated at eps=%r: corrector failed', epsilon)
                return points, epsilon
            x = LegendreSeries(y_new)
            residual = VerifyService.oracle_residual(x, mu, corrector.f, eps_scale=epsilon,
                                                     solver_quad_order=opts.resolved_quad_order)
            if residual >= ORACLE_FACTOR * opts.tol_residual:
                logger.warning('branch truncated at eps=%r: oracle residual %s', epsilon, residual)
                return points, epsilon
            points.append(BranchPoint(epsilon=float(epsilon), x=x, alpha=float(y_new[corrector.k]),
                                      residual_grid=residual, newton_iters=iters,
                                      distance_to_xbar=VerifyService.sup_distance(x, xbar)))
            y = y_new
        return points, None

    @staticmethod
    def continue_branch(f: ScalarFunction, k: int, alpha0: float, eps_grid, opts: SolverOptions = None) -> BranchReport:
        """
        Follow x_eps from xbar = alpha0 P_k through the eps grid.

        Positive and negative eps are continued separately, each outward
        from eps = 0 with the previous point as predictor. A corrector or
        oracle failure truncates that side and is reported.

        Args:
            f: Nonlinearity
            k: Resonant index
            alpha0: Simple root of H
            eps_grid: eps values; 0 is always included
            opts: N, quad_order and tol_residual are used

        Returns:
            BranchReport: Points ordered by eps
        """
        opts = opts or SolverOptions()
        if k < 0 or k > opts.N:
            raise ValueError(f"resonant index k={k} must lie in [0, N={opts.N}]")
        slope = BifurcationService.bifurcation_dH(f, k, alpha0)
        if abs(slope) <= SIMPLE_TOL:
            raise ValueError(f"alpha0={alpha0!r} is not a simple root: |dH| = {abs(slope)!r} <= {SIMPLE_TOL:g}")

        mu = float(k * (k + 1))
        xbar = LegendreSeries.basis_vector(k, opts.N, scale=alpha0)
        corrector = _BranchCorrector(f, k, opts)
        epsilons = sorted({float(e) for e in eps_grid if float(e) != 0.0}, key=abs)
        positive = [e for e in epsilons if e > 0]
        negative = [e for e in epsilons if e < 0]

        origin = BranchPoint(epsilon=0.0, x=xbar, alpha=float(alpha0), newton_iters=0, distance_to_xbar=0.0,
                             residual_grid=VerifyService.oracle_residual(xbar, mu, f, eps_scale=0.0))
        upper, upper_stop = BifurcationService._chain(corrector, xbar, positive, mu)
        lower, lower_stop = BifurcationService._chain(corrector, xbar, negative, mu)
        truncated = [stop for stop in (lower_stop, upper_stop) if stop is not None]

        monotone = all(
            b.distance_to_xbar >= a.distance_to_xbar
            for chain in (upper, lower) for a, b in zip([origin] + chain, chain))
        if not monotone:
            logger.warning('distance to xbar not monotone in |eps| for alpha0=%r; check the eps spacing', alpha0)

        slopes = [s for chain in (upper, lower) for a, b in zip(chain, chain[1:])
                  if (s := _slope(a.distance_to_xbar, b.distance_to_xbar, abs(a.epsilon), abs(b.epsilon))) is not None]
        rate = float(np.median(slopes)) if slopes else None

        fit = [(abs(p.epsilon), p.distance_to_xbar) for p in upper + lower if p.distance_to_xbar > 0]
        loglog = None
        if len({e for e, _ in fit}) >= 2:
            loglog = float(np.polyfit(np.log([e for e, _ in fit]), np.log([d for _, d in fit]), 1)[0])

        points = list(reversed(lower)) + [origin] + upper
        return BranchReport(alpha0=float(alpha0), k=k, dH_alpha0=float(slope), points=points,
                            convergence_rate_estimate=rate, loglog_slope=loglog,
                            monotone_distance=monotone, truncated_at=truncated)

    @staticmethod
    def continue_branches(f: ScalarFunction, k: int, roots, eps_grid, opts: SolverOptions = None,
                          threads: int = 1) -> list[BranchReport]:
        """Continue one branch per root alpha0, up to `threads` at a time; order follows roots."""
        alphas = [float(r[0]) if isinstance(r, (tuple, list)) else float(r) for r in roots]
        if threads <= 1 or len(alphas) <= 1:
            return [BifurcationService.continue_branch(f, k, alpha, eps_grid, opts) for alpha in alphas]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda alpha: BifurcationService.continue_branch(f, k, alpha, eps_grid, opts),
                                 alphas))
