"""
Solver service: nonlinear solves of [(1 - t^2) x']' + mu x = eps f(x).

Non-resonant mu uses damped Picard iteration on x = L^{-1} F(x); resonant
mu = k(k+1) iterates the fixed-point map H(x, alpha) of the Lyapunov-Schmidt
splitting. Both can finish (or fall back to) Newton on the Galerkin system.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from services.basis_service import BasisService, LegendreSeries, SpectralGrid
from services.errors import (BoxNotLocatedError, LimitNotEstablishedError, ResonanceError,
                             SolvabilityRefusedError)
from services.expr_service import ExpressionService, NonlinearOperatorF, ScalarFunction
from services.lyapunov_schmidt_service import LyapunovSchmidtService, ResonantContext
from services.resolvent_service import LinearOperatorL, ResolventService
from services.verify_service import VerifyService

logger = logging.getLogger(__name__)

MODES = ('picard', 'newton', 'auto')
POLISH_THRESHOLD = 1e-6
SINGULAR_PIVOT = 1e-14
BOX_ALPHA_MAX = 1e6
BOX_GRID = 241


@dataclass(frozen=True)
class SolverOptions:
    N: int = 64
    quad_order: Optional[int] = None
    damping: float = 0.5
    tol_residual: float = 1e-10
    max_iters: int = 500
    mode: str = 'auto'
    x0: Optional[LegendreSeries] = None
    alpha0: Optional[float] = None
    override_solvability: bool = False

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0:
            raise ValueError("N must be a nonnegative integer")
        if self.quad_order is not None and self.quad_order < self.N + 1:
            raise ValueError("quadrature order below truncation")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.tol_residual <= 0:
            raise ValueError("tol must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of: {', '.join(MODES)}")

    @property
    def resolved_quad_order(self) -> int:
        return self.quad_order if self.quad_order is not None else 2 * self.N + 16


@dataclass(frozen=True)
class SolutionReport:
    x: LegendreSeries
    mu: float
    residual_coeff: float
    residual_grid: float
    iterations: int
    converged: bool
    coefficient_decay: Optional[float]
    mode: str
    epsilon: float = 1.0
    k: Optional[int] = None
    alpha: Optional[float] = None
    aux_residual: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            'mu': self.mu,
            'k': self.k,
            'epsilon': self.epsilon,
            'N': self.x.N,
            'alpha': self.alpha,
            'aux_residual': self.aux_residual,
            'residual_coeff': self.residual_coeff,
            'residual_grid': self.residual_grid,
            'iterations': self.iterations,
            'converged': self.converged,
            'coefficient_decay': self.coefficient_decay,
            'mode': self.mode,
        }


@dataclass(frozen=True)
class InvariantBox:
    """Radius r = sup |f|, kernel amplitude alpha0 and half-width delta of the box {|alpha| <= delta}."""

    r: float
    alpha0: float
    delta: float
    J1: float
    J2: float

    def to_dict(self) -> dict:
        # b1 bounds ||x|| in the box and has no sharp computable value
        return {'r': self.r, 'alpha0': self.alpha0, 'delta': self.delta,
                'J1': self.J1, 'J2': self.J2, 'b1': None}


class _GalerkinSystem:
    """G(c) = d * c - P (eps f(S c)) with d_k = mu - k(k+1)."""

    def __init__(self, f: ScalarFunction, mu: float, opts: SolverOptions, epsilon: float):
        self.grid = SpectralGrid(opts.N, opts.resolved_quad_order)
        self.operator = NonlinearOperatorF(f, self.grid, epsilon)
        self.diagonal = LinearOperatorL(mu=mu, N=opts.N).diagonal

    def forcing(self, c: np.ndarray) -> np.ndarray:
        return self.operator.coefficients(c)

    def residual(self, c: np.ndarray) -> np.ndarray:
        return self.diagonal * c - self.forcing(c)

    def jacobian(self, c: np.ndarray) -> np.ndarray:
        _, derivs = self.operator.values_and_derivatives(c)
        coupling = self.grid.projection @ (derivs[:, None] * self.grid.synthesis)
        return np.diag(self.diagonal) - coupling


def _max_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v)))


def _newton(system: _GalerkinSystem, c: np.ndarray, tol: float, max_iters: int,
            fallback: Callable[[np.ndarray, int], tuple]) -> tuple[np.ndarray, int, bool]:
    """
    Dense Newton with LU and partial pivoting. A numerically singular
    Jacobian hands the iterate to `fallback(c, remaining_iters)`.
    """
    previous = c
    for iteration in range(max_iters + 1):
        g = system.residual(c)
        residual = _max_norm(g)
        if not np.isfinite(residual):
            logger.warning('Newton got nan after %i iterations...', iteration)
            return previous, iteration, False
        previous = c
        if residual <= tol:
            return c, iteration, True
        if iteration == max_iters:
            break
        lu, piv = lu_factor(system.jacobian(c), check_finite=False)
        pivots = np.abs(np.diag(lu))
        if np.min(pivots) <= SINGULAR_PIVOT * max(np.max(pivots), 1.0):
            logger.warning('Newton Jacobian singular after %i iterations; falling back to Picard', iteration)
            c, more, converged = fallback(c, max_iters - iteration)
            return c, iteration + more, converged
        c = c + lu_solve((lu, piv), -g, check_finite=False)
    logger.warning('Newton did not converge after %i iterations, residual is %s', max_iters, residual)
    return c, max_iters, False


class SolverService:
    """Nonlinear solvers for the invertible and resonant regimes."""

    @staticmethod
    def residual(x: LegendreSeries, mu: float, f: ScalarFunction, quad_order: int = None,
                 epsilon: float = 1.0) -> tuple[float, float]:
        """
        Coefficient and grid residuals of L x = eps f(x).

        Args:
            x: Candidate solution
            mu: Linear parameter
            f: Nonlinearity
            quad_order: Grid size (default 2N + 16)
            epsilon: Factor in front of f

        Returns:
            tuple: (residual_coeff, residual_grid)
        """
        N = x.N
        rule = BasisService.gauss_rule(quad_order or 2 * N + 16)
        x_values = BasisService.synthesize(x, rule.nodes)
        forcing = epsilon * np.asarray(ExpressionService.evaluate(f, x_values), dtype=np.float64)
        lx = ResolventService.apply_L(x, mu)
        residual_coeff = (lx - BasisService.project(forcing, rule, N)).max_abs()
        residual_grid = float(np.max(np.abs(BasisService.synthesize(lx, rule.nodes) - forcing)))
        return residual_coeff, residual_grid

    @staticmethod
    def _initial_iterate(opts: SolverOptions) -> np.ndarray:
        if opts.x0 is None:
            return np.zeros(opts.N + 1)
        return opts.x0.resized(opts.N).coeffs.copy()

    @staticmethod
    def _report(c: np.ndarray, mu: float, f: ScalarFunction, opts: SolverOptions, epsilon: float,
                iterations: int, converged: bool, k: int = None, aux: float = None) -> SolutionReport:
        x = LegendreSeries(c)
        residual_coeff, residual_grid = SolverService.residual(x, mu, f, opts.resolved_quad_order, epsilon)
        if converged and residual_coeff > opts.tol_residual:
            converged = False
        if converged and aux is not None and aux > opts.tol_residual:
            converged = False
        decay = VerifyService.decay_diagnostic(x) if x.N >= 8 else None
        return SolutionReport(
            x=x, mu=mu, residual_coeff=residual_coeff, residual_grid=residual_grid,
            iterations=iterations, converged=converged, coefficient_decay=decay, mode=opts.mode,
            epsilon=epsilon, k=k, alpha=None if k is None else float(c[k]), aux_residual=aux)

    @staticmethod
    def _picard_nonresonant(system: _GalerkinSystem, c: np.ndarray, damping: float, target: float,
                            max_iters: int) -> tuple[np.ndarray, int, bool]:
        previous = c
        for iteration in range(max_iters + 1):
            forcing = system.forcing(c)
            residual = _max_norm(system.diagonal * c - forcing)
            if not np.isfinite(residual):
                logger.warning('Picard iteration got nan after %i iterations...', iteration)
                return previous, iteration, False
            previous = c
            if residual <= target:
                return c, iteration, True
            if iteration == max_iters:
                break
            logger.debug('Picard iteration %i, residual %s', iteration, residual)
            c = (1.0 - damping) * c + damping * forcing / system.diagonal
        return c, max_iters, False

    @staticmethod
    def solve_nonresonant(f: ScalarFunction, mu: float, opts: SolverOptions = None,
                          epsilon: float = 1.0) -> SolutionReport:
        """
        Solve L x = eps f(x) for mu away from every k(k+1).

        Args:
            f: Nonlinearity
            mu: Non-resonant parameter
            opts: Solver options
            epsilon: Factor in front of f

        Returns:
            SolutionReport: converged=False on honest non-convergence

        Raises:
            ResonanceError: If mu is resonant
        """
        opts = opts or SolverOptions()
        k = ResolventService.is_resonant(mu)
        if k is not None:
            raise ResonanceError(f"linear part singular at mu={mu!r} (k={k}); use solve_resonant")
        mu = float(mu)
        system = _GalerkinSystem(f, mu, opts, epsilon)
        c = SolverService._initial_iterate(opts)
        tol = opts.tol_residual

        def picard(start, iters, damping=opts.damping, target=tol):
            return SolverService._picard_nonresonant(system, start, damping, target, iters)

        def fallback(start, iters):
            return picard(start, iters, damping=0.5 * opts.damping)

        if opts.mode == 'picard':
            c, iterations, converged = picard(c, opts.max_iters)
        elif opts.mode == 'newton':
            c, iterations, converged = _newton(system, c, tol, opts.max_iters, fallback)
        else:
            start = c
            c, iterations, reached = picard(c, opts.max_iters, target=max(tol, POLISH_THRESHOLD))
            if not reached:
                logger.warning('Picard stalled at %i iterations; Newton restarts from the initial iterate', iterations)
                c = start
            c, more, converged = _newton(system, c, tol, opts.max_iters, fallback)
            iterations += more
        if not converged:
            logger.warning('solve at mu=%r did not converge after %i iterations', mu, iterations)
        return SolverService._report(c, mu, f, opts, epsilon, iterations, converged)

    @staticmethod
    def _resonant_context(f: ScalarFunction, k: int, opts: SolverOptions) -> tuple[ResonantContext, float]:
        """Context and the orientation sign(J1); refuses unestablished verdicts."""
        ctx = LyapunovSchmidtService.build_context(k, opts.N)
        try:
            verdict = LyapunovSchmidtService.solvability_check(ctx, f)
        except LimitNotEstablishedError as e:
            if not opts.override_solvability:
                raise SolvabilityRefusedError(f"resonant solve refused: {e}") from e
            logger.warning('limits of f not established; continuing on override')
            return ctx, 1.0
        if not verdict.established:
            if not opts.override_solvability:
                raise SolvabilityRefusedError(
                    f"resonant solve refused: solvability verdict for k={k} is not_established", verdict)
            logger.warning('solvability not established for k=%i; continuing on override', k)
        return ctx, (1.0 if verdict.J1 >= 0 else -1.0)

    @staticmethod
    def _picard_resonant(system: _GalerkinSystem, c: np.ndarray, k: int, sigma: float, damping: float,
                         target: float, max_iters: int) -> tuple[np.ndarray, int, bool]:
        """
        Damped iteration of (x, alpha) -> (alpha P_k + w(x), alpha - sigma int f(x) P_k),
        w(x) = M E F(x). Coefficient k of the iterate is alpha at every step.
        """
        inverse = LyapunovSchmidtService.partial_inverse_diagonal(k, system.grid.N)
        previous = c
        for iteration in range(max_iters + 1):
            forcing = system.forcing(c)
            aux = forcing[k] / (k + 0.5)
            residual = _max_norm(system.diagonal * c - forcing)
            if not np.isfinite(residual):
                logger.warning('resonant iteration got nan after %i iterations...', iteration)
                return previous, iteration, False
            previous = c
            if residual <= target and abs(aux) <= target:
                return c, iteration, True
            if iteration == max_iters:
                break
            alpha = c[k]
            w = forcing * inverse
            updated = (1.0 - damping) * c + damping * w
            updated[k] = alpha - damping * sigma * aux
            c = updated
        return c, max_iters, False

    @staticmethod
    def solve_resonant(f: ScalarFunction, k: int, opts: SolverOptions = None,
                       epsilon: float = 1.0) -> SolutionReport:
        """
        Solve L x = eps f(x) at mu = k(k+1) through x = alpha P_k + w(x) and
        int f(x) P_k dt = 0.

        Args:
            f: Nonlinearity with established limits (or override set)
            k: Resonant index
            opts: Solver options
            epsilon: Nonzero factor in front of f

        Returns:
            SolutionReport: With alpha and the auxiliary residual

        Raises:
            SolvabilityRefusedError: Verdict not_established without override
        """
        opts = opts or SolverOptions()
        if k < 0 or k > opts.N:
            raise ValueError(f"resonant index k={k} must lie in [0, N={opts.N}]")
        if epsilon == 0:
            raise ValueError("epsilon must be nonzero for a resonant solve")
        _, orientation = SolverService._resonant_context(f, k, opts)
        sigma = orientation * (1.0 if epsilon > 0 else -1.0)
        mu = float(k * (k + 1))
        system = _GalerkinSystem(f, mu, opts, epsilon)
        tol = opts.tol_residual

        c = SolverService._initial_iterate(opts)
        if opts.alpha0 is not None:
            c[k] = opts.alpha0

        def picard(start, iters, damping=opts.damping, target=tol):
            return SolverService._picard_resonant(system, start, k, sigma, damping, target, iters)

        def fallback(start, iters):
            return picard(start, iters, damping=0.5 * opts.damping)

        if opts.mode == 'picard':
            c, iterations, converged = picard(c, opts.max_iters)
        elif opts.mode == 'newton':
            c, iterations, converged = _newton(system, c, tol, opts.max_iters, fallback)
        else:
            start = c
            c, iterations, reached = picard(c, opts.max_iters, target=max(tol, POLISH_THRESHOLD))
            if not reached:
                logger.warning('resonant iteration stalled at %i iterations; Newton restarts from the initial iterate',
                               iterations)
                c = start
            c, more, converged = _newton(system, c, tol, opts.max_iters, fallback)
            iterations += more

        aux = abs(float(system.forcing(c)[k]) / (k + 0.5))
        if not converged:
            logger.warning('resonant solve at k=%i did not converge after %i iterations', k, iterations)
        return SolverService._report(c, mu, f, opts, epsilon, iterations, converged, k=k, aux=aux)

    @staticmethod
    def solve(f: ScalarFunction, mu: float = None, k: int = None, opts: SolverOptions = None,
              epsilon: float = 1.0) -> SolutionReport:
        """Dispatch on resonance of mu (or an explicit resonant index k)."""
        if k is None and mu is None:
            raise ValueError("either mu or k is required")
        if k is None:
            k = ResolventService.is_resonant(mu)
        if k is not None:
            return SolverService.solve_resonant(f, k, opts, epsilon)
        return SolverService.solve_nonresonant(f, mu, opts, epsilon)

    @staticmethod
    def theorem2_box(f: ScalarFunction, k: int, ctx: ResonantContext = None) -> InvariantBox:
        """
        r = sup |f|, the smallest tried alpha0 >= r + 1 beyond which
        int f(+-alpha P_k) P_k dt carries the signs of J1 / J2, and
        delta = alpha0 + r.

        Raises:
            SolvabilityRefusedError: Verdict not_established
            BoxNotLocatedError: Signs never stabilize for alpha <= 1e6
        """
        ctx = ctx or LyapunovSchmidtService.build_context(k, k)
        verdict = LyapunovSchmidtService.solvability_check(ctx, f)
        if not verdict.established:
            raise SolvabilityRefusedError(f"no invariant box: solvability verdict for k={k} is not_established",
                                          verdict)
        r = ExpressionService.sup_abs_estimate(f)
        J1, J2 = LyapunovSchmidtService.limit_integrals(ctx, f)
        if r + 1.0 > BOX_ALPHA_MAX:
            raise BoxNotLocatedError("box not located numerically")
        grid = np.geomspace(r + 1.0, BOX_ALPHA_MAX, BOX_GRID)

        def stabilized(index: int) -> bool:
            alpha = grid[index]
            upper = LyapunovSchmidtService.kernel_integral(ctx, f, alpha)
            lower = LyapunovSchmidtService.kernel_integral(ctx, f, -alpha)
            return np.sign(upper) == np.sign(J1) and np.sign(lower) == np.sign(J2)

        if not stabilized(len(grid) - 1):
            raise BoxNotLocatedError("box not located numerically")
        lo, hi = -1, len(grid) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if stabilized(mid):
                hi = mid
            else:
                lo = mid
        alpha0 = float(grid[hi])
        return InvariantBox(r=r, alpha0=alpha0, delta=alpha0 + r, J1=verdict.J1, J2=verdict.J2)

    @staticmethod
    def with_truncation(opts: SolverOptions, N: int) -> SolverOptions:
        """Options at a new truncation; an explicit quad_order scales with N."""
        quad_order = None
        if opts.quad_order is not None:
            quad_order = max(N + 1, int(round(opts.quad_order * N / max(opts.N, 1))))
        x0 = opts.x0.resized(N) if opts.x0 is not None else None
        return replace(opts, N=N, quad_order=quad_order, x0=x0)
