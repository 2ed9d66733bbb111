"""
Problem service: validation of run configurations and assembly of the
problem objects the numerical services consume.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from config import Config
from services.basis_service import LegendreSeries
from services.bifurcation_service import BifurcationService
from services.errors import ConfigError, LimitNotEstablishedError
from services.expr_service import ExpressionService, ScalarFunction
from services.lyapunov_schmidt_service import LyapunovSchmidtService
from services.resolvent_service import ResolventService
from services.solver_service import MODES, SolutionReport, SolverOptions, SolverService
from services.verify_service import WELL_RESOLVED, CrossCheckResult, OracleConfig, VerifyService

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('solve', 'check', 'branch', 'basis', 'verify')

KEY_KINDS = {
    'f': 'str', 'f_limit_neg': 'real', 'f_limit_pos': 'real',
    'mu': 'real', 'k': 'int', 'epsilon': 'real',
    'N': 'int', 'quad_order': 'int', 'damping': 'real', 'tol': 'real', 'max_iters': 'int',
    'mode': 'str', 'override_solvability': 'bool', 'x0': 'reals', 'alpha0': 'real',
    'alpha_interval': 'pair', 'alpha_grid': 'int', 'eps_max': 'real', 'eps_min': 'real',
    'eps_points': 'int', 'two_sided': 'bool',
    'fine_quad_order': 'int', 'fd_step': 'real', 'refinement_factor': 'int',
    'terms': 'int', 'poly': 'int', 'samples': 'int', 'rule': 'int', 'seed': 'int',
}

_PROBLEM_KEYS = {'f', 'f_limit_neg', 'f_limit_pos', 'seed'}
_OPTION_KEYS = {'N', 'quad_order', 'damping', 'tol', 'max_iters', 'mode'}
SUBCOMMAND_KEYS = {
    'solve': _PROBLEM_KEYS | _OPTION_KEYS | {'mu', 'k', 'epsilon', 'override_solvability', 'x0', 'alpha0'},
    'check': _PROBLEM_KEYS | {'mu', 'k', 'N', 'terms'},
    'branch': _PROBLEM_KEYS | _OPTION_KEYS | {'k', 'alpha_interval', 'alpha_grid', 'alpha0', 'eps_max',
                                               'eps_min', 'eps_points', 'two_sided'},
    'basis': {'poly', 'samples', 'rule', 'seed'},
    'verify': _PROBLEM_KEYS | _OPTION_KEYS | {'mu', 'k', 'epsilon', 'override_solvability', 'x0', 'alpha0',
                                               'fine_quad_order', 'fd_step', 'refinement_factor'},
}


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of L x = eps f(x) together with its solver options."""

    f: ScalarFunction
    mu: float
    options: SolverOptions
    k: Optional[int] = None
    epsilon: float = 1.0

    def refined(self, factor: int = 2) -> 'ProblemSpec':
        return replace(self, options=SolverService.with_truncation(self.options, self.options.N * factor))

    def solve(self) -> SolutionReport:
        return SolverService.solve(self.f, mu=self.mu, k=self.k, opts=self.options, epsilon=self.epsilon)


def _check_kind(key: str, value) -> str:
    """Empty string when value matches the kind of key, else an error message."""
    kind = KEY_KINDS[key]
    is_real = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == 'str' and not isinstance(value, str):
        return f"key '{key}' must be a quoted string"
    if kind == 'int' and (isinstance(value, bool) or not isinstance(value, int)):
        return f"key '{key}' must be an integer"
    if kind == 'real' and not (is_real and math.isfinite(value)):
        return f"key '{key}' must be a finite real number"
    if kind == 'bool' and not isinstance(value, bool):
        return f"key '{key}' must be true or false"
    if kind in ('reals', 'pair'):
        if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in value):
            return f"key '{key}' must be a list of real numbers"
        if kind == 'pair' and len(value) != 2:
            return f"key '{key}' must be a list of two real numbers"
    return ''


class ProblemService:
    """Service for run configuration handling."""

    @staticmethod
    def validate_problem_data(data: dict, subcommand: str) -> tuple[bool, str]:
        """
        Strictly validate configuration keys and value types.

        Args:
            data: Key/value configuration
            subcommand: One of solve, check, branch, basis, verify

        Returns:
            tuple: (is_valid, error_message)
        """
        if subcommand not in SUBCOMMAND_KEYS:
            return False, f"unknown subcommand '{subcommand}'"
        if not isinstance(data, dict):
            return False, "configuration must be a key/value mapping"
        allowed = SUBCOMMAND_KEYS[subcommand]
        for key, value in data.items():
            if key not in allowed:
                return False, f"unknown key '{key}' for {subcommand}"
            message = _check_kind(key, value)
            if message:
                return False, message
        if ('f_limit_neg' in data) != ('f_limit_pos' in data):
            key = 'f_limit_pos' if 'f_limit_neg' in data else 'f_limit_neg'
            return False, f"key '{key}' is required when the other limit is declared"
        if subcommand in ('solve', 'verify', 'branch') and 'f' not in data:
            return False, "key 'f' is required"
        if subcommand in ('solve', 'verify', 'check') and 'mu' not in data and 'k' not in data:
            return False, "key 'mu' or 'k' is required"
        if subcommand == 'branch' and 'k' not in data:
            return False, "key 'k' is required"
        if 'k' in data and data['k'] < 0:
            return False, "key 'k' must be nonnegative"
        if 'k' in data and 'mu' in data and abs(data['mu'] - data['k'] * (data['k'] + 1)) >= 1e-8:
            return False, "keys 'mu' and 'k' disagree: mu must equal k(k+1)"
        if 'mode' in data and data['mode'] not in MODES:
            return False, f"key 'mode' must be one of: {', '.join(MODES)}"
        if subcommand == 'basis' and ('poly' in data) == ('rule' in data):
            return False, "exactly one of 'poly' and 'rule' is required"
        return True, ""

    @staticmethod
    def parse_function(data: dict) -> ScalarFunction:
        limits = None
        if 'f_limit_neg' in data:
            limits = (data['f_limit_neg'], data['f_limit_pos'])
        return ExpressionService.parse(data['f'], declared_limits=limits)

    @staticmethod
    def resolve(data: dict, subcommand: str) -> dict:
        """
        Validate and fill defaults, giving the fully-resolved configuration.

        Raises:
            ConfigError: Naming the offending key
        """
        is_valid, error_msg = ProblemService.validate_problem_data(data, subcommand)
        if not is_valid:
            key = error_msg.split("'")[1] if "'" in error_msg else None
            raise ConfigError(error_msg, key)
        resolved = dict(data)

        if subcommand == 'basis':
            if 'poly' in resolved:
                resolved.setdefault('samples', 201)
            return resolved

        if subcommand in ('solve', 'verify', 'check'):
            if 'k' in resolved:
                resolved['mu'] = float(resolved['k'] * (resolved['k'] + 1))
            else:
                resolved['mu'] = float(resolved['mu'])
                resolved['k'] = ResolventService.is_resonant(resolved['mu'])

        if subcommand == 'check':
            resolved.setdefault('N', max(Config.DEFAULT_N, resolved['k'] or 0))
            resolved.setdefault('terms', 10_000)
            return resolved

        resolved.setdefault('N', Config.DEFAULT_N)
        resolved.setdefault('quad_order', 2 * resolved['N'] + 16)
        resolved.setdefault('damping', Config.DEFAULT_DAMPING)
        resolved.setdefault('tol', Config.DEFAULT_TOL)
        resolved.setdefault('max_iters', Config.DEFAULT_MAX_ITERS)
        resolved.setdefault('mode', Config.DEFAULT_MODE)

        if subcommand == 'branch':
            resolved.setdefault('alpha_interval', list(Config.DEFAULT_ROOT_INTERVAL))
            resolved.setdefault('alpha_grid', Config.DEFAULT_ROOT_GRID)
            resolved.setdefault('eps_max', 0.1)
            resolved.setdefault('eps_min', resolved['eps_max'] * 10.0 ** -Config.DEFAULT_EPS_DECADES)
            resolved.setdefault('eps_points', Config.DEFAULT_EPS_POINTS)
            resolved.setdefault('two_sided', False)
            if not 0 < resolved['eps_min'] <= resolved['eps_max']:
                raise ConfigError("key 'eps_min' must satisfy 0 < eps_min <= eps_max", 'eps_min')
            if resolved['eps_points'] < 1:
                raise ConfigError("key 'eps_points' must be positive", 'eps_points')
            return resolved

        resolved.setdefault('epsilon', 1.0)
        resolved.setdefault('override_solvability', False)
        if resolved['epsilon'] == 0:
            raise ConfigError("key 'epsilon' must be nonzero", 'epsilon')
        if subcommand == 'verify':
            resolved.setdefault('fd_step', 1e-6)
            resolved.setdefault('refinement_factor', 2)
            resolved.setdefault('fine_quad_order', 4 * resolved['N'] + 32)
        return resolved

    @staticmethod
    def build_options(resolved: dict, x0: LegendreSeries = None) -> SolverOptions:
        """SolverOptions from a resolved configuration."""
        if x0 is None and resolved.get('x0') is not None:
            x0 = LegendreSeries(np.asarray(resolved['x0'], dtype=np.float64))
        try:
            return SolverOptions(
                N=resolved['N'],
                quad_order=resolved['quad_order'],
                damping=resolved['damping'],
                tol_residual=resolved['tol'],
                max_iters=resolved['max_iters'],
                mode=resolved['mode'],
                x0=x0,
                alpha0=resolved.get('alpha0'),
                override_solvability=resolved.get('override_solvability', False),
            )
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @staticmethod
    def build_problem(resolved: dict, x0: LegendreSeries = None) -> ProblemSpec:
        """
        Assemble a ProblemSpec from a resolved solve/verify configuration.

        Raises:
            ConfigError: Invalid option values
            ExpressionSyntaxError: Malformed expression
        """
        return ProblemSpec(
            f=ProblemService.parse_function(resolved),
            mu=resolved['mu'],
            k=resolved['k'],
            epsilon=resolved['epsilon'],
            options=ProblemService.build_options(resolved, x0),
        )

    @staticmethod
    def build_oracle(resolved: dict) -> OracleConfig:
        try:
            return OracleConfig(fine_quad_order=resolved['fine_quad_order'], fd_step=resolved['fd_step'],
                                refinement_factor=resolved['refinement_factor'])
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @staticmethod
    def eps_grid(resolved: dict) -> list[float]:
        """Log-spaced eps values from eps_min to eps_max, mirrored when two_sided."""
        grid = np.geomspace(resolved['eps_min'], resolved['eps_max'], resolved['eps_points'])
        values = [float(e) for e in grid]
        if resolved.get('two_sided'):
            values = [-e for e in reversed(values)] + values
        return values

    @staticmethod
    def check_report(resolved: dict) -> dict:
        """
        Resonance classification, resolvent norm bound and, for resonant mu
        with an expression, the solvability verdict and box diagnostic.
        """
        mu, k = resolved['mu'], resolved['k']
        report = {'mu': mu, 'resonant': k is not None, 'k': k, 'norm_bound': None}
        if k is None:
            report['norm_bound'] = ResolventService.resolvent_norm_bound(mu, resolved['terms'])
            return report
        ctx = LyapunovSchmidtService.build_context(k, resolved['N'])
        report['sign_integral_pos'] = ctx.sign_integral_pos
        report['sign_integral_neg'] = ctx.sign_integral_neg
        if 'f' not in resolved:
            return report

        f = ProblemService.parse_function(resolved)
        report['f'] = f.pretty()
        report['sublinearity'] = ExpressionService.sublinearity_probe(f).label
        try:
            verdict = LyapunovSchmidtService.solvability_check(ctx, f)
        except LimitNotEstablishedError as e:
            logger.warning('solvability not decidable: %s', e)
            report.update({'verdict': 'not_established', 'J1': None, 'J2': None, 'reason': str(e)})
            return report
        report.update(verdict.to_dict())
        if verdict.established:
            try:
                report['box'] = SolverService.theorem2_box(f, k, ctx).to_dict()
            except ValueError as e:
                report['box'] = {'error': str(e)}
        return report

    @staticmethod
    def branch_reports(resolved: dict) -> tuple[ScalarFunction, list, list]:
        """
        Roots of H (or the configured alpha0) and one BranchReport per root.

        Returns:
            tuple: (f, roots, reports); reports is empty when no simple root exists
        """
        f = ProblemService.parse_function(resolved)
        k = resolved['k']
        if resolved.get('alpha0') is not None:
            alpha0 = resolved['alpha0']
            roots = [(alpha0, BifurcationService.bifurcation_dH(f, k, alpha0))]
        else:
            roots = BifurcationService.find_simple_roots(f, k, tuple(resolved['alpha_interval']),
                                                         resolved['alpha_grid'])
        if not roots:
            logger.warning('no simple roots of H for k=%i in %s', k, resolved['alpha_interval'])
            return f, roots, []
        reports = BifurcationService.continue_branches(f, k, roots, ProblemService.eps_grid(resolved),
                                                       ProblemService.build_options(resolved),
                                                       threads=Config.threads())
        return f, roots, reports

    @staticmethod
    def verify_solution(resolved: dict, x: LegendreSeries) -> tuple[CrossCheckResult, dict]:
        """
        Residuals, decay diagnostic and refinement cross-check of a claimed solution.

        Returns:
            tuple: (CrossCheckResult, payload dict for JSON output)
        """
        if resolved['N'] != x.N:
            raise ConfigError(f"key 'N' is {resolved['N']} but the solution has N={x.N}", 'N')
        problem = ProblemService.build_problem(resolved, x0=x)
        residual_coeff, residual_grid = SolverService.residual(x, problem.mu, problem.f,
                                                               problem.options.resolved_quad_order, problem.epsilon)
        decay = VerifyService.decay_diagnostic(x) if x.N >= 8 else None
        claimed = SolutionReport(x=x, mu=problem.mu, residual_coeff=residual_coeff, residual_grid=residual_grid,
                                 iterations=0, converged=residual_coeff <= problem.options.tol_residual,
                                 coefficient_decay=decay, mode=problem.options.mode, epsilon=problem.epsilon,
                                 k=problem.k)
        result = VerifyService.cross_check(claimed, problem, ProblemService.build_oracle(resolved))
        payload = result.to_dict()
        payload.update({
            'residual_coeff': residual_coeff,
            'residual_grid': residual_grid,
            'coefficient_decay': decay,
            'well_resolved': None if decay is None else decay <= WELL_RESOLVED,
        })
        return result, payload
