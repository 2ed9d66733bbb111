"""
Command-line entry point.

    python cli.py solve  --config problem.txt --output-dir out
    python cli.py check  --mu 6
    python cli.py check  --k 1 --f "atan(s)"
    python cli.py branch --config branch.txt
    python cli.py basis  --poly 3 --samples 101
    python cli.py basis  --rule 16
    python cli.py verify --solution out/coefficients.csv --config problem.txt
    python cli.py replay --run out/run.json --output-dir again

Exit status: 0 on converged/pass, 2 on non-convergence, not_established
verdicts or failed verification, 1 on usage and configuration errors.
Data goes to files in the output directory; diagnostics go to stderr.
"""
import argparse
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from config import Config
from services.basis_service import BasisService, LegendreSeries
from services.errors import ConfigError, SolvabilityRefusedError
from services.problem_service import ProblemService
from services.solver_service import SolutionReport
from services.verify_service import COMPARISON_POINTS, Verdict
from utils.config_file import load_config, load_run_record
from utils.output import read_coefficients, write_csv, write_json

logger = logging.getLogger('legendre_bvp')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
BRANCH_SAMPLES = 201
VERSION = '1.0.0'


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='legendre-bvp', description='Legendre spectral solver for [(1-t^2)x\']\' + mu x = f(x)')
    sub = parser.add_subparsers(dest='subcommand', required=True, parser_class=_Parser)

    def with_output(p):
        p.add_argument('--output-dir', default=None, help=f'output directory (default {Config.OUTPUT_DIR})')
        return p

    solve = with_output(sub.add_parser('solve', help='solve one problem'))
    solve.add_argument('--config', required=True, help='key = value problem file or run.json')

    check = with_output(sub.add_parser('check', help='resonance and solvability check'))
    check.add_argument('--config', help='key = value problem file')
    check.add_argument('--mu', type=float)
    check.add_argument('--k', type=int)
    check.add_argument('--f', help='nonlinearity expression in s')
    check.add_argument('--f-limit-neg', type=float, dest='f_limit_neg')
    check.add_argument('--f-limit-pos', type=float, dest='f_limit_pos')

    branch = with_output(sub.add_parser('branch', help='continue branches from simple roots of H'))
    branch.add_argument('--config', required=True)

    basis = with_output(sub.add_parser('basis', help='Legendre polynomial samples or Gauss rules'))
    basis.add_argument('--poly', type=int, help='degree k')
    basis.add_argument('--samples', type=int, help='number of uniform samples')
    basis.add_argument('--rule', type=int, help='number of Gauss points')

    verify = with_output(sub.add_parser('verify', help='verify a coefficient file'))
    verify.add_argument('--solution', required=True, help='k,c_k coefficient CSV')
    verify.add_argument('--config', required=True)

    replay = sub.add_parser('replay', help='re-execute a recorded run.json')
    replay.add_argument('--run', required=True)
    replay.add_argument('--output-dir', default=None)
    return parser


def _config_data(args) -> dict:
    data = load_config(args.config) if getattr(args, 'config', None) else {}
    for key in ('mu', 'k', 'f', 'f_limit_neg', 'f_limit_pos', 'poly', 'samples', 'rule'):
        value = getattr(args, key, None)
        if value is not None:
            if key in data and data[key] != value:
                raise ConfigError(f"key '{key}' given both in the config file and on the command line", key)
            data[key] = value
    return data


def _report_payload(report: SolutionReport, f) -> dict:
    payload = report.to_dict()
    payload['f'] = f.pretty()
    payload['coefficients'] = report.x.to_list()
    return payload


def _write_series(directory: Path, name: str, x: LegendreSeries, points: int):
    t = BasisService.uniform_points(points)
    write_csv(directory / name, ['t', 'x(t)'], zip(t, BasisService.synthesize(x, t)))


def run_solve(resolved: dict, out: Path, inputs: dict) -> int:
    problem = ProblemService.build_problem(resolved)
    try:
        report = problem.solve()
    except SolvabilityRefusedError as e:
        refusal = {'error': str(e), 'verdict': e.verdict.to_dict() if e.verdict else None}
        write_json(out / 'solution.json', refusal)
        logger.error('%s', e)
        return EXIT_NOT_CONVERGED
    write_json(out / 'solution.json', _report_payload(report, problem.f))
    _write_series(out, 'solution.csv', report.x, COMPARISON_POINTS)
    write_csv(out / 'coefficients.csv', ['k', 'c_k'], enumerate(report.x.coeffs))
    if not report.converged:
        logger.error('solve did not converge: residual_coeff=%s after %i iterations',
                     report.residual_coeff, report.iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def run_check(resolved: dict, out: Path, inputs: dict) -> int:
    report = ProblemService.check_report(resolved)
    write_json(out / 'check.json', report)
    if 'verdict' in report and report['verdict'] == 'not_established':
        logger.error('solvability verdict for k=%i is not_established', report['k'])
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def run_basis(resolved: dict, out: Path, inputs: dict) -> int:
    if 'poly' in resolved:
        k = resolved['poly']
        t = BasisService.uniform_points(resolved['samples'])
        write_csv(out / 'basis_poly.csv', ['t', f'P_{k}(t)'], zip(t, BasisService.eval_legendre(k, t)))
    else:
        rule = BasisService.gauss_rule(resolved['rule'])
        write_csv(out / 'basis_rule.csv', ['node', 'weight'], zip(rule.nodes, rule.weights))
    return EXIT_OK


def _write_branch(directory: Path, report):
    rows = [(p.epsilon, p.alpha, p.distance_to_xbar, p.residual_grid) for p in report.points]
    write_csv(directory / 'branch.csv', ['epsilon', 'alpha', 'sup_distance_to_xbar', 'residual'], rows)
    for point in report.points:
        _write_series(directory, f'branch_eps_{point.epsilon!r}.csv', point.x, BRANCH_SAMPLES)


def run_branch(resolved: dict, out: Path, inputs: dict) -> int:
    f, roots, reports = ProblemService.branch_reports(resolved)
    write_json(out / 'branch.json', {
        'k': resolved['k'],
        'f': f.pretty(),
        'roots': [{'alpha0': alpha, 'dH': slope} for alpha, slope in roots],
        'branches': [report.to_dict() for report in reports],
    })
    if not reports:
        logger.error('no simple roots of H found for k=%i in %s', resolved['k'], resolved['alpha_interval'])
        return EXIT_NOT_CONVERGED
    if len(reports) == 1:
        _write_branch(out, reports[0])
    else:
        for index, report in enumerate(reports):
            _write_branch(out / f'root_{index}', report)
    return EXIT_OK if all(report.complete for report in reports) else EXIT_NOT_CONVERGED


def run_verify(resolved: dict, out: Path, inputs: dict) -> int:
    x = LegendreSeries(read_coefficients(inputs['solution']))
    result, payload = ProblemService.verify_solution(resolved, x)
    write_json(out / 'verify.json', payload)
    if result.verdict is not Verdict.PASS:
        logger.error('verification %s: %s', result.verdict.value, result.reason)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


HANDLERS = {
    'solve': run_solve,
    'check': run_check,
    'basis': run_basis,
    'branch': run_branch,
    'verify': run_verify,
}


def _metadata() -> dict:
    return {
        'version': VERSION,
        'created_at': datetime.now(timezone.utc).isoformat(),
        'python': platform.python_version(),
        'numpy': np.__version__,
        'scipy': scipy.__version__,
        'threads': Config.threads(),
    }


def execute(subcommand: str, data: dict, out: Path, inputs: dict = None) -> int:
    """Resolve, run and record one subcommand; run.json is written even on failure."""
    inputs = inputs or {}
    if subcommand == 'verify':
        n_solution = len(read_coefficients(inputs['solution'])) - 1
        if data.setdefault('N', n_solution) != n_solution:
            raise ConfigError(f"key 'N' is {data['N']} but the solution has N={n_solution}", 'N')
    resolved = ProblemService.resolve(data, subcommand)
    out.mkdir(parents=True, exist_ok=True)
    record = {'subcommand': subcommand, 'config': resolved, 'inputs': inputs,
              'output_dir': str(out), 'metadata': _metadata()}
    try:
        code = HANDLERS[subcommand](resolved, out, inputs)
    except SolvabilityRefusedError as e:
        logger.error('%s', e)
        code = EXIT_NOT_CONVERGED
    record['exit_code'] = code
    write_json(out / 'run.json', record)
    return code


def _replay(args) -> int:
    subcommand, data, record = load_run_record(args.run)
    if subcommand not in HANDLERS:
        raise ConfigError(f"{args.run} is not a run record")
    out = Path(args.output_dir or record.get('output_dir') or Config.OUTPUT_DIR)
    return execute(subcommand, data, out, record.get('inputs') or {})


def run(argv=None) -> int:
    """
    Parse argv and run a subcommand.

    Returns:
        int: Exit status (0, 1 or 2)
    """
    Config.configure_logging()
    try:
        Config.validate()
    except ValueError as e:
        logger.error('Configuration error: %s', e)
        return EXIT_USAGE
    try:
        args = build_parser().parse_args(argv)
        if args.subcommand == 'replay':
            return _replay(args)
        data = _config_data(args)
        inputs = {'solution': str(args.solution)} if args.subcommand == 'verify' else {}
        return execute(args.subcommand, data, Path(args.output_dir or Config.OUTPUT_DIR), inputs)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USAGE
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SolvabilityRefusedError as e:
        logger.error('%s', e)
        return EXIT_NOT_CONVERGED
    except (ValueError, RuntimeError, OSError) as e:
        logger.error('%s', e)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(run())
