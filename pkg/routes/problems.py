"""
Problem routes: resonance check, solve, branch continuation and verification.

Bodies use the same keys as the CLI config files.
"""
import numpy as np
from flask import Blueprint, jsonify
from services.basis_service import LegendreSeries
from services.problem_service import ProblemService
from utils.helpers import require_json
from utils.output import to_builtin

problems_bp = Blueprint('problems', __name__, url_prefix='/api')


def _json(payload: dict, status: int = 200):
    return jsonify(to_builtin(payload)), status


@problems_bp.route('/check', methods=['POST'])
@require_json
def check(data):
    """
    Classify mu and, for resonant mu with f, report the solvability verdict.

    Request body:
        {
            "k": 1,
            "f": "atan(s)"
        }
    """
    return _json(ProblemService.check_report(ProblemService.resolve(data, 'check')))


@problems_bp.route('/solve', methods=['POST'])
@require_json
def solve(data):
    """
    Solve one problem.

    Request body:
        {
            "mu": 1,
            "f": "cos(s)",
            "N": 48
        }
    """
    problem = ProblemService.build_problem(ProblemService.resolve(data, 'solve'))
    report = problem.solve()
    payload = report.to_dict()
    payload['coefficients'] = report.x.to_list()
    return _json({'message': 'Converged' if report.converged else 'Did not converge', 'solution': payload})


@problems_bp.route('/branch', methods=['POST'])
@require_json
def branch(data):
    """
    Locate simple roots of H and continue their branches.

    Request body:
        {
            "k": 1,
            "f": "s^3 - s",
            "alpha_interval": [0.5, 5],
            "eps_max": 0.1
        }
    """
    _, roots, reports = ProblemService.branch_reports(ProblemService.resolve(data, 'branch'))
    return _json({
        'roots': [{'alpha0': alpha, 'dH': slope} for alpha, slope in roots],
        'branches': [report.to_dict() for report in reports],
    })


@problems_bp.route('/verify', methods=['POST'])
@require_json
def verify(data):
    """
    Cross-check a claimed solution given by its coefficients.

    Request body:
        {
            "mu": 1,
            "f": "cos(s)",
            "coefficients": [0.739085, 0.0, 0.0]
        }
    """
    data = dict(data)
    coefficients = data.pop('coefficients', None)
    if not isinstance(coefficients, list) or not coefficients:
        raise ValueError("key 'coefficients' must be a nonempty list")
    x = LegendreSeries(np.asarray(coefficients, dtype=np.float64))
    data.setdefault('N', x.N)
    _, payload = ProblemService.verify_solution(ProblemService.resolve(data, 'verify'), x)
    return _json(payload)
