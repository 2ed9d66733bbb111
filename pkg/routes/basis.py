"""
Basis routes: Legendre polynomial samples and Gauss rules.
"""
from flask import Blueprint, jsonify
from services.basis_service import BasisService
from services.problem_service import ProblemService
from utils.helpers import require_json

basis_bp = Blueprint('basis', __name__, url_prefix='/api/basis')


@basis_bp.route('/poly', methods=['POST'])
@require_json
def sample_polynomial(data):
    """
    Sample P_k on uniform points.

    Request body:
        {
            "poly": 3,
            "samples": 101
        }
    """
    resolved = ProblemService.resolve(data, 'basis')
    if 'poly' not in resolved:
        raise ValueError("key 'poly' is required")
    t = BasisService.uniform_points(resolved['samples'])
    values = BasisService.eval_legendre(resolved['poly'], t)
    return jsonify({'k': resolved['poly'], 't': t.tolist(), 'values': values.tolist()}), 200


@basis_bp.route('/rule', methods=['POST'])
@require_json
def gauss_rule(data):
    """
    Gauss-Legendre nodes and weights.

    Request body:
        {
            "rule": 16
        }
    """
    resolved = ProblemService.resolve(data, 'basis')
    if 'rule' not in resolved:
        raise ValueError("key 'rule' is required")
    rule = BasisService.gauss_rule(resolved['rule'])
    return jsonify({'n': rule.order, 'nodes': rule.nodes.tolist(), 'weights': rule.weights.tolist()}), 200
