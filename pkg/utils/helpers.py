"""
Utility decorators for the JSON API routes.
"""
import logging
from functools import wraps
from flask import request, jsonify
from services.errors import SolvabilityRefusedError

logger = logging.getLogger(__name__)


def require_json(f):
    """
    Decorator to require a JSON object body.

    Passes the parsed body as 'data' to the decorated function and maps
    service errors to status codes: SolvabilityRefusedError -> 422,
    ValueError -> 400, anything else -> 500.
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        data = request.get_json(silent=True)

        if not data or not isinstance(data, dict):
            return jsonify({'error': 'No data provided'}), 400

        kwargs['data'] = data
        try:
            return f(*args, **kwargs)
        except SolvabilityRefusedError as e:
            verdict = e.verdict.to_dict() if e.verdict is not None else None
            return jsonify({'error': str(e), 'verdict': verdict}), 422
        except ValueError as e:
            return jsonify({'error': str(e)}), 400
        except Exception as e:
            logger.exception('request to %s failed', request.path)
            return jsonify({'error': f'Internal error: {str(e)}'}), 500

    return decorated_function
