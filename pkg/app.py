"""
Flask application exposing the Legendre BVP solver as a JSON API.
"""
import logging
from flask import Flask, jsonify
from flask_cors import CORS
from config import Config
from routes.basis import basis_bp
from routes.problems import problems_bp

logger = logging.getLogger(__name__)

# Initialize Flask app
app = Flask(__name__)

# Enable CORS
CORS(app)

# Register blueprints
app.register_blueprint(basis_bp)
app.register_blueprint(problems_bp)


@app.route('/', methods=['GET'])
def health_check():
    """Health check endpoint."""
    return jsonify({
        'message': 'Legendre BVP API is running',
        'version': '1.0.0',
        'status': 'healthy'
    }), 200


@app.route('/api', methods=['GET'])
def api_index():
    """List the registered API endpoints."""
    endpoints = []
    for rule in app.url_map.iter_rules():
        if not rule.rule.startswith('/api/'):
            continue
        view = app.view_functions[rule.endpoint]
        endpoints.append({
            'path': rule.rule,
            'methods': sorted(rule.methods - {'HEAD', 'OPTIONS'}),
            'description': (view.__doc__ or '').strip().split('\n', 1)[0]
        })
    endpoints.sort(key=lambda e: e['path'])
    return jsonify({'endpoints': endpoints}), 200


@app.errorhandler(404)
def not_found(error):
    """Handle 404 errors."""
    return jsonify({'error': 'Endpoint not found'}), 404


@app.errorhandler(405)
def method_not_allowed(error):
    """Handle 405 errors."""
    return jsonify({'error': 'Method not allowed'}), 405


@app.errorhandler(500)
def internal_error(error):
    """Handle 500 errors."""
    return jsonify({'error': 'Internal server error'}), 500


if __name__ == '__main__':
    Config.configure_logging()
    # Validate configuration
    try:
        Config.validate()
    except ValueError as e:
        logger.error('Configuration error: %s', e)
        logger.error('Please check your .env file.')
        raise SystemExit(1)

    # Run the application
    app.run(debug=Config.FLASK_ENV == 'development', host=Config.API_HOST, port=Config.API_PORT)
