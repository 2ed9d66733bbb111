"""
Configuration settings for the Legendre BVP solver.
"""
import logging
import os
from dotenv import load_dotenv

load_dotenv()


def _int_env(name: str, default: int):
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw)
    except ValueError:
        return raw


class Config:
    """Application configuration class."""

    # Flask settings
    FLASK_ENV = os.getenv('FLASK_ENV', 'development')
    API_HOST = os.getenv('API_HOST', '127.0.0.1')
    API_PORT = _int_env('API_PORT', 5000)

    # Batch parallelism
    LEGENDRE_BVP_THREADS = _int_env('LEGENDRE_BVP_THREADS', 1)

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'WARNING').upper()

    # CLI output
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'out')

    # Numerical defaults shared by the CLI and the API
    DEFAULT_N = 64
    DEFAULT_DAMPING = 0.5
    DEFAULT_TOL = 1e-10
    DEFAULT_MAX_ITERS = 500
    DEFAULT_MODE = 'auto'
    DEFAULT_ROOT_INTERVAL = (-20.0, 20.0)
    DEFAULT_ROOT_GRID = 400
    DEFAULT_EPS_POINTS = 13
    DEFAULT_EPS_DECADES = 3

    @staticmethod
    def threads() -> int:
        """Thread cap, never below 1."""
        value = Config.LEGENDRE_BVP_THREADS
        return value if isinstance(value, int) and value >= 1 else 1

    @staticmethod
    def validate():
        """Validate environment-derived settings."""
        invalid = []
        if not isinstance(Config.LEGENDRE_BVP_THREADS, int) or Config.LEGENDRE_BVP_THREADS < 1:
            invalid.append('LEGENDRE_BVP_THREADS')
        if not isinstance(Config.API_PORT, int) or not 0 < Config.API_PORT < 65536:
            invalid.append('API_PORT')
        if not isinstance(logging.getLevelName(Config.LOG_LEVEL), int):
            invalid.append('LOG_LEVEL')
        if invalid:
            raise ValueError(f"Invalid environment variables: {', '.join(invalid)}")

    @staticmethod
    def configure_logging():
        """Root handler on stderr at LOG_LEVEL."""
        level = logging.getLevelName(Config.LOG_LEVEL)
        logging.basicConfig(
            level=level if isinstance(level, int) else logging.WARNING,
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )
