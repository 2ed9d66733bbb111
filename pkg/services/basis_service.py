"""
Legendre basis service: polynomials, Gauss-Legendre quadrature and the
transforms between grid values and Legendre coefficients.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

logger = logging.getLogger(__name__)

GAUSS_TOL = 1e-14
GAUSS_MAX_STEPS = 100


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LegendreSeries:
    """A function on [-1, 1] given by the coefficients of P_0 .. P_N."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _frozen_array(np.atleast_1d(np.asarray(self.coeffs, dtype=np.float64)))
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise ValueError("Legendre coefficients must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("Legendre coefficients must be finite")
        object.__setattr__(self, 'coeffs', coeffs)

    @property
    def N(self) -> int:
        """Truncation degree."""
        return self.coeffs.size - 1

    @classmethod
    def zeros(cls, N: int) -> 'LegendreSeries':
        return cls(np.zeros(N + 1))

    @classmethod
    def basis_vector(cls, k: int, N: int = None, scale: float = 1.0) -> 'LegendreSeries':
        """scale * P_k as a series of degree max(N, k)."""
        N = k if N is None else max(N, k)
        coeffs = np.zeros(N + 1)
        coeffs[k] = scale
        return cls(coeffs)

    def resized(self, N: int) -> 'LegendreSeries':
        """Truncate or zero-pad to degree N."""
        coeffs = np.zeros(N + 1)
        m = min(N, self.N) + 1
        coeffs[:m] = self.coeffs[:m]
        return LegendreSeries(coeffs)

    def __call__(self, t):
        return BasisService.synthesize(self, t)

    def _padded(self, other: 'LegendreSeries'):
        N = max(self.N, other.N)
        return self.resized(N).coeffs, other.resized(N).coeffs

    def __add__(self, other: 'LegendreSeries') -> 'LegendreSeries':
        a, b = self._padded(other)
        return LegendreSeries(a + b)

    def __sub__(self, other: 'LegendreSeries') -> 'LegendreSeries':
        a, b = self._padded(other)
        return LegendreSeries(a - b)

    def __mul__(self, scalar: float) -> 'LegendreSeries':
        return LegendreSeries(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> 'LegendreSeries':
        return LegendreSeries(-self.coeffs)

    def max_abs(self) -> float:
        """Coefficient max-norm."""
        return float(np.max(np.abs(self.coeffs)))

    def to_list(self) -> list:
        return [float(c) for c in self.coeffs]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1], nodes ascending."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(self.nodes.size)

    def integrate(self, values) -> float:
        """Sum of weights times grid values."""
        return float(np.dot(self.weights, values))

    def mapped(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights affinely mapped to [a, b]."""
        half = 0.5 * (b - a)
        return half * self.nodes + 0.5 * (a + b), half * self.weights


class SpectralGrid:
    """
    Quadrature rule plus the dense synthesis and projection matrices for a
    fixed truncation N. Used by the pseudospectral nonlinear terms and by the
    Newton Jacobians.
    """

    def __init__(self, N: int, quad_order: int = None):
        if quad_order is None:
            quad_order = 2 * N + 16
        if quad_order < N + 1:
            raise ValueError("quadrature order below truncation")
        self.N = N
        self.rule = BasisService.gauss_rule(quad_order)
        table = BasisService.legendre_table(N, self.rule.nodes)
        # S: coefficients -> node values; P: node values -> coefficients
        self.synthesis = table.T.copy()
        scale = np.arange(N + 1) + 0.5
        self.projection = scale[:, None] * table * self.rule.weights[None, :]

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    def values(self, series: LegendreSeries) -> np.ndarray:
        return self.synthesis @ series.resized(self.N).coeffs

    def coefficients(self, values) -> np.ndarray:
        return self.projection @ np.asarray(values, dtype=np.float64)


@lru_cache(maxsize=64)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, n + 1)
    t = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(GAUSS_MAX_STEPS):
        p, dp = _legendre_and_derivative(n, t)
        step = p / dp
        t = t - step
        if np.max(np.abs(step)) <= GAUSS_TOL:
            break
    else:
        raise RuntimeError(f"Gauss-Legendre Newton iteration did not converge for n={n}")

    _, dp = _legendre_and_derivative(n, t)
    weights = 2.0 / ((1.0 - t * t) * dp * dp)

    # ascending order, exact mirror symmetry
    t, weights = t[::-1], weights[::-1]
    t = 0.5 * (t - t[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return _frozen_array(t), _frozen_array(weights)


def _legendre_and_derivative(n: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    previous, current = np.ones_like(t), t.copy()
    for k in range(1, n):
        previous, current = current, ((2 * k + 1) * t * current - k * previous) / (k + 1)
    derivative = n * (previous - t * current) / (1.0 - t * t)
    return current, derivative


class BasisService:
    """Legendre polynomials, quadrature and modal transforms."""

    @staticmethod
    def eval_legendre(k: int, t):
        """
        Evaluate P_k by the three-term recurrence.

        Args:
            k: Degree (>= 0)
            t: Point or array of points in [-1, 1]

        Returns:
            float or ndarray: P_k(t)
        """
        if k < 0:
            raise ValueError("Legendre degree must be nonnegative")
        x = np.asarray(t, dtype=np.float64)
        previous, current = np.ones_like(x), x.copy()
        if k == 0:
            current = previous
        for j in range(1, k):
            previous, current = current, ((2 * j + 1) * x * current - j * previous) / (j + 1)
        return float(current) if current.ndim == 0 else current

    @staticmethod
    def legendre_table(N: int, t) -> np.ndarray:
        """
        Values of P_0 .. P_N at the given points.

        Returns:
            ndarray: shape (N + 1, len(t))
        """
        x = np.asarray(t, dtype=np.float64).ravel()
        table = np.empty((N + 1, x.size))
        table[0] = 1.0
        if N >= 1:
            table[1] = x
        for j in range(1, N):
            table[j + 1] = ((2 * j + 1) * x * table[j] - j * table[j - 1]) / (j + 1)
        return table

    @staticmethod
    def eval_legendre_deriv(k: int, t):
        """
        Evaluate P_k' from (1 - t^2) P_k'(t) = k (P_{k-1}(t) - t P_k(t)).

        Args:
            k: Degree (>= 0)
            t: Point or array of points with |t| < 1

        Returns:
            float or ndarray: P_k'(t)
        """
        x = np.asarray(t, dtype=np.float64)
        if np.any(np.abs(x) >= 1.0):
            raise ValueError("derivative formula singular at endpoints")
        if k == 0:
            result = np.zeros_like(x)
        else:
            p_k = BasisService.eval_legendre(k, x)
            p_km1 = BasisService.eval_legendre(k - 1, x)
            result = k * (p_km1 - x * p_k) / (1.0 - x * x)
        return float(result) if np.ndim(result) == 0 else result

    @staticmethod
    def legendre_deriv_table(N: int, t) -> np.ndarray:
        """P_0' .. P_N' at interior points, shape (N + 1, len(t))."""
        x = np.asarray(t, dtype=np.float64).ravel()
        if np.any(np.abs(x) >= 1.0):
            raise ValueError("derivative formula singular at endpoints")
        values = BasisService.legendre_table(N, x)
        derivs = np.zeros_like(values)
        for k in range(1, N + 1):
            derivs[k] = k * (values[k - 1] - x * values[k]) / (1.0 - x * x)
        return derivs

    @staticmethod
    def gauss_rule(n: int) -> QuadratureRule:
        """
        n-point Gauss-Legendre rule; nodes are the roots of P_n found by Newton
        from Chebyshev-type initial guesses.

        Args:
            n: Number of points (>= 1)

        Returns:
            QuadratureRule: Nodes ascending, weights positive
        """
        if int(n) != n or n < 1:
            raise ValueError("quadrature order must be a positive integer")
        nodes, weights = _gauss_legendre(int(n))
        return QuadratureRule(nodes=nodes, weights=weights)

    @staticmethod
    def project(values, rule: QuadratureRule, N: int) -> LegendreSeries:
        """
        Legendre coefficients c_k = (k + 1/2) sum_i w_i P_k(t_i) g(t_i).

        Args:
            values: g sampled at the rule's nodes
            rule: Quadrature rule with order >= N + 1
            N: Truncation degree

        Returns:
            LegendreSeries: Coefficients c_0 .. c_N
        """
        if rule.order < N + 1:
            raise ValueError("quadrature order below truncation")
        g = np.asarray(values, dtype=np.float64)
        if g.shape != rule.nodes.shape:
            raise ValueError("grid values do not match the quadrature nodes")
        table = BasisService.legendre_table(N, rule.nodes)
        coeffs = (np.arange(N + 1) + 0.5) * (table @ (rule.weights * g))
        return LegendreSeries(coeffs)

    @staticmethod
    def synthesize(series: LegendreSeries, points):
        """
        Clenshaw summation of sum_k c_k P_k(t).

        Args:
            series: Legendre series
            points: Point or array of points in [-1, 1]

        Returns:
            float or ndarray: Series values
        """
        c = series.coeffs
        t = np.asarray(points, dtype=np.float64)
        b1 = np.zeros_like(t)
        b2 = np.zeros_like(t)
        for k in range(series.N, 0, -1):
            alpha = (2 * k + 1) * t / (k + 1)
            beta = -(k + 1) / (k + 2)
            b1, b2 = c[k] + alpha * b1 + beta * b2, b1
        result = c[0] + t * b1 - 0.5 * b2
        return float(result) if np.ndim(result) == 0 else result

    @staticmethod
    def inner_product(a, b, rule: QuadratureRule = None) -> float:
        """
        L2 inner product on [-1, 1].

        Two series are paired in coefficient space,
        sum_k a_k b_k 2 / (2k + 1); grid functions (or a mix) need a rule and
        are paired by quadrature.
        """
        if isinstance(a, LegendreSeries) and isinstance(b, LegendreSeries):
            m = min(a.N, b.N) + 1
            norms = 2.0 / (2 * np.arange(m) + 1)
            return float(np.sum(a.coeffs[:m] * b.coeffs[:m] * norms))
        if rule is None:
            raise ValueError("grid inner product needs a quadrature rule")
        av = BasisService.synthesize(a, rule.nodes) if isinstance(a, LegendreSeries) else np.asarray(a)
        bv = BasisService.synthesize(b, rule.nodes) if isinstance(b, LegendreSeries) else np.asarray(b)
        return rule.integrate(av * bv)

    @staticmethod
    def uniform_points(m: int) -> np.ndarray:
        """m equispaced points on [-1, 1], endpoints included."""
        if m < 2:
            raise ValueError("need at least two sample points")
        return np.linspace(-1.0, 1.0, m)
