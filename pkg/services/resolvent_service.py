"""
Resolvent service: the Legendre operator L x = [(1 - t^2) x']' + mu x in
coefficient space, where it is diagonal, and its inverse for non-resonant mu.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from services.basis_service import LegendreSeries
from services.errors import ResonanceError

RESONANCE_TOL = 1e-8
DEFAULT_NORM_TERMS = 10_000


def eigenvalues(N: int) -> np.ndarray:
    """k(k+1) for k = 0 .. N."""
    k = np.arange(N + 1, dtype=np.float64)
    return k * (k + 1.0)


@dataclass(frozen=True)
class LinearOperatorL:
    """L at a fixed mu and truncation N; acts by (L x)_k = (mu - k(k+1)) x_k."""

    mu: float
    N: int

    @property
    def diagonal(self) -> np.ndarray:
        return self.mu - eigenvalues(self.N)

    def apply(self, x: LegendreSeries) -> LegendreSeries:
        return LegendreSeries(self.diagonal * x.resized(self.N).coeffs)


class ResolventService:
    """Diagonal action and inversion of the Legendre operator."""

    @staticmethod
    def is_resonant(mu: float) -> Optional[int]:
        """
        Return k if |mu - k(k+1)| < 1e-8 for some integer k >= 0.

        Eigenvalue gaps are at least 2, so at most one k can match.
        """
        mu = float(mu)
        if not math.isfinite(mu):
            return None
        k = max(0, round((math.sqrt(1.0 + 4.0 * max(mu, 0.0)) - 1.0) / 2.0))
        if abs(mu - k * (k + 1)) < RESONANCE_TOL:
            return k
        return None

    @staticmethod
    def apply_L(x: LegendreSeries, mu: float) -> LegendreSeries:
        """Multiply coefficient k by mu - k(k+1)."""
        return LinearOperatorL(mu=float(mu), N=x.N).apply(x)

    @staticmethod
    def solve_linear(h: LegendreSeries, mu: float, N: int = None) -> LegendreSeries:
        """
        Solve L x = h by coefficient-wise division.

        Args:
            h: Right-hand side
            mu: Non-resonant parameter
            N: Truncation of the result (defaults to h's)

        Returns:
            LegendreSeries: x_k = h_k / (mu - k(k+1))

        Raises:
            ResonanceError: If mu = k(k+1) within tolerance
        """
        k = ResolventService.is_resonant(mu)
        if k is not None:
            raise ResonanceError(f"linear part singular at mu={mu!r} (k={k}); use lyapunov_schmidt")
        N = h.N if N is None else N
        operator = LinearOperatorL(mu=float(mu), N=N)
        return LegendreSeries(h.resized(N).coeffs / operator.diagonal)

    @staticmethod
    def resolvent_norm_bound(mu: float, terms: int = DEFAULT_NORM_TERMS) -> float:
        """
        Partial sum bound on ||L^{-1}||:
        sqrt(sum_{k=0}^{terms} 1 / ((mu - k(k+1))^2 (k + 1/2))).

        Uses a correctly rounded sum so the bound is nondecreasing in terms.
        """
        if ResolventService.is_resonant(mu) is not None:
            raise ResonanceError(f"norm bound undefined at resonant mu={mu!r}")
        if terms < 0:
            raise ValueError("terms must be nonnegative")
        k = np.arange(terms + 1, dtype=np.float64)
        summands = 1.0 / ((mu - k * (k + 1.0)) ** 2 * (k + 0.5))
        return math.sqrt(math.fsum(summands))
