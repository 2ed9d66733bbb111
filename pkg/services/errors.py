"""
Exception types raised by the solver services.

Everything a caller can fix derives from ValueError so routes and the CLI
can treat them uniformly as bad input.
"""


class ExpressionSyntaxError(ValueError):
    """Malformed nonlinearity expression; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvaluationError(ValueError):
    """Expression evaluated outside its domain (log of negative, etc.)."""

    def __init__(self, message: str, node: str):
        super().__init__(f"{message} in '{node}'")
        self.node = node


class LimitNotEstablishedError(ValueError):
    """f(-inf) / f(inf) could not be established numerically."""


class ResonanceError(ValueError):
    """mu is an eigenvalue k(k+1); the linear part is singular."""


class RangeError(ValueError):
    """Right-hand side has a component along the kernel direction."""


class SolvabilityRefusedError(ValueError):
    """Resonant solve refused because the solvability verdict is not established."""

    def __init__(self, message: str, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class BoxNotLocatedError(ValueError):
    """The invariant-box amplitude search never stabilized."""


class ConfigError(ValueError):
    """Invalid problem or run configuration."""

    def __init__(self, message: str, key: str = None):
        super().__init__(message)
        self.key = key
