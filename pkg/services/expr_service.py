"""
Expression service: parse scalar nonlinearities f(s), evaluate f and f'
with forward-mode dual numbers, and estimate the limits f(-inf), f(inf).

Grammar:
    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | primary ('^' factor)?
    primary := number | 's' | ident '(' expr ')' | '(' expr ')'
"""
import logging
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from services.basis_service import LegendreSeries, SpectralGrid
from services.errors import EvaluationError, ExpressionSyntaxError, LimitNotEstablishedError

logger = logging.getLogger(__name__)

LIMIT_SAMPLES = (1e6, 1e9)
LIMIT_RTOL = 1e-6
LIMIT_ATOL = 1e-9
SUP_GRID_HALF = 10000
SUBLINEAR_PROBES = (1e3, 1e5, 1e7, 1e9)
SUBLINEAR_THRESHOLD = 1e-3


class Dual:
    """value + deriv * eps with eps^2 = 0; value and deriv may be arrays."""

    __slots__ = ('value', 'deriv', 'nonsmooth')

    def __init__(self, value, deriv, nonsmooth: bool = False):
        self.value = value
        self.deriv = deriv
        self.nonsmooth = nonsmooth

    @staticmethod
    def lift(x) -> 'Dual':
        return x if isinstance(x, Dual) else Dual(x, np.zeros_like(np.asarray(x, dtype=np.float64)))

    def __add__(self, other):
        other = Dual.lift(other)
        return Dual(self.value + other.value, self.deriv + other.deriv, self.nonsmooth or other.nonsmooth)

    __radd__ = __add__

    def __sub__(self, other):
        other = Dual.lift(other)
        return Dual(self.value - other.value, self.deriv - other.deriv, self.nonsmooth or other.nonsmooth)

    def __rsub__(self, other):
        return Dual.lift(other) - self

    def __mul__(self, other):
        other = Dual.lift(other)
        return Dual(self.value * other.value,
                    self.value * other.deriv + self.deriv * other.value,
                    self.nonsmooth or other.nonsmooth)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Dual.lift(other)
        return Dual(self.value / other.value,
                    (self.deriv * other.value - self.value * other.deriv) / (other.value * other.value),
                    self.nonsmooth or other.nonsmooth)

    def __rtruediv__(self, other):
        return Dual.lift(other) / self

    def __neg__(self):
        return Dual(-self.value, -self.deriv, self.nonsmooth)

    def __pow__(self, other):
        other = Dual.lift(other)
        value = self.value ** other.value
        nonsmooth = self.nonsmooth or other.nonsmooth
        # constant exponent: power rule; otherwise d(b^e) = b^e (e' ln b + e b'/b)
        deriv = other.value * self.value ** (other.value - 1.0) * self.deriv
        if np.any(other.deriv != 0):
            deriv = deriv + value * other.deriv * np.log(self.value)
        bad = ~np.isfinite(deriv) & np.isfinite(value)
        if np.any(bad):
            deriv = np.where(bad, 0.0, deriv)
            nonsmooth = True
        return Dual(value, deriv, nonsmooth)


def _abs_derivative(x):
    return np.sign(x)


def _sqrt_derivative(x):
    root = np.sqrt(x)
    return np.divide(0.5, root, out=np.zeros_like(np.asarray(root, dtype=np.float64)), where=root != 0)


# name -> (value, derivative, nonsmooth at zero)
FUNCTIONS = {
    'sin': (np.sin, np.cos, False),
    'cos': (np.cos, lambda x: -np.sin(x), False),
    'tanh': (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2, False),
    'atan': (np.arctan, lambda x: 1.0 / (1.0 + x * x), False),
    'exp': (np.exp, np.exp, False),
    'log': (np.log, lambda x: 1.0 / x, False),
    'abs': (np.abs, _abs_derivative, True),
    'sqrt': (np.sqrt, _sqrt_derivative, True),
}

PREC_SUM, PREC_PRODUCT, PREC_UNARY, PREC_POWER, PREC_ATOM = 1, 2, 3, 4, 5


class Node:
    """Base class for expression tree nodes."""

    precedence = PREC_ATOM

    def evaluate(self, s):
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()


def _wrap(node: Node, parenthesize: bool) -> str:
    text = node.to_text()
    return f"({text})" if parenthesize else text


def _raw(x):
    return x.value if isinstance(x, Dual) else x


@dataclass(frozen=True)
class Number(Node):
    value: float

    def evaluate(self, s):
        return self.value

    def to_text(self) -> str:
        if float(self.value).is_integer() and abs(self.value) < 1e16:
            return str(int(self.value))
        return repr(float(self.value))


@dataclass(frozen=True)
class Variable(Node):
    name: str = 's'

    def evaluate(self, s):
        return s

    def to_text(self) -> str:
        return self.name


@dataclass(frozen=True)
class Negate(Node):
    operand: Node
    precedence = PREC_UNARY

    def evaluate(self, s):
        return -self.operand.evaluate(s)

    def to_text(self) -> str:
        return '-' + _wrap(self.operand, self.operand.precedence < PREC_UNARY)


@dataclass(frozen=True)
class BinaryOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def precedence(self):
        return {'+': PREC_SUM, '-': PREC_SUM, '*': PREC_PRODUCT, '/': PREC_PRODUCT, '^': PREC_POWER}[self.op]

    def evaluate(self, s):
        left = self.left.evaluate(s)
        right = self.right.evaluate(s)
        with np.errstate(all='ignore'):
            if self.op == '+':
                return left + right
            if self.op == '-':
                return left - right
            if self.op == '*':
                return left * right
            if self.op == '/':
                if np.any(np.asarray(_raw(right)) == 0):
                    raise EvaluationError("division by zero", self.to_text())
                return left / right
            base, exponent = np.asarray(_raw(left)), np.asarray(_raw(right))
            if np.any((base < 0) & (exponent != np.round(exponent))):
                raise EvaluationError("negative base with non-integer exponent", self.to_text())
            if np.any((base == 0) & (exponent < 0)):
                raise EvaluationError("zero raised to a negative power", self.to_text())
            if isinstance(left, Dual) or isinstance(right, Dual):
                return Dual.lift(left) ** right
            return np.power(np.asarray(left, dtype=np.float64), right)

    def to_text(self) -> str:
        if self.op == '^':
            base = _wrap(self.left, self.left.precedence < PREC_ATOM)
            exponent = _wrap(self.right, self.right.precedence < PREC_UNARY)
            return f"{base}^{exponent}"
        prec = self.precedence
        left = _wrap(self.left, self.left.precedence < prec)
        right = _wrap(self.right, self.right.precedence <= prec)
        sep = f" {self.op} " if prec == PREC_SUM else self.op
        return f"{left}{sep}{right}"


@dataclass(frozen=True)
class Call(Node):
    name: str
    arg: Node

    def evaluate(self, s):
        x = self.arg.evaluate(s)
        raw = np.asarray(_raw(x))
        if self.name == 'log' and np.any(raw <= 0):
            raise EvaluationError("log of nonpositive argument", self.to_text())
        if self.name == 'sqrt' and np.any(raw < 0):
            raise EvaluationError("sqrt of negative argument", self.to_text())
        value_fn, deriv_fn, kinked = FUNCTIONS[self.name]
        with np.errstate(all='ignore'):
            if not isinstance(x, Dual):
                return value_fn(x)
            value = value_fn(x.value)
            deriv = deriv_fn(x.value) * x.deriv
        nonsmooth = x.nonsmooth
        if kinked and np.any((raw == 0) & (np.asarray(x.deriv) != 0)):
            deriv = np.where(raw == 0, 0.0, deriv)
            nonsmooth = True
        return Dual(value, deriv, nonsmooth)

    def to_text(self) -> str:
        return f"{self.name}({self.arg.to_text()})"


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    position = 0
    while position < len(text):
        if text[position:].strip() == '':
            break
        match = _TOKEN.match(text, position)
        if match is None:
            start = position + len(text[position:]) - len(text[position:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character '{text[start]}'", _byte_offset(text, start))
        kind = match.lastgroup
        tokens.append(Token(kind, match.group(kind), _byte_offset(text, match.start(kind))))
        position = match.end()
    tokens.append(Token('end', '', _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode('utf-8'))


class _Parser:
    """Recursive-descent parser over the token list."""

    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def accept_op(self, *ops) -> Optional[Token]:
        if self.current.kind == 'op' and self.current.text in ops:
            return self.advance()
        return None

    def fail(self, message: str):
        token = self.current
        found = 'end of input' if token.kind == 'end' else f"'{token.text}'"
        raise ExpressionSyntaxError(f"{message}, found {found}", token.offset)

    def parse(self) -> Node:
        node = self.expr()
        if self.current.kind != 'end':
            self.fail("expected operator")
        return node

    def expr(self) -> Node:
        node = self.term()
        while (token := self.accept_op('+', '-')) is not None:
            node = BinaryOp(token.text, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while (token := self.accept_op('*', '/')) is not None:
            node = BinaryOp(token.text, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept_op('-') is not None:
            return Negate(self.factor())
        base = self.primary()
        if self.accept_op('^') is not None:
            return BinaryOp('^', base, self.factor())
        return base

    def primary(self) -> Node:
        token = self.current
        if token.kind == 'num':
            self.advance()
            return Number(float(token.text))
        if token.kind == 'ident':
            self.advance()
            if token.text == 's':
                return Variable()
            if token.text not in FUNCTIONS:
                raise ExpressionSyntaxError(f"unknown identifier '{token.text}'", token.offset)
            if self.accept_op('(') is None:
                self.fail(f"expected '(' after '{token.text}'")
            args = [self.expr()]
            while self.accept_op(',') is not None:
                args.append(self.expr())
            if self.accept_op(')') is None:
                self.fail("expected ')'")
            if len(args) != 1:
                raise ExpressionSyntaxError(
                    f"arity mismatch: '{token.text}' takes 1 argument, got {len(args)}", token.offset)
            return Call(token.text, args[0])
        if self.accept_op('(') is not None:
            node = self.expr()
            if self.accept_op(')') is None:
                self.fail("expected ')'")
            return node
        self.fail("expected number, 's', function call or '('")


@dataclass(frozen=True)
class DualEvaluation:
    value: float
    deriv: float
    nonsmooth: bool


@dataclass(frozen=True)
class ScalarFunction:
    """Parsed nonlinearity f(s) with optional declared limits (f(-inf), f(inf))."""

    ast: Node
    text: str
    declared_limits: Optional[tuple[float, float]] = None

    def __call__(self, s):
        return ExpressionService.evaluate(self, s)

    def pretty(self) -> str:
        return self.ast.to_text()


@dataclass(frozen=True)
class SublinearityVerdict:
    consistent: bool
    ratios: tuple

    @property
    def label(self) -> str:
        return "consistent with sublinear" if self.consistent else "inconsistent"


class NonlinearOperatorF:
    """
    The Nemytskii operator x -> eps * f(x(t)) realized on a spectral grid:
    composition at the quadrature nodes, no smoothing.
    """

    def __init__(self, f: ScalarFunction, grid: SpectralGrid, epsilon: float = 1.0):
        self.f = f
        self.grid = grid
        self.epsilon = float(epsilon)

    @property
    def rule(self):
        return self.grid.rule

    def _node_values(self, x) -> np.ndarray:
        # raw coefficient arrays are accepted so diverging iterates can be inspected
        if isinstance(x, LegendreSeries):
            return self.grid.values(x)
        return self.grid.synthesis @ np.asarray(x, dtype=np.float64)

    def values(self, x) -> np.ndarray:
        return self.epsilon * np.asarray(self.f(self._node_values(x)), dtype=np.float64)

    def values_and_derivatives(self, x) -> tuple[np.ndarray, np.ndarray]:
        result = ExpressionService.evaluate_dual(self.f, self._node_values(x))
        return self.epsilon * result.value, self.epsilon * result.deriv

    def coefficients(self, x) -> np.ndarray:
        return self.grid.coefficients(self.values(x))


class ExpressionService:
    """Parsing, evaluation and limit analysis of scalar nonlinearities."""

    @staticmethod
    def parse(text: str, declared_limits: Optional[tuple[float, float]] = None) -> ScalarFunction:
        """
        Parse an expression in the variable s.

        Args:
            text: Expression source
            declared_limits: Optional (f(-inf), f(inf)) taking precedence over estimation

        Returns:
            ScalarFunction: Parsed function
        """
        if not isinstance(text, str):
            raise ExpressionSyntaxError("expression must be a string", 0)
        ast = _Parser(text).parse()
        if declared_limits is not None:
            declared_limits = (float(declared_limits[0]), float(declared_limits[1]))
        return ScalarFunction(ast=ast, text=text, declared_limits=declared_limits)

    @staticmethod
    def pretty_print(f: ScalarFunction) -> str:
        return f.ast.to_text()

    @staticmethod
    def evaluate(f: ScalarFunction, s):
        """f(s) for a real or an array of reals."""
        with np.errstate(all='ignore'):
            value = f.ast.evaluate(np.asarray(s, dtype=np.float64))
        value = np.broadcast_to(np.asarray(value, dtype=np.float64), np.shape(s))
        return float(value) if value.ndim == 0 else np.array(value)

    @staticmethod
    def evaluate_dual(f: ScalarFunction, s) -> DualEvaluation:
        """Value, derivative and nonsmooth flag by forward-mode propagation."""
        x = np.asarray(s, dtype=np.float64)
        with np.errstate(all='ignore'):
            result = Dual.lift(f.ast.evaluate(Dual(x, np.ones_like(x))))
        shape = np.shape(s)
        value = np.broadcast_to(np.asarray(result.value, dtype=np.float64), shape)
        deriv = np.broadcast_to(np.asarray(result.deriv, dtype=np.float64), shape)
        if value.ndim == 0:
            return DualEvaluation(float(value), float(deriv), result.nonsmooth)
        return DualEvaluation(np.array(value), np.array(deriv), result.nonsmooth)

    @staticmethod
    def eval_with_deriv(f: ScalarFunction, s: float) -> tuple[float, float]:
        """
        (f(s), f'(s)) via dual numbers.

        abs and sqrt report derivative 0 at a kink; this is logged.
        """
        result = ExpressionService.evaluate_dual(f, s)
        if result.nonsmooth:
            logger.warning("nonsmooth point of '%s' at s=%r; derivative set to 0", f.pretty(), s)
        return result.value, result.deriv

    @staticmethod
    def limits_at_infinity(f: ScalarFunction) -> tuple[float, float]:
        """
        Return (f(-inf), f(inf)).

        Declared limits are returned unchanged. Otherwise f is sampled at
        +-1e6 and +-1e9; each side must agree to relative 1e-6 (absolute 1e-9
        near zero). This is a heuristic, not a proof.

        Raises:
            LimitNotEstablishedError: When either side fails to settle
        """
        if f.declared_limits is not None:
            return f.declared_limits

        limits = []
        for sign, side in ((-1.0, '-inf'), (1.0, '+inf')):
            try:
                near, far = (ExpressionService.evaluate(f, sign * s) for s in LIMIT_SAMPLES)
            except EvaluationError as e:
                raise LimitNotEstablishedError(f"limit not established at {side}: {e}") from e
            if not (np.isfinite(near) and np.isfinite(far)):
                raise LimitNotEstablishedError(f"limit not established at {side}: f diverges")
            if abs(far - near) > max(LIMIT_RTOL * max(abs(near), abs(far)), LIMIT_ATOL):
                raise LimitNotEstablishedError(
                    f"limit not established at {side}: f({sign * LIMIT_SAMPLES[0]:g})={near!r}, "
                    f"f({sign * LIMIT_SAMPLES[1]:g})={far!r}")
            limits.append(far)
        return limits[0], limits[1]

    @staticmethod
    def sup_abs_estimate(f: ScalarFunction) -> float:
        """
        Lower estimate of r = sup |f| over the reals.

        Max of |f| on a 20001-point logarithmically spaced grid on
        [-1e9, 1e9] together with the two limit magnitudes.
        """
        lower, upper = ExpressionService.limits_at_infinity(f)
        magnitudes = np.geomspace(1e-6, 1e9, SUP_GRID_HALF)
        points = np.concatenate([-magnitudes[::-1], [0.0], magnitudes])
        values = np.abs(ExpressionService.evaluate(f, points))
        return float(max(np.nanmax(values), abs(lower), abs(upper)))

    @staticmethod
    def sublinearity_probe(f: ScalarFunction) -> SublinearityVerdict:
        """
        Advisory check of lim |f(s)|/|s| = 0 from samples at |s| in
        {1e3, 1e5, 1e7, 1e9}.
        """
        ratios = []
        for magnitude in SUBLINEAR_PROBES:
            try:
                worst = max(abs(ExpressionService.evaluate(f, magnitude)),
                            abs(ExpressionService.evaluate(f, -magnitude)))
            except EvaluationError:
                worst = np.inf
            ratios.append(float(worst / magnitude) if np.isfinite(worst) else float('inf'))
        consistent = bool(np.isfinite(ratios[-1]) and ratios[-1] < SUBLINEAR_THRESHOLD and ratios[-1] <= ratios[0])
        return SublinearityVerdict(consistent=consistent, ratios=tuple(ratios))
