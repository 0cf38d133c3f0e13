"""Differentiable scalar expressions over a fixed variable vector.

Expression trees are closed under differentiation: the gradient and Hessian
of any expression are again expressions, computed symbolically with constant
folding. Evaluation is vectorized over batches of points. The text syntax is
standard infix arithmetic over variables ``x1 .. xn`` with ``+ - * / ^`` and
parentheses, where ``^`` takes integer literals only (so every expression is
twice continuously differentiable wherever it is defined).

Trees built through the lowercase constructor helpers (:func:`add`,
:func:`mul`, ...) are kept in a normalized form; for such trees
``parse_expression(to_string(e))`` returns a structurally identical tree.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Neg",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "power",
    "neg",
    "diff",
    "gradient_exprs",
    "hessian_exprs",
    "evaluate",
    "to_string",
    "parse_expression",
    "ExprSyntaxError",
    "EvaluationDomainError",
]


class ExprSyntaxError(ValueError):
    """Malformed expression text; carries the offending column when known."""

    def __init__(self, message: str, column: int | None = None):
        self.column = column
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message)


class EvaluationDomainError(ArithmeticError):
    """Evaluation hit a division by zero or ``0 ^ negative``."""


class Expression:
    """Base class for all expression nodes. Nodes are immutable."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Expression):
    value: float


@dataclass(frozen=True)
class Var(Expression):
    index: int  # zero-based; rendered as x{index+1}


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Pow(Expression):
    base: Expression
    exponent: int


@dataclass(frozen=True)
class Neg(Expression):
    operand: Expression


# ---------------------------------------------------------------------------
# Normalizing constructors (constant folding)
# ---------------------------------------------------------------------------


def const(value: float) -> Const:
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"constants must be finite, got {value!r}")
    return Const(v)


def var(index: int) -> Var:
    i = int(index)
    if i < 0:
        raise ValueError("variable index must be nonnegative")
    return Var(i)


def _finite(v: float) -> float | None:
    return v if math.isfinite(v) else None


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _finite(a.value + b.value)
        if folded is not None:
            return Const(folded)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Add(a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _finite(a.value - b.value)
        if folded is not None:
            return Const(folded)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return neg(b)
    return Sub(a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _finite(a.value * b.value)
        if folded is not None:
            return Const(folded)
    if isinstance(a, Const):
        if a.value == 0.0:
            return Const(0.0)
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return Const(0.0)
        if b.value == 1.0:
            return a
    return Mul(a, b)


def div(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const) and b.value != 0.0:
        if isinstance(a, Const):
            folded = _finite(a.value / b.value)
            if folded is not None:
                return Const(folded)
        if b.value == 1.0:
            return a
    return Div(a, b)


def power(a: Expression, k: int) -> Expression:
    k = int(k)
    if k == 0:
        return Const(1.0)
    if k == 1:
        return a
    if isinstance(a, Const):
        try:
            folded = _finite(a.value**k)
        except (OverflowError, ZeroDivisionError):
            folded = None
        if folded is not None:
            return Const(folded)
    return Pow(a, k)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def diff(e: Expression, i: int) -> Expression:
    """Exact partial derivative of ``e`` with respect to variable ``i``."""
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0) if e.index == i else Const(0.0)
    if isinstance(e, Add):
        return add(diff(e.left, i), diff(e.right, i))
    if isinstance(e, Sub):
        return sub(diff(e.left, i), diff(e.right, i))
    if isinstance(e, Mul):
        return add(mul(diff(e.left, i), e.right), mul(e.left, diff(e.right, i)))
    if isinstance(e, Div):
        num = sub(mul(diff(e.left, i), e.right), mul(e.left, diff(e.right, i)))
        return div(num, power(e.right, 2))
    if isinstance(e, Pow):
        inner = mul(const(e.exponent), power(e.base, e.exponent - 1))
        return mul(inner, diff(e.base, i))
    if isinstance(e, Neg):
        return neg(diff(e.operand, i))
    raise TypeError(f"not an expression node: {e!r}")


def gradient_exprs(e: Expression, n: int) -> list[Expression]:
    """Symbolic gradient as a list of ``n`` expressions."""
    return [diff(e, i) for i in range(n)]


def hessian_exprs(e: Expression, n: int) -> list[list[Expression]]:
    """Symbolic Hessian; the (i, j) and (j, i) slots share one object."""
    grads = gradient_exprs(e, n)
    H: list[list[Expression]] = [[Const(0.0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            d = diff(grads[i], j)
            H[i][j] = d
            H[j][i] = d
    return H


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _eval(e: Expression, x: np.ndarray):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x[e.index]
    if isinstance(e, Add):
        return _eval(e.left, x) + _eval(e.right, x)
    if isinstance(e, Sub):
        return _eval(e.left, x) - _eval(e.right, x)
    if isinstance(e, Mul):
        return _eval(e.left, x) * _eval(e.right, x)
    if isinstance(e, Div):
        den = _eval(e.right, x)
        if np.any(np.asarray(den) == 0.0):
            raise EvaluationDomainError(
                f"division by zero evaluating '{to_string(e.right)}'"
            )
        return _eval(e.left, x) / den
    if isinstance(e, Pow):
        base = _eval(e.base, x)
        if e.exponent < 0 and np.any(np.asarray(base) == 0.0):
            raise EvaluationDomainError(
                f"zero raised to negative power evaluating '{to_string(e)}'"
            )
        return base**e.exponent
    if isinstance(e, Neg):
        return -_eval(e.operand, x)
    raise TypeError(f"not an expression node: {e!r}")


def evaluate(e: Expression, x: np.ndarray):
    """Evaluate ``e`` at a point ``x`` of shape (n,) or a batch (n, m).

    Returns a float for a single point, or an array of shape (m,) for a
    batch. Raises :class:`EvaluationDomainError` on division by zero or
    ``0 ^ negative`` anywhere in the batch.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return float(_eval(e, x))
    if x.ndim == 2:
        out = np.asarray(_eval(e, x), dtype=float)
        return np.broadcast_to(out, (x.shape[1],)).copy()
    raise ValueError("x must be one- or two-dimensional")


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


def _prec(e: Expression) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Const) and math.copysign(1.0, e.value) < 0:
        return _PREC_NEG  # renders with a leading '-'
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _wrap(child: Expression, parent_prec: int, strict: bool) -> str:
    s = to_string(child)
    p = _prec(child)
    if p < parent_prec or (strict and p == parent_prec):
        return f"({s})"
    return s


def to_string(e: Expression) -> str:
    """Render an expression in the text syntax accepted by the parser."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Add):
        return f"{_wrap(e.left, _PREC_ADD, False)} + {_wrap(e.right, _PREC_ADD, True)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.left, _PREC_ADD, False)} - {_wrap(e.right, _PREC_ADD, True)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.left, _PREC_MUL, False)}*{_wrap(e.right, _PREC_MUL, True)}"
    if isinstance(e, Div):
        return f"{_wrap(e.left, _PREC_MUL, False)}/{_wrap(e.right, _PREC_MUL, True)}"
    if isinstance(e, Neg):
        return f"-{_wrap(e.operand, _PREC_NEG, True)}"
    if isinstance(e, Pow):
        base = to_string(e.base)
        if not (isinstance(e.base, Var) or (isinstance(e.base, Const) and _prec(e.base) == _PREC_ATOM)):
            base = f"({base})"
        return f"{base}^{e.exponent}"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)

_VAR_NAME_RE = re.compile(r"^x([1-9][0-9]*)$")


class _Token:
    __slots__ = ("kind", "text", "column")

    def __init__(self, kind: str, text: str, column: int):
        self.kind = kind
        self.text = text
        self.column = column


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", column=pos + 1)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(), pos + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], n_vars: int | None, end_column: int):
        self.tokens = tokens
        self.pos = 0
        self.n_vars = n_vars
        self.end_column = end_column

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> _Token:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of expression", column=self.end_column)
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> None:
        tok = self.advance()
        if tok.kind != "op" or tok.text != text:
            raise ExprSyntaxError(f"expected {text!r}, got {tok.text!r}", column=tok.column)

    def parse_sum(self) -> Expression:
        e = self.parse_term()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in "+-":
                self.advance()
                rhs = self.parse_term()
                e = add(e, rhs) if tok.text == "+" else sub(e, rhs)
            else:
                return e

    def parse_term(self) -> Expression:
        e = self.parse_unary()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in "*/":
                self.advance()
                rhs = self.parse_unary()
                e = mul(e, rhs) if tok.text == "*" else div(e, rhs)
            else:
                return e

    def parse_unary(self) -> Expression:
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "-":
            self.advance()
            return neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expression:
        base = self.parse_atom()
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "^":
            self.advance()
            return power(base, self.parse_exponent())
        return base

    def parse_exponent(self) -> int:
        sign = 1
        tok = self.advance()
        if tok.kind == "op" and tok.text == "-":
            sign = -1
            tok = self.advance()
        if tok.kind != "number":
            raise ExprSyntaxError("exponent must be an integer literal", column=tok.column)
        if any(c in tok.text for c in ".eE"):
            raise ExprSyntaxError(
                f"exponent must be an integer literal, got {tok.text!r}", column=tok.column
            )
        return sign * int(tok.text)

    def parse_atom(self) -> Expression:
        tok = self.advance()
        if tok.kind == "number":
            return const(float(tok.text))
        if tok.kind == "ident":
            m = _VAR_NAME_RE.match(tok.text)
            if m is None:
                raise ExprSyntaxError(
                    f"unknown identifier {tok.text!r} (variables are x1..xn)",
                    column=tok.column,
                )
            index = int(m.group(1))
            if self.n_vars is not None and index > self.n_vars:
                raise ExprSyntaxError(
                    f"variable index out of range: {tok.text!r} with {self.n_vars} variables",
                    column=tok.column,
                )
            return var(index - 1)
        if tok.kind == "op" and tok.text == "(":
            e = self.parse_sum()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected token {tok.text!r}", column=tok.column)


def parse_expression(text: str, n_vars: int | None = None) -> Expression:
    """Parse an infix expression; variables must be ``x1 .. x{n_vars}``."""
    tokens = _tokenize(text)
    if not tokens:
        raise ExprSyntaxError("empty expression", column=1)
    parser = _Parser(tokens, n_vars, end_column=len(text) + 1)
    e = parser.parse_sum()
    leftover = parser.peek()
    if leftover is not None:
        raise ExprSyntaxError(f"unexpected token {leftover.text!r}", column=leftover.column)
    return e
