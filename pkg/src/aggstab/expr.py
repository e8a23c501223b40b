"""Arithmetic expression language for model coefficient functions.

Coefficients (growth, removal, fecundity, aggregation kernel) are written as
strings like ``x*(1001 - x)/10`` in config files and demos. The language is
deliberately small: real literals, the variables ``x`` and ``y``, the binary
operators ``+ - * / ^``, unary minus, and the functions ``ln``, ``exp``,
``sqrt``, ``abs``, ``min``, ``max``.

``^`` is right associative and binds tighter than unary minus, so
``-2^2 == -(2^2) == -4`` while ``2^-2 == 0.25``. Evaluation is strict about
domains: ``ln``/``sqrt`` of a negative argument, division by zero, and a
fractional power of a negative base raise :class:`EvalDomainError` carrying
the evaluation point instead of silently producing NaN.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Expression",
    "ExpressionError",
    "ParseError",
    "EvalDomainError",
    "parse",
    "evaluate",
    "to_source",
    "free_variables",
]


class ExpressionError(ValueError):
    """Base class for expression parse and evaluation failures."""


class ParseError(ExpressionError):
    """Syntax or name error, with the byte offset into the source text."""

    def __init__(self, message: str, text: str, offset: int):
        super().__init__(f"{message} at offset {offset} in {text!r}")
        self.text = text
        self.offset = offset


class EvalDomainError(ExpressionError):
    """Mathematically undefined operation, with the offending point."""

    def __init__(self, message: str, point: dict | None = None):
        point = point or {}
        if point:
            where = ", ".join(f"{k}={v:.17g}" for k, v in sorted(point.items()))
            message = f"{message} (at {where})"
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expression = Union[Num, Var, Neg, BinOp, Call]

# function name -> arity
_FUNCTIONS = {"ln": 1, "exp": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2}

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent over the token list.

    Grammar (lower line binds tighter)::

        expr    := term (('+'|'-') term)*
        term    := factor (('*'|'/') factor)*
        factor  := '-' factor | power
        power   := primary ('^' factor)?
        primary := NUMBER | NAME '(' expr (',' expr)* ')' | NAME | '(' expr ')'
    """

    def __init__(self, text: str, allowed_vars: frozenset):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed_vars

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", self.text, pos)
        return self.advance()

    def parse(self) -> Expression:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", self.text, pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expression:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expression:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def primary(self) -> Expression:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in _FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", self.text, pos)
                self.advance()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect_op(")")
                if len(args) != _FUNCTIONS[text]:
                    raise ParseError(
                        f"{text} takes {_FUNCTIONS[text]} argument(s), got {len(args)}",
                        self.text,
                        pos,
                    )
                return Call(text, tuple(args))
            if text in _FUNCTIONS:
                raise ParseError(f"function {text!r} used without arguments", self.text, pos)
            if text not in self.allowed:
                raise ParseError(f"unknown variable {text!r}", self.text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {text!r}" if text else "unexpected end of input",
                         self.text, pos)


def parse(text: str, allowed_vars=("x",)) -> Expression:
    """Parse ``text`` into an AST; names outside ``allowed_vars`` are rejected."""
    if not text or not text.strip():
        raise ParseError("empty expression", text, 0)
    return _Parser(text, frozenset(allowed_vars)).parse()


def _offending_point(env: Mapping[str, object], bad: np.ndarray) -> dict:
    """Pick the first evaluation point where ``bad`` is True, for error reports."""
    idx = int(np.argmax(bad))
    point = {}
    for name, val in env.items():
        arr = np.asarray(val, dtype=float)
        if arr.shape == ():
            point[name] = float(arr)
        else:
            flat = np.broadcast_to(arr, bad.shape).reshape(-1)
            point[name] = float(flat[idx % flat.size]) if flat.size else float("nan")
    return point


def evaluate(node: Expression, env: Mapping[str, object]):
    """Evaluate ``node`` with variables bound to scalars or numpy arrays.

    Returns a float for scalar bindings and an ndarray otherwise. Domain
    violations raise :class:`EvalDomainError` at the first offending point.
    """
    result = _eval(node, env)
    if np.ndim(result) == 0:
        return float(result)
    return result


def _eval(node: Expression, env: Mapping[str, object]):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return np.asarray(env[node.name], dtype=float)
        except KeyError:
            raise EvalDomainError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            bad = np.asarray(b) == 0.0
            if np.any(bad):
                raise EvalDomainError("division by zero", _offending_point(env, np.broadcast_to(bad, np.broadcast_shapes(np.shape(a), np.shape(b)))))
            return a / b
        if node.op == "^":
            a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            frac_exp = b_arr != np.floor(b_arr)
            bad = (a_arr < 0) & frac_exp
            if np.any(bad):
                raise EvalDomainError(
                    "fractional power of a negative base",
                    _offending_point(env, np.broadcast_to(bad, np.broadcast_shapes(a_arr.shape, b_arr.shape))),
                )
            bad = (a_arr == 0) & (b_arr < 0)
            if np.any(bad):
                raise EvalDomainError(
                    "zero raised to a negative power",
                    _offending_point(env, np.broadcast_to(bad, np.broadcast_shapes(a_arr.shape, b_arr.shape))),
                )
            return np.power(a, b)
        raise AssertionError(f"bad operator {node.op}")
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.func == "ln":
            bad = np.asarray(args[0]) <= 0.0
            if np.any(bad):
                raise EvalDomainError("logarithm of a non-positive value",
                                      _offending_point(env, np.atleast_1d(bad)))
            return np.log(args[0])
        if node.func == "exp":
            return np.exp(args[0])
        if node.func == "sqrt":
            bad = np.asarray(args[0]) < 0.0
            if np.any(bad):
                raise EvalDomainError("square root of a negative value",
                                      _offending_point(env, np.atleast_1d(bad)))
            return np.sqrt(args[0])
        if node.func == "abs":
            return np.abs(args[0])
        if node.func == "min":
            return np.minimum(args[0], args[1])
        if node.func == "max":
            return np.maximum(args[0], args[1])
        raise AssertionError(f"bad function {node.func}")
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Expression) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= free_variables(a)
        return out
    return set()


# pretty printer -------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def to_source(node: Expression) -> str:
    """Render the AST back to a string that re-parses to an identical tree."""
    return _render(node)


def _render(node: Expression) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(_render(a) for a in node.args)})"
    if isinstance(node, Neg):
        # operand must re-parse as a factor: anything but +,-,*,/ binops
        inner = _render(node.operand)
        if isinstance(node.operand, BinOp) and node.operand.op != "^":
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        op = node.op
        left, right = _render(node.left), _render(node.right)
        if op == "^":
            # base must be a primary; exponent must be a factor
            if isinstance(node.left, (BinOp, Neg)):
                left = f"({left})"
            if isinstance(node.right, BinOp) and node.right.op != "^":
                right = f"({right})"
            return f"{left}^{right}"
        lp = _PREC[op]
        if isinstance(node.left, BinOp) and _PREC[node.left.op] < lp:
            left = f"({left})"
        # left associativity: same-precedence right children need parens
        if isinstance(node.right, BinOp) and _PREC[node.right.op] <= lp:
            right = f"({right})"
        return f"{left} {op} {right}" if op in "+-" else f"{left}{op}{right}"
    raise TypeError(f"not an expression node: {node!r}")
