"""Tiny arithmetic-expression language for coefficient functions.

Grammar (one variable, six functions, no user definitions):

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' factor)?
    base   := number | variable | ident '(' expr ')' | '(' expr ')'
    ident  in {exp, log, sin, cos, sqrt, abs}

Numbers are decimal with an optional exponent. A single leading sign is
accepted so forms like ``exp(-2*x)`` parse. Parsing reports syntax errors
with the byte offset of the offending token; evaluation reports the first
abscissa at which a division by zero or non-finite value occurs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvaluationError, ExpressionError

FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

Node = Union["Num", "Var", "Neg", "Bin", "Call"]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: Node


@dataclass(frozen=True)
class Bin:
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call:
    name: str
    arg: Node


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num")), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variable: str):
        self.text = text
        self.variable = variable
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, off = self.next()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected trailing {val!r}", off)
        return node

    def expr(self) -> Node:
        kind, val, _ = self.peek()
        negate = False
        if kind == "op" and val in "+-":
            self.next()
            negate = val == "-"
        node = self.term()
        if negate:
            node = Neg(node)
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.next()
                node = Bin(val, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.next()
                node = Bin(val, node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        node = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.next()
            node = Bin("^", node, self.factor())
        return node

    def base(self) -> Node:
        kind, val, off = self.next()
        if kind == "num":
            return Num(val)
        if kind == "ident":
            if val == self.variable:
                return Var()
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            raise ExpressionError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionError(f"expected number, {self.variable!r}, or '('", off)


def _first_bad_x(x, mask) -> float:
    xa = np.broadcast_to(np.asarray(x, dtype=float), np.shape(mask))
    return float(xa[mask][0]) if np.ndim(mask) else float(xa)


def _eval(node: Node, x):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.operand, x)
    if isinstance(node, Call):
        with np.errstate(all="ignore"):
            return FUNCTIONS[node.name](_eval(node.arg, x))
    left = _eval(node.left, x)
    right = _eval(node.right, x)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        bad = np.asarray(right) == 0
        if np.any(bad):
            raise EvaluationError("division by zero", _first_bad_x(x, bad))
        return left / right
    with np.errstate(all="ignore"):
        return np.power(left, right)


def _canonical(node: Node, variable: str) -> str:
    # Fully parenthesized so a reparse reproduces the tree (and therefore
    # bit-identical floating point evaluation).
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return variable
    if isinstance(node, Neg):
        return f"(-{_canonical(node.operand, variable)})"
    if isinstance(node, Call):
        return f"{node.name}({_canonical(node.arg, variable)})"
    return (
        f"({_canonical(node.left, variable)}{node.op}"
        f"{_canonical(node.right, variable)})"
    )


@dataclass(frozen=True)
class Expression:
    """A parsed expression: evaluable, printable, hashable."""

    text: str
    root: Node
    variable: str = "x"

    def __call__(self, x):
        scalar = np.isscalar(x) or np.ndim(x) == 0
        out = _eval(self.root, np.asarray(x, dtype=float) if not scalar else float(x))
        out = np.asarray(out, dtype=float)
        bad = ~np.isfinite(out)
        if np.any(bad):
            raise EvaluationError("non-finite value", _first_bad_x(x, bad))
        return float(out) if scalar else out + np.zeros(np.shape(x))

    def canonical(self) -> str:
        return _canonical(self.root, self.variable)


def parse_expression(text: str, variable: str = "x") -> Expression:
    """Parse ``text`` into an :class:`Expression` over one variable.

    Raises :class:`ExpressionError` (with byte offset) on bad syntax and
    unknown identifiers.
    """
    if not text.strip():
        raise ExpressionError("empty expression", 0)
    root = _Parser(text, variable).parse()
    return Expression(text=text, root=root, variable=variable)
