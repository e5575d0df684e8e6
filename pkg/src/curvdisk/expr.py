"""Closed-form curvature expressions: tokenizer, Pratt parser, vectorized evaluator.

Grammar (whitespace ignored)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Variables are ``x1, x2, r, theta``; ``pi`` is a constant.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

VARIABLES = ("x1", "x2", "r", "theta")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ArithmeticError):
    pass


# ---- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


# ---- tokenizer ------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


def _tokenize(src: str):
    pos = 0
    out = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(src)))
    return out


# ---- parser -------------------------------------------------------------------

_BINARY_BP = {"+": 10, "-": 10, "*": 20, "/": 20}
_UNARY_BP = 30
_POW_BP = 40


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, pos = self.peek()
        if val != text or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {text!r}, found {what}", pos)
        self.advance()

    def parse(self):
        node = self.expression(0)
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def expression(self, min_bp: int):
        left = self.prefix()
        while True:
            kind, val, pos = self.peek()
            if kind != "op" or val in "()":
                break
            if val == "^":
                if _POW_BP < min_bp:
                    break
                self.advance()
                # right operand binds at unary level: 2^-1 and 2^3^2 = 2^(3^2)
                left = BinOp("^", left, self.expression(_UNARY_BP))
                continue
            bp = _BINARY_BP[val]
            if bp <= min_bp:
                break
            self.advance()
            left = BinOp(val, left, self.expression(bp))
        return left

    def prefix(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val in "+-":
            arg = self.expression(_UNARY_BP)
            return Neg(arg) if val == "-" else arg
        if kind == "op" and val == "(":
            node = self.expression(0)
            self.expect(")")
            return node
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expression(0)
                self.expect(")")
                return Call(val, arg)
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Const(val)
            raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", pos)
        raise ExprSyntaxError(f"unexpected token {val!r}", pos)


# ---- public API --------------------------------------------------------------

class Expression:
    """Parsed expression; immutable and safe to evaluate concurrently."""

    __slots__ = ("ast", "source")

    def __init__(self, ast, source: str = ""):
        self.ast = ast
        self.source = source

    def __repr__(self):
        return f"Expression({pretty(self.ast)!r})"

    def __str__(self):
        return pretty(self.ast)

    def __eq__(self, other):
        return isinstance(other, Expression) and self.ast == other.ast

    def __hash__(self):
        return hash(self.ast)

    @property
    def variables(self) -> set[str]:
        return _free_vars(self.ast)

    def __call__(self, x1=0.0, x2=0.0, r=None, theta=None):
        return self.evaluate(x1, x2, r, theta)

    def evaluate(self, x1=0.0, x2=0.0, r=None, theta=None):
        """Vectorized evaluation. Missing polar/Cartesian coordinates are derived."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if r is None:
            r = np.hypot(x1, x2)
        if theta is None:
            theta = np.mod(np.arctan2(x2, x1), 2.0 * np.pi)
        env = {"x1": x1, "x2": x2, "r": np.asarray(r, dtype=float),
               "theta": np.asarray(theta, dtype=float)}
        with np.errstate(all="ignore"):
            out = _eval(self.ast, env)
        out = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise ExprDomainError(f"non-finite value in {self}")
        return out if out.ndim else float(out)

    def at_polar(self, r, theta):
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return self.evaluate(r * np.cos(theta), r * np.sin(theta), r, theta)

    def on_boundary(self, theta):
        """Evaluate on the unit circle (x1 = cos theta, x2 = sin theta, r = 1)."""
        theta = np.asarray(theta, dtype=float)
        return self.evaluate(np.cos(theta), np.sin(theta), np.ones_like(theta), theta)


def parse(src: str) -> Expression:
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    return Expression(_Parser(src).parse(), src)


def evaluate(e: Expression | str, **point):
    if isinstance(e, str):
        e = parse(e)
    if "r" in point and "theta" in point and "x1" not in point:
        return e.at_polar(point["r"], point["theta"])
    if set(point) == {"theta"}:
        return e.on_boundary(point["theta"])
    return e.evaluate(**point)


def _free_vars(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return _free_vars(node.arg)
    if isinstance(node, BinOp):
        return _free_vars(node.left) | _free_vars(node.right)
    return set()


def _pow(base, expo):
    base, expo = np.broadcast_arrays(np.asarray(base, float), np.asarray(expo, float))
    bad = (base < 0) & (expo != np.round(expo))
    if np.any(bad):
        raise ExprDomainError("non-integer power of a negative number")
    if np.any((base == 0) & (expo < 0)):
        raise ExprDomainError("zero raised to a negative power")
    return np.power(base, expo)


def _call(func, x):
    if func == "sqrt":
        if np.any(x < 0):
            raise ExprDomainError("sqrt of a negative number")
        return np.sqrt(x)
    if func == "log":
        if np.any(x <= 0):
            raise ExprDomainError("log of a nonpositive number")
        return np.log(x)
    return getattr(np, func)(x)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        return _call(node.func, _eval(node.arg, env))
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(np.asarray(b) == 0):
            raise ExprDomainError("division by zero")
        return a / b
    return _pow(a, b)


# ---- pretty printer ------------------------------------------------------------

def _num_str(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _prec(node) -> int:
    if isinstance(node, BinOp):
        return {"+": 10, "-": 10, "*": 20, "/": 20, "^": _POW_BP}[node.op]
    if isinstance(node, Neg):
        return _UNARY_BP
    return 100


def pretty(node) -> str:
    """Canonical text with minimal parentheses; parse(pretty(e)) == e."""
    if isinstance(node, Num):
        return _num_str(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({pretty(node.arg)})"
    if isinstance(node, Neg):
        inner = pretty(node.arg)
        if _prec(node.arg) < _POW_BP:
            inner = f"({inner})"
        return f"-{inner}"
    p = _prec(node)
    ls, rs = pretty(node.left), pretty(node.right)
    if node.op == "^":
        if _prec(node.left) <= _POW_BP:
            ls = f"({ls})"
        if _prec(node.right) < _POW_BP:
            rs = f"({rs})"
        return f"{ls}^{rs}"
    if _prec(node.left) < p:
        ls = f"({ls})"
    if _prec(node.right) <= p:
        rs = f"({rs})"
    return f"{ls} {node.op} {rs}"
