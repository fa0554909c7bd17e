"""Analytic expression language for embeddings and auxiliary fields.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-u^2`` is
``-(u^2)`` and ``2^-1`` is ``2^(-1)``.  Angles are radians; there is no
implicit multiplication.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import jets
from .jets import Jet, JetDomainError

FUNCTION_NAMES = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh")
CHART_VARIABLES = ("u", "v", "t")
AMBIENT_VARIABLES = ("x", "y", "z")


class ExprSyntaxError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprEvalError(ValueError):
    def __init__(self, message, offset=None, point=None):
        where = f" (node at offset {offset})" if offset is not None else ""
        if point is not None:
            where += f" at (u, v, t) = {tuple(float(p) for p in point)}"
        super().__init__(message + where)
        self.offset = offset
        self.point = point


# -- AST ------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Param:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: object
    pos: int = field(default=0, compare=False)


# -- tokenizer / parser ---------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    toks, i = [], 0
    while True:
        while i < len(text) and text[i].isspace():
            i += 1
        if i >= len(text):
            break
        m = _TOKEN.match(text, i)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        i = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            raise ExprSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.term(), pos)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            node = BinOp(op, node, self.unary(), pos)
        return node

    def unary(self):
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary(), pos)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return BinOp("^", base, self.unary(), pos)
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val), pos)
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val not in FUNCTION_NAMES:
                    raise ExprSyntaxError(f"unknown function {val!r}", pos)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg, pos)
            if val in FUNCTION_NAMES:
                raise ExprSyntaxError(f"function {val!r} needs an argument list", pos)
            if val in CHART_VARIABLES or val in AMBIENT_VARIABLES:
                return Var(val, pos)
            return Param(val, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExprSyntaxError(f"expected an operand, found {val or 'end of input'!r}", pos)


def parse(text: str):
    """Parse expression text into an AST; raises :class:`ExprSyntaxError`."""
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    p = _Parser(text)
    node = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {val!r}", pos)
    return node


# -- printing -------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def to_text(node) -> str:
    """Render with the minimal parentheses that reparse to the same tree."""
    if isinstance(node, Num):
        if not (math.isfinite(node.value) and node.value >= 0):
            raise ValueError(f"literal {node.value!r} has no textual form")
        return repr(float(node.value))
    if isinstance(node, (Var, Param)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < _PREC["neg"] else inner)
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left}{node.op}{right}"


def free_names(node):
    """Return ``(variables, parameters)`` referenced by the tree."""
    vars_, params = set(), set()

    def walk(n):
        if isinstance(n, Var):
            vars_.add(n.name)
        elif isinstance(n, Param):
            params.add(n.name)
        elif isinstance(n, Neg):
            walk(n.operand)
        elif isinstance(n, BinOp):
            walk(n.left)
            walk(n.right)
        elif isinstance(n, Call):
            walk(n.arg)

    walk(node)
    return vars_, params


# -- evaluation -----------------------------------------------------------

def _const_exponent(e: Jet):
    """Return the exponent as a float if the jet is a single constant, else None."""
    if np.any(e.coeffs[1:] != 0):
        return None
    vals = np.unique(e.value)
    return float(vals[0]) if vals.size == 1 else None


def eval_jet(ast, at, params: Mapping[str, float] | None = None, K: int = jets.DEFAULT_ORDER, env=None) -> Jet:
    """Jet of the expression about the point(s) ``at = (u, v, t)``.

    ``u, v, t`` may be scalars or equally shaped arrays (a batch of nodes).
    ``env`` optionally binds the ambient names ``x, y, z`` to jets.
    """
    params = dict(params or {})
    u, v, t = (np.asarray(a, dtype=float) for a in at)
    shape = np.broadcast_shapes(u.shape, v.shape, t.shape)
    u, v, t = (np.broadcast_to(a, shape) for a in (u, v, t))
    if K == 0:
        seeds = {n: Jet.const(a, 0) for n, a in zip(CHART_VARIABLES, (u, v, t))}
    else:
        seeds = {n: Jet.variable(n, a, K) for n, a in zip(CHART_VARIABLES, (u, v, t))}
    if env:
        seeds.update(env)

    def point_of(where):
        if not shape:
            return (float(u), float(v), float(t))
        if where.size == 0:
            return None
        k = int(where[0]) % u.size
        return (u.flat[k], v.flat[k], t.flat[k])

    def ev(n):
        if isinstance(n, Num):
            return Jet.const(np.full(shape, n.value), K)
        if isinstance(n, Var):
            if n.name not in seeds:
                raise ExprEvalError(f"variable {n.name!r} is not bound here", n.pos)
            return seeds[n.name]
        if isinstance(n, Param):
            if n.name not in params:
                raise ExprEvalError(f"unresolved parameter {n.name!r}", n.pos)
            return Jet.const(np.full(shape, float(params[n.name])), K)
        try:
            if isinstance(n, Neg):
                return -ev(n.operand)
            if isinstance(n, Call):
                return jets.FUNCTIONS[n.func](ev(n.arg))
            a, b = ev(n.left), ev(n.right)
            if n.op == "+":
                return a + b
            if n.op == "-":
                return a - b
            if n.op == "*":
                return a * b
            if n.op == "/":
                return a / b
            p = _const_exponent(b)
            return jets.power(a, b if p is None else p)
        except JetDomainError as exc:
            raise ExprEvalError(f"domain error: {exc}", n.pos, point_of(exc.where)) from exc

    return ev(ast)


def eval_real(ast, point: Mapping[str, float], params: Mapping[str, float] | None = None, lib=math):
    """Direct scalar evaluation; ``lib`` supplies the elementary functions (``math`` or ``mpmath``)."""
    params = dict(params or {})

    def ev(n):
        if isinstance(n, Num):
            return lib.mpf(n.value) if lib is not math else n.value
        if isinstance(n, Var):
            return point[n.name]
        if isinstance(n, Param):
            return params[n.name]
        if isinstance(n, Neg):
            return -ev(n.operand)
        if isinstance(n, Call):
            return getattr(lib, n.func)(ev(n.arg))
        a, b = ev(n.left), ev(n.right)
        if n.op == "+":
            return a + b
        if n.op == "-":
            return a - b
        if n.op == "*":
            return a * b
        if n.op == "/":
            return a / b
        if a <= 0 and float(b) != int(float(b)):
            raise ExprEvalError("non-integer power of a non-positive base", n.pos)
        return a**b

    return ev(ast)
