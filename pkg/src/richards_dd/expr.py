"""Small arithmetic expression language for initial, boundary and source data.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Names: the variables ``x, z, t, u`` plus any constants supplied by the caller
(``pi`` is always available). Functions: sin, cos, exp, min, max.
Expressions evaluate elementwise over numpy arrays.
"""

from __future__ import annotations

import math
import re

import numpy as np

VARIABLES = ("x", "z", "t", "u")
FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\S))")


class ExpressionError(ValueError):
    pass


def _tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif name is not None:
            out.append(("name", name))
        else:
            if op not in "+-*/^(),":
                raise ExpressionError(f"unexpected character {op!r} in {text!r}")
            out.append(("op", op))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, text, constants, variables=VARIABLES):
        self.text = text
        self.variables = variables
        self.tokens = _tokenize(text)
        self.i = 0
        self.constants = constants

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, value=None):
        tok = self.tokens[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ExpressionError(f"expected {want!r} but found {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        self.take("end")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = _binary(op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            node = _binary(op, node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            inner = self.unary()
            return lambda env: -inner(env)
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            exponent = self.unary()
            return lambda env: np.power(base(env), exponent(env))
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return lambda env: val
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                return self.call(val)
            if val in self.variables:
                return lambda env: env[val]
            if val in self.constants:
                c = float(self.constants[val])
                return lambda env: c
            raise ExpressionError(f"unknown name {val!r} in {self.text!r}")
        if kind == "end":
            raise ExpressionError(f"unexpected end of expression {self.text!r}")
        raise ExpressionError(f"unexpected {val!r} in {self.text!r}")

    def call(self, name):
        if name not in FUNCTIONS:
            raise ExpressionError(f"unknown function {name!r} in {self.text!r}")
        arity, fn = FUNCTIONS[name]
        self.take("op", "(")
        args = [self.expr()]
        while self.peek() == ("op", ","):
            self.take()
            args.append(self.expr())
        self.take("op", ")")
        if len(args) != arity:
            raise ExpressionError(f"{name} takes {arity} argument(s), got {len(args)}")
        return lambda env: fn(*(a(env) for a in args))


def _binary(op, lhs, rhs):
    if op == "+":
        return lambda env: lhs(env) + rhs(env)
    if op == "-":
        return lambda env: lhs(env) - rhs(env)
    if op == "*":
        return lambda env: lhs(env) * rhs(env)
    return lambda env: lhs(env) / rhs(env)


class Expression:
    """Compiled expression; call with keyword arrays ``x, z, t, u``."""

    def __init__(self, text: str, constants: dict | None = None, variables=VARIABLES):
        consts = {"pi": math.pi}
        consts.update(constants or {})
        self.text = text
        self._fn = _Parser(text, consts, tuple(variables)).parse()

    def __call__(self, x=0.0, z=0.0, t=0.0, u=0.0):
        env = {"x": x, "z": z, "t": t, "u": u}
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._fn(env), dtype=float), shape)
        return np.array(out)

    def __repr__(self):
        return f"Expression({self.text!r})"


def constant(text: str) -> float:
    """Evaluate a variable-free expression such as ``5/3``."""
    return float(Expression(text, variables=())())
