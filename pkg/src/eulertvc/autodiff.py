"""Forward-mode dual numbers and expression evaluation.

Dual parts may themselves be :class:`Dual`, which gives mixed second
derivatives from a nested pass (used by the solver's Jacobian).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .dsl import Binary, Const, Expr, Param, Time, Unary, Var

__all__ = [
    "Dual",
    "DomainError",
    "StageEnv",
    "dlog",
    "dexp",
    "powi",
    "real_part",
    "compile_expr",
    "evaluate",
    "partial",
    "grad_stage",
]


class DomainError(ArithmeticError):
    """Evaluation left the domain of ln, division or power.

    ``pos`` is the (line, column) of the offending node when known and
    ``time`` the stage index once a caller attaches it.
    """

    def __init__(self, message: str, pos=None, time=None):
        self.message = message
        self.pos = pos
        self.time = time
        super().__init__(self._render())

    def _render(self) -> str:
        parts = []
        if self.time is not None:
            parts.append(f"t={self.time}")
        if self.pos:
            parts.append(f"at {self.pos[0]}:{self.pos[1]}")
        return f"{self.message} ({', '.join(parts)})" if parts else self.message

    def at_time(self, t: int) -> "DomainError":
        return DomainError(self.message, self.pos, t)


class Dual:
    """Number ``value + deriv*e`` with ``e**2 == 0``."""

    __slots__ = ("value", "deriv")

    def __init__(self, value, deriv=0.0):
        self.value = value
        self.deriv = deriv

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.deriv + other.deriv)
        return Dual(self.value + other, self.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.deriv - other.deriv)
        return Dual(self.value - other, self.deriv)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.deriv)

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.deriv + self.deriv * other.value,
            )
        return Dual(self.value * other, self.deriv * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value / other.value,
                (self.deriv * other.value - self.value * other.deriv)
                / (other.value * other.value),
            )
        return Dual(self.value / other, self.deriv / other)

    def __rtruediv__(self, other):
        return Dual(other / self.value, -other * self.deriv / (self.value * self.value))


def real_part(x) -> float:
    while isinstance(x, Dual):
        x = x.value
    return float(x)


def dlog(x):
    if isinstance(x, Dual):
        return Dual(dlog(x.value), x.deriv / x.value)
    return math.log(x)


def dexp(x):
    if isinstance(x, Dual):
        e = dexp(x.value)
        return Dual(e, x.deriv * e)
    return math.exp(x)


def powi(x, n: int):
    """``x**n`` for integer ``n`` by repeated squaring; exact derivatives at x <= 0."""
    if n < 0:
        return 1.0 / powi(x, -n)
    result, base = 1.0, x
    while n:
        if n & 1:
            result = base * result
        n >>= 1
        if n:
            base = base * base
    return result


@dataclass(frozen=True)
class StageEnv:
    """Evaluation point for one stage: ``window[i][j]`` holds c_i(t+j)."""

    time: int
    window: Sequence
    params: Mapping[str, float]


# --------------------------------------------------------------------------
# Compilation to closures.  Each closure takes (window, t, params).

Fn = Callable[[Sequence, int, Mapping], object]


def _compile(node: Expr) -> Fn:
    if isinstance(node, Const):
        v = float(node.value)
        return lambda w, t, p: v
    if isinstance(node, Param):
        name = node.name
        return lambda w, t, p: p[name]
    if isinstance(node, Time):
        return lambda w, t, p: float(t)
    if isinstance(node, Var):
        i, j = node.comp, node.lag
        return lambda w, t, p: w[i][j]
    if isinstance(node, Unary):
        f = _compile(node.operand)
        pos = node.pos
        if node.op == "neg":
            return lambda w, t, p: -f(w, t, p)
        if node.op == "exp":

            def _exp(w, t, p):
                a = f(w, t, p)
                try:
                    return dexp(a)
                except OverflowError:
                    raise DomainError("exp overflow", pos) from None

            return _exp
        if node.op == "ln":

            def _ln(w, t, p):
                a = f(w, t, p)
                if real_part(a) <= 0.0:
                    raise DomainError("ln of non-positive value", pos)
                return dlog(a)

            return _ln
        raise ValueError(f"unknown unary op {node.op!r}")
    if isinstance(node, Binary):
        f, g = _compile(node.left), _compile(node.right)
        op, pos = node.op, node.pos
        if op == "+":
            return lambda w, t, p: f(w, t, p) + g(w, t, p)
        if op == "-":
            return lambda w, t, p: f(w, t, p) - g(w, t, p)
        if op == "*":
            return lambda w, t, p: f(w, t, p) * g(w, t, p)
        if op == "/":

            def _div(w, t, p):
                b = g(w, t, p)
                if real_part(b) == 0.0:
                    raise DomainError("division by zero", pos)
                return f(w, t, p) / b

            return _div
        if op == "^":
            if isinstance(node.right, Const) and float(node.right.value).is_integer():
                n = int(node.right.value)

                def _powc(w, t, p):
                    a = f(w, t, p)
                    if n < 0 and real_part(a) == 0.0:
                        raise DomainError("zero raised to a negative power", pos)
                    return powi(a, n)

                return _powc

            def _pow(w, t, p):
                return _power(f(w, t, p), g(w, t, p), pos)

            return _pow
        raise ValueError(f"unknown binary op {op!r}")
    raise TypeError(f"not an expression node: {node!r}")


def _power(a, b, pos):
    ra = real_part(a)
    if not isinstance(b, Dual) and float(b).is_integer():
        if b < 0 and ra == 0.0:
            raise DomainError("zero raised to a negative power", pos)
        return powi(a, int(b))
    if ra <= 0.0:
        raise DomainError("non-integer power of a non-positive base", pos)
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return math.pow(a, b)
    return dexp(b * dlog(a))


@lru_cache(maxsize=512)
def compile_expr(expr: Expr) -> Fn:
    """Closure evaluating ``expr`` at ``(window, t, params)``; cached per tree."""
    return _compile(expr)


def _window_list(window) -> list:
    if isinstance(window, np.ndarray):
        return window.tolist()
    return [list(row) for row in window]


def evaluate(expr: Expr, env: StageEnv) -> float:
    """Real value of ``expr`` at ``env``."""
    out = compile_expr(expr)(_window_list(env.window), env.time, env.params)
    return real_part(out)


def partial(expr: Expr, slot: tuple[int, int], env: StageEnv) -> float:
    """Exact dU/dc_i(t+j) for ``slot = (i, j)`` (both 0-based)."""
    i, j = slot
    w = _window_list(env.window)
    w[i][j] = Dual(float(w[i][j]), 1.0)
    out = compile_expr(expr)(w, env.time, env.params)
    return float(out.deriv) if isinstance(out, Dual) else 0.0


def grad_stage(expr: Expr, env: StageEnv) -> np.ndarray:
    """All first partials as an n x N array, one seeded pass per slot."""
    base = _window_list(env.window)
    n, order = len(base), len(base[0]) if base else 0
    fn = compile_expr(expr)
    grad = np.zeros((n, order))
    for i in range(n):
        for j in range(order):
            w = [row[:] for row in base]
            w[i][j] = Dual(float(w[i][j]), 1.0)
            out = fn(w, env.time, env.params)
            grad[i, j] = out.deriv if isinstance(out, Dual) else 0.0
    return grad
