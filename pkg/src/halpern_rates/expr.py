"""Tiny arithmetic expression language for config-defined schedules and moduli.

Only numeric literals, the variables supplied by the caller, ``+ - * / **``
and a fixed set of functions are accepted. Rational inputs stay exact
(``Fraction``) until a transcendental function forces a float.
"""

from __future__ import annotations

import ast
import math
from fractions import Fraction
from typing import Callable

__all__ = ["compile_expr", "ExprError"]


class ExprError(ValueError):
    pass


def _ceil(v):
    if isinstance(v, Fraction):
        return -((-v.numerator) // v.denominator)
    return math.ceil(v)


def _floor(v):
    if isinstance(v, Fraction):
        return v.numerator // v.denominator
    return math.floor(v)


def _float_fn(fn):
    return lambda *args: fn(*(float(a) for a in args))


_FUNCTIONS = {
    "ceil": _ceil,
    "floor": _floor,
    "sqrt": _float_fn(math.sqrt),
    "log": _float_fn(math.log),
    "log2": _float_fn(math.log2),
    "exp": _float_fn(math.exp),
    "abs": abs,
    "min": min,
    "max": max,
}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: Fraction(a) / b if isinstance(a, int) and isinstance(b, int) else a / b,
    ast.Pow: None,
}


def _pow(a, b):
    if isinstance(b, Fraction) and b.denominator == 1:
        b = b.numerator
    if isinstance(b, int) and isinstance(a, (int, Fraction)):
        return Fraction(a) ** b if b < 0 else a ** b
    return float(a) ** float(b)


def _check(node, names):
    if isinstance(node, ast.Expression):
        return _check(node.body, names)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExprError(f"unsupported literal {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id not in names:
            raise ExprError(f"unknown name {node.id!r}; allowed: {sorted(names)}")
        return
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExprError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, names)
        _check(node.right, names)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand, names)
        return
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS or node.keywords:
            raise ExprError(f"only calls to {sorted(_FUNCTIONS)} are allowed")
        for arg in node.args:
            _check(arg, names)
        return
    raise ExprError(f"unsupported syntax: {type(node).__name__}")


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        v = node.value
        return v if isinstance(v, int) else Fraction(repr(v))
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if isinstance(node.op, ast.Pow):
            return _pow(a, b)
        return _BINOPS[type(node.op)](a, b)
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    fn = _FUNCTIONS[node.func.id]
    return fn(*(_eval(a, env) for a in node.args))


def compile_expr(source: str, names: tuple[str, ...]) -> Callable:
    """Return ``f(**values)`` evaluating ``source``; raises :class:`ExprError` on bad input."""
    try:
        tree = ast.parse(str(source), mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"cannot parse {source!r}: {exc.msg}") from None
    _check(tree, set(names))

    def evaluate(**values):
        try:
            return _eval(tree, values)
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise ExprError(f"evaluating {source!r} at {values}: {exc}") from None

    evaluate.source = source
    return evaluate
