"""Tiny arithmetic expression language over ``x`` and ``y`` used by config files.

    >>> compile_expr("3 + 0.1*sin(2*pi*x)")(np.array([0.25]), np.array([0.0]))
    array([3.1])
"""
from __future__ import annotations

import ast
import operator

import numpy as np

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "log": np.log,
}
_CONSTS = {"pi": np.pi, "e": np.e}


class ExpressionError(ValueError):
    pass


def _check(node, source, names):
    if isinstance(node, ast.Expression):
        return _check(node.body, source, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return
    if isinstance(node, ast.Name):
        if node.id in ("x", "y") or node.id in names:
            return
        raise ExpressionError(f"unknown name {node.id!r} in {source!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left, source, names)
        _check(node.right, source, names)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        _check(node.operand, source, names)
        return
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        _check(node.args[0], source, names)
        return
    raise ExpressionError(f"unsupported syntax {type(node).__name__} in {source!r}")


def _eval(node, x, y, names):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return x
        if node.id == "y":
            return y
        return names[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x, y, names), _eval(node.right, x, y, names))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, x, y, names))
    return _FUNCS[node.func.id](_eval(node.args[0], x, y, names))


def compile_expr(source: str, constants: dict | None = None):
    """Return a vectorized ``f(x, y)`` for ``source``; constants broadcast to the input shape.

    ``constants`` adds named scalars (e.g. ``kbar``) next to ``pi`` and ``e``.
    """
    if not isinstance(source, str):
        value = float(source)
        return lambda x, y: np.full(np.shape(x), value)
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    names = dict(_CONSTS)
    for key, val in (constants or {}).items():
        if key in ("x", "y") or key in _FUNCS:
            raise ExpressionError(f"constant name {key!r} is reserved")
        names[key] = float(val)
    _check(tree, source, names)
    body = tree.body

    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.asarray(_eval(body, x, y, names), dtype=float)
        return np.broadcast_to(out, np.broadcast(x, y).shape).copy()

    f.source = source
    return f
