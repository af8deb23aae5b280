"""Whitelisted closed-form expressions in ``x``, ``y`` (and optionally ``t``).

Scenario files carry boundary data and coefficient fields as short formulas
such as ``"0.5*sign(y-0.5)"``.  They are parsed once with :mod:`ast`, checked
against a whitelist, and evaluated with numpy broadcasting.
"""
from __future__ import annotations

import ast
from typing import Callable

import numpy as np

_FUNCS = {
    name: getattr(np, name)
    for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "sign", "tanh",
                 "sinh", "cosh", "arctan", "arctan2", "minimum", "maximum", "where", "hypot")
}
_CONSTS = {"pi": np.pi, "e": np.e}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
          ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE)


class ExpressionError(ValueError):
    pass


class Expression:
    """Compiled formula; call with coordinate arrays."""

    def __init__(self, source: str | float | int, variables: tuple[str, ...] = ("x", "y")):
        self.source = str(source)
        self.variables = variables
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            if not isinstance(node, _NODES):
                raise ExpressionError(
                    f"disallowed syntax {type(node).__name__} in {self.source!r}")
            if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                    and node.id not in variables:
                raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
            if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                                   and node.func.id in _FUNCS):
                raise ExpressionError(f"only whitelisted functions may be called in {self.source!r}")
        self._code = compile(tree, "<expr>", "eval")

    def __call__(self, *args) -> np.ndarray:
        env = {"__builtins__": {}, **_FUNCS, **_CONSTS}
        env.update(zip(self.variables, (np.asarray(a, dtype=float) for a in args)))
        val = eval(self._code, env)  # noqa: S307 - whitelisted AST
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def as_field(source) -> Callable[..., np.ndarray]:
    """Accept a number, a formula string or a callable."""
    if callable(source):
        return source
    return Expression(source)
