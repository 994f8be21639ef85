"""Small arithmetic expression language for data given in configs.

Grammar: numbers, the variables ``x``, ``y``, ``t``, the constants ``pi``
and ``e``, the operators ``+ - * / ^`` (``^`` is a power) with the usual
precedence, parentheses, and the functions ``sin cos exp abs sqrt log``.
Expressions are parsed with :mod:`ast` and evaluated on numpy arrays.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["Expression", "parse"]

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "log": np.log,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_VARS = ("x", "y", "t")
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: np.power,
}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def _check(node: ast.AST) -> set[str]:
    """Validate the tree; return the variables it uses."""
    if isinstance(node, ast.Expression):
        return _check(node.body)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise DomainError(f"unsupported literal {node.value!r}")
        return set()
    if isinstance(node, ast.Name):
        if node.id in _VARS:
            return {node.id}
        if node.id in _CONSTS:
            return set()
        raise DomainError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise DomainError("unsupported operator")
        return _check(node.left) | _check(node.right)
    if isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNOPS:
            raise DomainError("unsupported unary operator")
        return _check(node.operand)
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise DomainError("unknown function")
        if len(node.args) != 1 or node.keywords:
            raise DomainError(f"{node.func.id} takes exactly one argument")
        return _check(node.args[0])
    raise DomainError(f"unsupported syntax {type(node).__name__}")


def _eval(node: ast.AST, env: dict):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in _VARS else _CONSTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNOPS[type(node.op)](_eval(node.operand, env))
    return _FUNCS[node.func.id](_eval(node.args[0], env))


@dataclass(frozen=True)
class Expression:
    source: str
    tree: ast.Expression
    variables: frozenset

    def __call__(self, t, x) -> np.ndarray:
        """Evaluate at time ``t`` and points ``x`` of shape (N, d)."""
        x = np.asarray(x, dtype=float)
        env = {"t": np.asarray(t, dtype=float), "x": x[..., 0],
               "y": x[..., 1] if x.shape[-1] > 1 else np.zeros(x.shape[:-1])}
        if "y" in self.variables and x.shape[-1] < 2:
            raise DomainError(f"{self.source!r} uses y on a 1D mesh")
        with np.errstate(all="ignore"):
            out = np.asarray(_eval(self.tree, env), dtype=float)
        return np.broadcast_to(out, x.shape[:-1]).copy()


def parse(source: str) -> Expression:
    text = source.replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise DomainError(f"cannot parse {source!r}: {exc.msg}") from None
    used = _check(tree)
    return Expression(source, tree, frozenset(used))
