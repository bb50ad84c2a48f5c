"""A small arithmetic expression grammar compiled through sympy.

Grammar (Python syntax subset)::

    expr    := expr ('+' | '-' | '*' | '/') expr | '-' expr | '+' expr
             | expr '**' expr | call | name | number | '(' expr ')'
    call    := func '(' expr ')'
    func    := exp | log | sqrt | sin | cos | tan | tanh | cosh | sinh
    name    := a declared variable (for example l1..ln or y1..yn) | pi | e

Anything else (attribute access, subscripts, comparisons, keyword calls,
lambda, comprehension, ...) is rejected before sympy sees the text, so the
parser never evaluates arbitrary code.
"""
from __future__ import annotations

import ast
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import ConfigurationError

_FUNCS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
}
_CONSTS = {"pi": sp.pi, "e": sp.E}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse_expression(text: str, variables: Sequence[str]) -> sp.Expr:
    """Parse ``text`` into a sympy expression over ``variables``.

    Raises
    ------
    ConfigurationError
        If the text uses syntax outside the grammar or unknown names.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc.msg}") from exc
    symbols = {name: sp.Symbol(name, real=True) for name in variables}

    def build(node: ast.AST) -> sp.Expr:
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](build(node.left), build(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            val = build(node.operand)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ConfigurationError(f"unknown name {node.id!r} in expression {text!r}")
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](build(node.args[0]))
        raise ConfigurationError(
            f"unsupported syntax {type(node).__name__} in expression {text!r}"
        )

    return build(tree)


class CompiledExpression:
    """Numeric evaluator for an expression and its partial derivatives.

    Parameters
    ----------
    text : str
        Source in the grammar above.
    variables : sequence of str
        Ordered variable names; numeric inputs are arrays whose last axis
        enumerates these variables.
    """

    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = tuple(variables)
        self.symbols = [sp.Symbol(v, real=True) for v in self.variables]
        self.expr = parse_expression(text, self.variables)
        self._cache: dict[tuple[int, ...], Callable] = {}

    def _fn(self, orders: tuple[int, ...]) -> Callable:
        fn = self._cache.get(orders)
        if fn is None:
            e = self.expr
            for idx, k in enumerate(orders):
                if k:
                    e = sp.diff(e, self.symbols[idx], k)
            fn = sp.lambdify(self.symbols, e, modules="numpy")
            self._cache[orders] = fn
        return fn

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.partial(pts, ())

    def partial(self, pts: np.ndarray, index: tuple[int, ...]) -> np.ndarray:
        """Evaluate the mixed partial derivative along variable indices ``index``."""
        pts = np.asarray(pts, dtype=float)
        orders = [0] * len(self.variables)
        for i in index:
            orders[i] += 1
        fn = self._fn(tuple(orders))
        out = fn(*[pts[..., i] for i in range(len(self.variables))])
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    def derivative_tensor(self, pts: np.ndarray, order: int) -> np.ndarray:
        """Full symmetric derivative tensor of the given order, trailing axes."""
        pts = np.asarray(pts, dtype=float)
        d = len(self.variables)
        out = np.empty(pts.shape[:-1] + (d,) * order)
        for idx in np.ndindex(*(d,) * order):
            key = tuple(sorted(idx))
            if key == idx:
                val = self.partial(pts, idx)
            else:
                val = out[(...,) + key]
            out[(...,) + idx] = val
        return out
