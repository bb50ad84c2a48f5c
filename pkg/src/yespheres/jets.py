"""Truncated Taylor jets of tensor fields at a point.

A :class:`Jet` stores a tensor field value together with its partial
derivatives up to a fixed order. Derivative axes are appended after the tensor
axes and are symmetric. Products follow the Leibniz rule, so polynomial
expressions in jets (Christoffel contractions, index lowering, covariant
derivatives) carry exact derivatives without any finite differencing.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

_DERIV_LETTERS = "ZYXWV"


class Jet:
    """Value and symmetric partial derivatives ``[T, dT, d2T, ...]``."""

    def __init__(self, parts: list[np.ndarray]):
        self.parts = [np.asarray(p, dtype=float) for p in parts]

    @property
    def order(self) -> int:
        return len(self.parts) - 1

    @property
    def value(self) -> np.ndarray:
        return self.parts[0]

    def truncate(self, order: int) -> "Jet":
        return Jet(self.parts[: order + 1])

    def derivative(self) -> "Jet":
        """Jet of the gradient field; the new tensor axis is appended last."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.parts[1:])

    def __add__(self, other: "Jet") -> "Jet":
        r = min(self.order, other.order)
        return Jet([a + b for a, b in zip(self.parts[: r + 1], other.parts[: r + 1])])

    def __sub__(self, other: "Jet") -> "Jet":
        r = min(self.order, other.order)
        return Jet([a - b for a, b in zip(self.parts[: r + 1], other.parts[: r + 1])])

    def __mul__(self, c: float) -> "Jet":
        return Jet([c * p for p in self.parts])

    __rmul__ = __mul__

    def transpose(self, axes: tuple[int, ...]) -> "Jet":
        """Permute tensor axes; derivative axes stay in place."""
        out = []
        for r, p in enumerate(self.parts):
            base = len(axes)
            out.append(np.transpose(p, tuple(axes) + tuple(range(base, base + r))))
        return Jet(out)


def jeinsum(subscripts: str, a: Jet, b: Jet, order: int | None = None) -> Jet:
    """Leibniz-rule ``einsum`` of two jets.

    ``subscripts`` uses lowercase letters for tensor axes only; derivative axes
    are handled internally.
    """
    lhs, out = subscripts.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    order = min(a.order, b.order) if order is None else order
    parts = []
    for r in range(order + 1):
        letters = _DERIV_LETTERS[:r]
        total = None
        for m in range(r + 1):
            for chosen in combinations(range(r), m):
                ta = "".join(letters[i] for i in chosen)
                tb = "".join(letters[i] for i in range(r) if i not in chosen)
                term = np.einsum(
                    f"{sa}{ta},{sb}{tb}->{out}{letters}", a.parts[len(ta)], b.parts[len(tb)]
                )
                total = term if total is None else total + term
        parts.append(total)
    return Jet(parts)


def constant_jet(value: np.ndarray, dim: int, order: int) -> Jet:
    value = np.asarray(value, dtype=float)
    return Jet([value] + [np.zeros(value.shape + (dim,) * r) for r in range(1, order + 1)])


def symmetrize(t: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Average a tensor over all permutations of the given axes."""
    from itertools import permutations

    acc = np.zeros_like(t)
    perms = list(permutations(axes))
    for perm in perms:
        full = list(range(t.ndim))
        for src, dst in zip(axes, perm):
            full[src] = dst
        acc = acc + np.transpose(t, full)
    return acc / len(perms)
