"""Exact Lie derivatives of vector fields built from ``G(x) = Ax + F(x)``
and constant fields ``b``.

Fields are integer linear combinations of *terms*:

* ``("b", i)`` is the constant field ``B e_i``;
* ``("D", j, args)`` is ``D^j G[args]``, the j-th derivative of G
  contracted with the (sorted) argument terms; ``("D", 0, ())`` is G.

Combinations are dicts ``{term: int}``.  Evaluation at a point only needs
the derivative tensors ``D^j G(x)``, so brackets are exact up to roundoff.
The convention is ``L_X Y = DY[X] - DX[Y]``, which gives ``L_G b = -DG[b]``.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

__all__ = [
    "G",
    "b",
    "lie",
    "directional",
    "combo_add",
    "combo_scale",
    "max_order",
    "Evaluator",
    "occupation",
    "power_lie",
    "leading_term",
]

G = ("D", 0, ())


def b(i):
    return ("b", int(i))


def _clean(c):
    return {t: v for t, v in c.items() if v != 0}


def combo_add(*combos):
    out = Counter()
    for c in combos:
        for t, v in c.items():
            out[t] += v
    return _clean(out)


def combo_scale(c, s):
    return _clean({t: s * v for t, v in c.items()})


def _d_term(t, x):
    """Directional derivative of term ``t`` along term ``x``."""
    if t[0] == "b":
        return {}
    _, j, args = t
    out = Counter()
    out[("D", j + 1, tuple(sorted(args + (x,))))] += 1
    for k, a in enumerate(args):
        for u, c in _d_term(a, x).items():
            new = args[:k] + (u,) + args[k + 1:]
            out[("D", j, tuple(sorted(new)))] += c
    return _clean(out)


def directional(Y, X):
    """``DY[X]`` for combinations Y, X."""
    out = Counter()
    for ty, cy in Y.items():
        for tx, cx in X.items():
            for t, c in _d_term(ty, tx).items():
                out[t] += cy * cx * c
    return _clean(out)


def lie(X, Y):
    """``L_X Y = DY[X] - DX[Y]``."""
    return combo_add(directional(Y, X), combo_scale(directional(X, Y), -1))


def power_lie(Xfield, Y, k):
    for _ in range(k):
        Y = lie(Xfield, Y)
    return Y


def _term_order(t):
    if t[0] == "b":
        return 0
    return max([t[1]] + [_term_order(a) for a in t[2]])


def max_order(c):
    """Highest derivative order of G appearing in a combination."""
    return max((_term_order(t) for t in c), default=0)


def occupation(t):
    """Counts ``{"b": n_b, j: N_j}`` of constant fields and ``D^j G`` nodes."""
    cnt = Counter()
    if t[0] == "b":
        cnt["b"] += 1
        return cnt
    cnt[t[1]] += 1
    for a in t[2]:
        cnt.update(occupation(a))
    return cnt


def leading_term(k, i=0):
    """``(-1)^k DG^k [b_i]`` as a combination."""
    t = b(i)
    for _ in range(k):
        t = ("D", 1, (t,))
    return {t: (-1) ** k}


class Evaluator:
    """Evaluate combinations at one point from ``[G, DG, D^2 G, ...]``."""

    def __init__(self, G_derivs, B):
        self.Gd = [np.asarray(T, dtype=float) for T in G_derivs]
        self.B = np.asarray(B, dtype=float)
        self._memo = {}

    def term(self, t):
        v = self._memo.get(t)
        if v is not None:
            return v
        if t[0] == "b":
            v = self.B[:, t[1]]
        else:
            _, j, args = t
            if j >= len(self.Gd):
                raise IndexError(f"derivative order {j} not available")
            T = self.Gd[j]
            for a in args:
                T = T @ self.term(a)
            v = T
        self._memo[t] = v
        return v

    def __call__(self, c):
        d = self.B.shape[0]
        out = np.zeros(d)
        for t, coef in c.items():
            out += coef * self.term(t)
        return out
