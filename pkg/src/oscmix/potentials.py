"""Anharmonic potentials on position space and their derivative tensors.

A potential here is a sum of one-dimensional profiles evaluated along fixed
directions, ``U(q) = sum_t c_t * f_t(<w_t, q + q_eq>)``.  Pair interactions
use ``w = e_i - e_j``, on-site terms use ``w = e_i``.  Derivative tensors
follow directly: ``D^m U = sum_t c_t f_t^{(m)}(r_t) w_t^{(x) m}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import erf

__all__ = [
    "ErfCoulombProfile",
    "PolynomialProfile",
    "RidgePotential",
    "coulomb_potential",
    "COULOMB_VARIANTS",
]

COULOMB_VARIANTS = ("coulomb_all_pairs", "coulomb_nearest_neighbor")

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
# below this |s| the Taylor series is used; above it the upward recursion
_SERIES_CUTOFF = 1.5
_SERIES_TERMS = 48


def _hermite_phys(n, s):
    """Physicists' Hermite polynomial H_n(s)."""
    h0 = np.ones_like(s)
    if n == 0:
        return h0
    h1 = 2.0 * s
    for k in range(1, n):
        h0, h1 = h1, 2.0 * s * h1 - 2.0 * k * h0
    return h1


@lru_cache(maxsize=None)
def _series_table(j, terms):
    """Coefficients of ``h^{(j)}(s)`` as a polynomial in s (ascending)."""
    # h(s) = 2/sqrt(pi) * sum_n (-1)^n s^{2n} / (n! (2n+1))
    coef = np.zeros(2 * terms)
    for n in range(terms):
        if 2 * n - j < 0:
            continue
        c = _TWO_OVER_SQRT_PI * (-1.0) ** n / (math.factorial(n) * (2 * n + 1))
        coef[2 * n - j] = c * math.perm(2 * n, j)
    return coef


def _horner(coef, x):
    out = np.full_like(x, coef[-1])
    for c in coef[-2::-1]:
        out = out * x + c
    return out


def _erf_over_s_derivs(s, order):
    """Derivatives 0..order of ``h(s) = erf(s)/s`` (smooth, even, h(0)=2/sqrt(pi)).

    Taylor series near 0, upward recursion from the erf derivatives elsewhere.
    The recursion loses about one digit per order near 0, hence the cutoff
    grows with ``order``.
    """
    s = np.asarray(s, dtype=float)
    out = np.empty((order + 1,) + s.shape)
    cutoff, terms = (_SERIES_CUTOFF, _SERIES_TERMS) if order > 1 else (0.2, 10)
    small = np.abs(s) < cutoff
    if np.any(small):
        ss = s[small]
        for j in range(order + 1):
            out[j][small] = _horner(_series_table(j, terms), ss)
    big = ~small
    if np.any(big):
        sb = s[big]
        sign = np.sign(sb)
        a = np.abs(sb)
        g = np.exp(-a * a)
        hj = erf(a) / a
        vals = [hj]
        for j in range(1, order + 1):
            erf_j = _TWO_OVER_SQRT_PI * (-1.0) ** (j - 1) * _hermite_phys(j - 1, a) * g
            hj = (erf_j - j * hj) / a
            vals.append(hj)
        for j in range(order + 1):
            out[j][big] = vals[j] * sign**j
    return out


@dataclass(frozen=True)
class ErfCoulombProfile:
    """``f(r) = erf(|r| / (sqrt(2) sigma)) / |r|``: potential between two
    Gaussian-smeared unit charges at signed separation r (smooth at r = 0)."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def derivs(self, r, order):
        a = 1.0 / (math.sqrt(2.0) * self.sigma)
        h = _erf_over_s_derivs(a * np.asarray(r, dtype=float), order)
        scale = a ** (np.arange(order + 1) + 1.0)
        return h * scale.reshape((-1,) + (1,) * (h.ndim - 1))

    def max_abs_deriv(self, j):
        """sup_r |f^{(j)}(r)|, by dense sampling plus local refinement."""
        from scipy.optimize import minimize_scalar

        s = self.sigma
        r = np.linspace(0.0, 40.0 * s, 8001)
        v = np.abs(self.derivs(r, j)[j])
        i = int(np.argmax(v))
        lo, hi = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
        if hi > lo:
            res = minimize_scalar(
                lambda x: -abs(float(self.derivs(np.array([x]), j)[j][0])),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-12 * s},
            )
            return max(float(v[i]), -float(res.fun))
        return float(v[i])


@dataclass(frozen=True)
class PolynomialProfile:
    """``f(r) = sum_k coeffs[k] r^k``."""

    coeffs: tuple

    def derivs(self, r, order):
        r = np.asarray(r, dtype=float)
        p = np.polynomial.Polynomial(self.coeffs)
        out = []
        for _ in range(order + 1):
            out.append(p(r))
            p = p.deriv()
        return np.array(out)


@dataclass
class RidgePotential:
    """Sum of weighted profiles along directions in R^n_sites."""

    n_sites: int
    terms: list = field(default_factory=list)  # (coeff, direction, profile)
    q_eq: np.ndarray | None = None
    growth_exponent: float = 0.0
    label: str = "ridge"

    def __post_init__(self):
        if self.q_eq is None:
            self.q_eq = np.zeros(self.n_sites)
        self.q_eq = np.asarray(self.q_eq, dtype=float)
        if self.q_eq.shape != (self.n_sites,):
            raise ValueError("q_eq has the wrong length")

    def add(self, coeff, direction, profile):
        w = np.asarray(direction, dtype=float)
        if w.shape != (self.n_sites,):
            raise ValueError("direction has the wrong length")
        self.terms.append((float(coeff), w, profile))
        return self

    def derivatives(self, q, order):
        """Return ``[U, grad U, D^2 U, ..., D^order U]`` at ``q`` (single point)."""
        q = np.asarray(q, dtype=float) + self.q_eq
        n = self.n_sites
        out = [np.zeros((n,) * m) if m else 0.0 for m in range(order + 1)]
        for c, w, prof in self.terms:
            fd = prof.derivs(np.array([w @ q]), order)[:, 0]
            wk = np.ones(())
            for m in range(order + 1):
                out[m] = out[m] + c * fd[m] * wk
                wk = np.multiply.outer(wk, w)
        return out

    def value(self, q):
        return self.derivatives(q, 0)[0]

    def gradient_batch(self, Q):
        """Gradient at each row of ``Q`` (shape (N, n_sites))."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float)) + self.q_eq
        g = np.zeros_like(Q)
        for c, w, prof in self.terms:
            r = Q @ w
            g += c * prof.derivs(r, 1)[1][:, None] * w[None, :]
        return g

    def value_batch(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float)) + self.q_eq
        u = np.zeros(Q.shape[0])
        for c, w, prof in self.terms:
            u += c * prof.derivs(Q @ w, 0)[0]
        return u

    def derivative_bound(self, j):
        """Upper bound on the operator norm of ``D^j U`` over all q, or inf."""
        total = 0.0
        for c, w, prof in self.terms:
            if not hasattr(prof, "max_abs_deriv"):
                return math.inf
            total += abs(c) * prof.max_abs_deriv(j) * float(np.linalg.norm(w)) ** j
        return total


def coulomb_potential(variant, n_sites, coupling, sigma, q_eq=None):
    """erf-regularized Coulomb interaction between smeared charges.

    ``coupling`` is the combined constant ``Q^2 / (4 pi eps0)``.  The
    all-pairs form sums over ordered pairs ``i != i'``, so every unordered
    pair enters twice; the nearest-neighbour form sums over ``i, i+1`` once.
    """
    if variant not in COULOMB_VARIANTS:
        raise ValueError(f"unknown coulomb variant {variant!r}")
    if n_sites < 2:
        raise ValueError("need at least two charges")
    prof = ErfCoulombProfile(float(sigma))
    pot = RidgePotential(n_sites, q_eq=q_eq, growth_exponent=0.0, label=variant)
    eye = np.eye(n_sites)
    if variant == "coulomb_all_pairs":
        for i, j in combinations(range(n_sites), 2):
            pot.add(2.0 * coupling, eye[i] - eye[j], prof)
    else:
        for i in range(n_sites - 1):
            pot.add(coupling, eye[i] - eye[i + 1], prof)
    return pot
