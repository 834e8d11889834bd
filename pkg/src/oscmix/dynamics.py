"""The SDE ``dX = AX dt + F(X) dt + B dW`` and its perturbing force fields."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linops import DimensionError, as_matrix

__all__ = [
    "Force",
    "ZeroForce",
    "PotentialForce",
    "CallableForce",
    "DynamicsSpec",
    "growth_norm_bound",
    "lipschitz_spot_check",
]


class Force:
    """Smooth globally Lipschitz field F on R^d with derivative access.

    Subclasses provide ``value`` (batched) and ``derivatives`` (one point).
    ``growth_exponent`` and ``growth_constant`` declare
    ``|F(x)| <= growth_constant * (1 + |x|)^growth_exponent``.
    """

    dim: int
    growth_exponent: float = 0.0
    growth_constant: float = 0.0
    lipschitz: float = 0.0
    max_order: int = 8

    def value(self, X):
        raise NotImplementedError

    def derivatives(self, x, order):
        """``[F(x), DF(x), ..., D^order F(x)]``; ``D^j F`` has shape ``(d,) * (j+1)``."""
        raise NotImplementedError

    def jacobian(self, x):
        return self.derivatives(x, 1)[1]

    @property
    def is_zero(self):
        return False


class ZeroForce(Force):
    def __init__(self, dim):
        self.dim = int(dim)
        self.growth_exponent = 0.0
        self.growth_constant = 0.0
        self.lipschitz = 0.0
        self.max_order = 64

    def value(self, X):
        return np.zeros_like(np.asarray(X, dtype=float))

    def derivatives(self, x, order):
        d = self.dim
        return [np.zeros((d,) * (j + 1)) for j in range(order + 1)]

    @property
    def is_zero(self):
        return True


class PotentialForce(Force):
    """``F(x) = -E grad U(C x)`` for a potential U on position space.

    ``C`` (sites x d) reads positions off the phase-space state and ``E``
    (d x sites) writes the resulting force into the momentum slots.
    """

    def __init__(self, potential, C, E, max_order=7):
        self.potential = potential
        self.C = as_matrix(C, "C")
        self.E = as_matrix(E, "E")
        self.dim = self.C.shape[1]
        if self.E.shape != (self.dim, self.C.shape[0]):
            raise DimensionError("E must be d x sites")
        self.max_order = max_order
        nE = np.linalg.norm(self.E, 2)
        nC = np.linalg.norm(self.C, 2)
        self.growth_exponent = float(getattr(potential, "growth_exponent", 0.0))
        self.growth_constant = nE * potential.derivative_bound(1)
        self.lipschitz = nE * nC * potential.derivative_bound(2)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X2 = np.atleast_2d(X)
        g = self.potential.gradient_batch(X2 @ self.C.T)
        out = -g @ self.E.T
        return out[0] if single else out

    def derivatives(self, x, order):
        x = np.asarray(x, dtype=float)
        dU = self.potential.derivatives(self.C @ x, order + 1)
        out = []
        for j in range(order + 1):
            T = np.asarray(dU[j + 1])
            for _ in range(j):
                # contract the trailing site index with C, new index appended
                T = np.tensordot(T, self.C, axes=([1], [0]))
            out.append(-np.tensordot(self.E, T, axes=([1], [0])))
        return out


class CallableForce(Force):
    """User-supplied field with declared growth metadata.

    ``derivs(x, order)`` must follow the :meth:`Force.derivatives` layout;
    ``value(X)`` must accept an (N, d) batch.
    """

    def __init__(self, dim, value, derivs, growth_exponent, growth_constant,
                 lipschitz, max_order=4):
        self.dim = int(dim)
        self._value = value
        self._derivs = derivs
        self.growth_exponent = float(growth_exponent)
        self.growth_constant = float(growth_constant)
        self.lipschitz = float(lipschitz)
        self.max_order = int(max_order)

    def value(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return np.asarray(self._value(X[None, :]))[0]
        return np.asarray(self._value(X))

    def derivatives(self, x, order):
        if order > self.max_order:
            raise ValueError(f"derivatives available up to order {self.max_order}")
        return [np.asarray(t, dtype=float) for t in self._derivs(np.asarray(x, dtype=float), order)]


@dataclass
class DynamicsSpec:
    """The triple (A, B, F) with a label and construction metadata."""

    A: np.ndarray
    B: np.ndarray
    force: Force | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        self.B = as_matrix(self.B, "B")
        d = self.A.shape[0]
        if self.A.shape != (d, d):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != d:
            raise DimensionError(f"B must have {d} rows, got {self.B.shape}")
        if self.force is None:
            self.force = ZeroForce(d)
        if self.force.dim != d:
            raise DimensionError(f"force acts on R^{self.force.dim}, state is R^{d}")

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.B.shape[1]

    def drift(self, X):
        """``A x + F(x)`` for a single state or an (N, d) batch."""
        X = np.asarray(X, dtype=float)
        return X @ self.A.T + self.force.value(X)

    def G_derivatives(self, x, order):
        """Derivatives of ``G(x) = A x + F(x)`` up to ``order``."""
        out = self.force.derivatives(x, order)
        out[0] = out[0] + self.A @ np.asarray(x, dtype=float)
        if order >= 1:
            out[1] = out[1] + self.A
        return out

    def with_force(self, force, label=None):
        return DynamicsSpec(self.A, self.B, force, label or self.label, dict(self.meta))


def growth_norm_bound(force, x):
    """Declared bound ``C (1 + |x|)^a`` on ``|F(x)|``."""
    return force.growth_constant * (1.0 + np.linalg.norm(x)) ** force.growth_exponent


def lipschitz_spot_check(force, rng, n_pairs=200, scale=10.0):
    """Largest observed ratio ``|F(x) - F(y)| / |x - y|`` on random pairs."""
    d = force.dim
    X = rng.normal(size=(n_pairs, d)) * scale
    Y = X + rng.normal(size=(n_pairs, d)) * 10.0 ** rng.uniform(-3, 0, size=(n_pairs, 1))
    num = np.linalg.norm(force.value(X) - force.value(Y), axis=1)
    den = np.linalg.norm(X - Y, axis=1)
    ratio = num / den
    return float(np.max(ratio)) if ratio.size else 0.0

