"""Oscillator networks coupled to heat baths.

Three families, each with its own phase-space layout:

* chain: ``X = (p, q)``, baths at both ends;
* Langevin network: ``X = (p, omega q)`` on an arbitrary site set;
* semi-Markovian network: ``X = (r, p, omega q)`` with auxiliary bath
  variables ``r`` coupled through ``Lambda``.

In every family the perturbation is ``F = -grad_q U`` written into the
momentum block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dynamics import DynamicsSpec, Force, PotentialForce, ZeroForce
from .linops import EPS_RANK, as_matrix, matrix_rank
from .potentials import COULOMB_VARIANTS, coulomb_potential

__all__ = [
    "ConstructionError",
    "ChainSpec",
    "LangevinNetSpec",
    "SemiMarkovSpec",
    "PotentialSpec",
    "chain_stiffness",
    "chain_as_langevin",
    "build_chain",
    "build_langevin",
    "build_semi_markov",
    "build_potential",
    "coulomb_value_grad",
    "semi_markov_constraints",
    "principal_sqrt",
]

STRUCT_TOL = 1e-10


class ConstructionError(ValueError):
    pass


@dataclass
class ChainSpec:
    L: int
    kappa: float = 1.0
    k: float = 1.0
    gamma1: float = 1.0
    gammaL: float = 1.0
    theta1: float = 1.0
    thetaL: float = 1.0

    def validate(self):
        if self.L < 2:
            raise ConstructionError("chain needs L >= 2")
        if not self.k > 0:
            raise ConstructionError("coupling k must be positive")
        if self.kappa < 0:
            raise ConstructionError("pinning kappa must be nonnegative")
        for name in ("gamma1", "gammaL", "theta1", "thetaL"):
            if not getattr(self, name) > 0:
                raise ConstructionError(f"{name} must be positive")


@dataclass
class LangevinNetSpec:
    """Sites ``0..n_sites-1``; baths at ``bath_sites`` with their own
    temperatures and couplings; ``omega`` is the frequency map."""

    n_sites: int
    bath_sites: list
    omega: np.ndarray
    theta: list
    gamma: list

    def validate(self):
        self.omega = as_matrix(self.omega, "omega")
        I = self.n_sites
        if self.omega.shape != (I, I):
            raise ConstructionError(f"omega must be {I}x{I}")
        if not self.bath_sites:
            raise ConstructionError("bath set J must be nonempty")
        if len(set(self.bath_sites)) != len(self.bath_sites):
            raise ConstructionError("bath sites repeated")
        if any(not 0 <= j < I for j in self.bath_sites):
            raise ConstructionError("bath site outside the site set")
        if len(self.theta) != len(self.bath_sites) or len(self.gamma) != len(self.bath_sites):
            raise ConstructionError("need one temperature and one coupling per bath")
        if any(not t > 0 for t in self.theta) or any(not g > 0 for g in self.gamma):
            raise ConstructionError("temperatures and couplings must be positive")
        s = np.linalg.svd(self.omega, compute_uv=False)
        if s[-1] <= EPS_RANK * max(s[0], 1.0):
            raise ConstructionError("omega is singular")


@dataclass
class SemiMarkovSpec:
    n_sites: int
    n_baths: int
    omega: np.ndarray
    Lam: np.ndarray
    iota: np.ndarray
    theta: np.ndarray

    def validate(self):
        I, J = self.n_sites, self.n_baths
        self.omega = as_matrix(self.omega, "omega")
        lam = np.asarray(self.Lam, dtype=float)
        self.Lam = as_matrix(lam.reshape(I, J) if lam.size == I * J else lam, "Lambda")
        self.iota = as_matrix(self.iota, "iota")
        self.theta = as_matrix(self.theta, "theta")
        for name, M, shape in (
            ("omega", self.omega, (I, I)),
            ("Lambda", self.Lam, (I, J)),
            ("iota", self.iota, (J, J)),
            ("theta", self.theta, (J, J)),
        ):
            if M.shape != shape:
                raise ConstructionError(f"{name} must have shape {shape}, got {M.shape}")
        if matrix_rank(self.omega) < I:
            raise ConstructionError("omega is singular")
        if matrix_rank(self.Lam) < J:
            raise ConstructionError("Lambda is not injective")
        if matrix_rank(self.iota) < J:
            raise ConstructionError("iota is not a bijection")
        if matrix_rank(self.theta) < J:
            raise ConstructionError("theta is not a bijection")


@dataclass
class PotentialSpec:
    """Which anharmonic potential to attach.

    ``variant`` is ``none``, one of the coulomb forms, or ``custom`` (then
    ``custom`` holds a :class:`RidgePotential` or a ready Force factory).
    ``coupling`` is the combined constant ``Q^2/(4 pi eps0)``.
    """

    variant: str = "none"
    coupling: float = 1.0
    sigma: float = 1.0
    q_eq: list | None = None
    custom: object = None
    meta: dict = field(default_factory=dict)

    def validate(self):
        if self.variant in COULOMB_VARIANTS and not self.sigma > 0:
            raise ConstructionError("sigma must be positive")


def principal_sqrt(M):
    """Principal symmetric square root of a symmetric positive-definite matrix."""
    M = as_matrix(M)
    if np.allclose(M, M.T, atol=1e-14 * max(1.0, np.abs(M).max())):
        w, V = np.linalg.eigh(0.5 * (M + M.T))
        if np.any(w <= 0):
            raise ConstructionError("matrix is not positive definite")
        return (V * np.sqrt(w)) @ V.T
    R = sla.sqrtm(M)
    return np.real_if_close(R).astype(float)


def chain_stiffness(L, kappa, k):
    """``kappa I + k * (path Laplacian)``."""
    K = kappa * np.eye(L)
    for i in range(L - 1):
        K[i, i] += k
        K[i + 1, i + 1] += k
        K[i, i + 1] -= k
        K[i + 1, i] -= k
    return K


def build_potential(pspec, n_sites):
    if pspec is None or pspec.variant == "none":
        return None
    pspec.validate()
    if pspec.variant in COULOMB_VARIANTS:
        return coulomb_potential(pspec.variant, n_sites, pspec.coupling, pspec.sigma, pspec.q_eq)
    if pspec.variant == "custom":
        if pspec.custom is None:
            raise ConstructionError("custom potential needs an implementation")
        return pspec.custom
    raise ConstructionError(f"unknown potential variant {pspec.variant!r}")


def _attach(A, B, potential, C, E, label, meta):
    d = A.shape[0]
    if potential is None:
        force = ZeroForce(d)
    elif isinstance(potential, Force):
        force = potential
    else:
        force = PotentialForce(potential, C, E)
    return DynamicsSpec(A, B, force, label, meta)


def build_chain(spec, potential=None):
    """Chain of L unit masses, baths on masses 1 and L, ``X = (p, q)``."""
    spec.validate()
    L = spec.L
    K = chain_stiffness(L, spec.kappa, spec.k)
    A = np.zeros((2 * L, 2 * L))
    A[0, 0] = -spec.gamma1
    A[L - 1, L - 1] = -spec.gammaL
    A[:L, L:] = -K
    A[L:, :L] = np.eye(L)
    B = np.zeros((2 * L, 2))
    B[0, 0] = np.sqrt(2 * spec.gamma1 * spec.theta1)
    B[L - 1, 1] = np.sqrt(2 * spec.gammaL * spec.thetaL)
    pot = build_potential(potential, L) if isinstance(potential, PotentialSpec) else potential
    C = np.hstack([np.zeros((L, L)), np.eye(L)])
    E = np.vstack([np.eye(L), np.zeros((L, L))])
    meta = {"family": "chain", "layout": "(p, q)", "sites": L}
    return _attach(A, B, pot, C, E, f"chain L={L}", meta)


def chain_as_langevin(spec):
    """The chain geometry as a Langevin network (``omega`` = sqrt of stiffness)."""
    K = chain_stiffness(spec.L, spec.kappa, spec.k)
    omega = principal_sqrt(K)
    return LangevinNetSpec(
        n_sites=spec.L,
        bath_sites=[0, spec.L - 1],
        omega=omega,
        theta=[spec.theta1, spec.thetaL],
        gamma=[spec.gamma1, spec.gammaL],
    )


def build_langevin(spec, potential=None):
    """``A = [[-iota iota^T / 2, -omega^T], [omega, 0]]``, ``B = [iota; 0] theta^{1/2}``."""
    spec.validate()
    I = spec.n_sites
    J = len(spec.bath_sites)
    iota = np.zeros((I, J))
    for col, (site, g) in enumerate(zip(spec.bath_sites, spec.gamma)):
        iota[site, col] = np.sqrt(2.0 * g)
    vartheta = np.diag(np.asarray(spec.theta, dtype=float))
    A = np.zeros((2 * I, 2 * I))
    A[:I, :I] = -0.5 * iota @ iota.T
    A[:I, I:] = -spec.omega.T
    A[I:, :I] = spec.omega
    B = np.vstack([iota, np.zeros((I, J))]) @ principal_sqrt(vartheta)
    pot = build_potential(potential, I) if isinstance(potential, PotentialSpec) else potential
    C = np.hstack([np.zeros((I, I)), np.linalg.inv(spec.omega)])
    E = np.vstack([np.eye(I), np.zeros((I, I))])
    meta = {"family": "langevin", "layout": "(p, omega q)", "sites": I, "baths": J}
    return _attach(A, B, pot, C, E, f"langevin |I|={I} |J|={J}", meta)


def semi_markov_constraints(A, B, theta, tol=STRUCT_TOL):
    """Evaluate the four structural constraints; returns ``{name: (ok, value)}``."""
    A = as_matrix(A)
    B = as_matrix(B)
    theta = as_matrix(theta)
    out = {}
    sym = 0.5 * (theta + theta.T)
    ev = np.linalg.eigvalsh(sym)
    asym = np.abs(theta - theta.T).max()
    out["theta > 0"] = (bool(ev.min() > tol and asym <= tol), float(ev.min()))
    ev_bb = np.linalg.eigvalsh(B.T @ B)
    out["B*B > 0"] = (bool(ev_bb.min() > tol), float(ev_bb.min()))
    stacked = np.vstack([A - A.T, B.T])
    s = np.linalg.svd(stacked, compute_uv=False)
    smin = float(s[-1]) if s.size >= A.shape[0] else 0.0
    out["ker(A - A*) & ker B* = {0}"] = (bool(smin > tol * max(1.0, s[0])), smin)
    resid = float(np.abs(A + A.T + B @ np.linalg.solve(theta, B.T)).max())
    out["A + A* = -B theta^-1 B*"] = (bool(resid <= tol * max(1.0, np.abs(A).max())), resid)
    return out


def build_semi_markov(spec, potential=None):
    """Noise through auxiliary variables: ``X = (r, p, omega q)``."""
    spec.validate()
    I, J = spec.n_sites, spec.n_baths
    d = J + 2 * I
    A = np.zeros((d, d))
    r, p, y = slice(0, J), slice(J, J + I), slice(J + I, d)
    A[r, r] = -0.5 * spec.iota @ spec.iota.T
    A[r, p] = -spec.Lam.T
    A[p, r] = spec.Lam
    A[p, y] = -spec.omega.T
    A[y, p] = spec.omega
    B = np.vstack([spec.iota, np.zeros((2 * I, J))]) @ principal_sqrt(spec.theta)
    checks = semi_markov_constraints(A, B, spec.theta)
    for name, (ok, val) in checks.items():
        if not ok:
            raise ConstructionError(f"structural constraint violated: {name} (value {val:.3g})")
    pot = build_potential(potential, I) if isinstance(potential, PotentialSpec) else potential
    C = np.hstack([np.zeros((I, J + I)), np.linalg.inv(spec.omega)])
    E = np.vstack([np.zeros((J, I)), np.eye(I), np.zeros((I, I))])
    meta = {
        "family": "semi_markov",
        "layout": "(r, p, omega q)",
        "sites": I,
        "baths": J,
        "constraints": {k: v[1] for k, v in checks.items()},
    }
    return _attach(A, B, pot, C, E, f"semi-markov |I|={I} |J|={J}", meta)


def coulomb_value_grad(pspec, q, order=1):
    """``[U(q), grad U(q), ..., D^order U(q)]`` for a coulomb PotentialSpec."""
    if pspec.variant not in COULOMB_VARIANTS:
        raise ValueError("coulomb_value_grad needs a coulomb variant")
    if order > 4:
        raise ValueError("order must be <= 4")
    q = np.asarray(q, dtype=float)
    pot = build_potential(pspec, q.size)
    return pot.derivatives(q, order)
