"""Dense linear-algebra primitives: matrix exponential, spectra, Lyapunov
solves, the Kalman rank staircase and the controllability Gramian."""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "EPS_RANK",
    "EPS_SPEC",
    "DimensionError",
    "NotHurwitzError",
    "NumericError",
    "CertificateError",
    "ControllabilityError",
    "SpectralReport",
    "KalmanReport",
    "ScalingFit",
    "as_matrix",
    "expm",
    "phi1",
    "spectral_report",
    "matrix_rank",
    "kalman_index",
    "solve_lyapunov",
    "gramian",
    "gramian_inverse_scaling",
    "matrix_to_csv",
    "matrix_from_csv",
]

EPS_RANK = 1e-10
EPS_SPEC = 1e-9


class DimensionError(ValueError):
    pass


class NotHurwitzError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class CertificateError(ValueError):
    """A hypothesis needed for a quantitative certificate fails."""


class ControllabilityError(NumericError):
    pass


def as_matrix(a, name="matrix"):
    """Coerce to a finite 2-D float array."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} has non-finite entries")
    return m


def _square(a, name="A"):
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def expm(A, t=1.0):
    """Return ``exp(t A)`` (scaling and squaring with Pade approximants)."""
    A = _square(A)
    if not np.isfinite(t):
        raise NumericError("t must be finite")
    return sla.expm(t * A)


def phi1(A, h):
    """Return ``(exp(hA), int_0^h exp(sA) ds)`` from one augmented exponential."""
    A = _square(A)
    d = A.shape[0]
    aug = np.zeros((2 * d, 2 * d))
    aug[:d, :d] = A
    aug[:d, d:] = np.eye(d)
    E = sla.expm(h * aug)
    return E[:d, :d], E[:d, d:]


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    max_real_part: float
    is_hurwitz: bool
    eps_spec: float = EPS_SPEC


def spectral_report(A, eps_spec=EPS_SPEC):
    A = _square(A)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigensolver failed for {A.shape} matrix: {exc}") from exc
    mrp = float(np.max(ev.real)) if ev.size else -np.inf
    return SpectralReport(ev, mrp, bool(mrp < -eps_spec), eps_spec)


def matrix_rank(M, eps_rank=EPS_RANK):
    """Rank with singular-value threshold ``eps_rank * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > eps_rank * s[0]))


@dataclass(frozen=True)
class KalmanReport:
    satisfied: bool
    d_star: int | None
    rank_profile: list = field(default_factory=list)


def kalman_index(A, B, eps_rank=EPS_RANK):
    """Kalman rank staircase for the pair ``(A, B)``.

    ``rank_profile`` holds ``(j, rank[B, AB, ..., A^j B])`` for j = 0..d-1.
    ``d_star`` is the smallest number of blocks whose columns span R^d.
    """
    A = _square(A)
    B = as_matrix(B, "B")
    d = A.shape[0]
    if B.shape[0] != d:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {d}x{d}")
    blocks = []
    block = B
    profile = []
    d_star = None
    for j in range(d):
        blocks.append(block)
        r = matrix_rank(np.hstack(blocks), eps_rank)
        profile.append((j, r))
        if r == d and d_star is None:
            d_star = j + 1
        block = A @ block
    satisfied = bool(profile and profile[-1][1] == d)
    return KalmanReport(satisfied, d_star, profile)


def solve_lyapunov(A, eps_spec=EPS_SPEC):
    """Solve ``A^T M + M A = -I``, i.e. ``M = int_0^inf exp(sA^T) exp(sA) ds``."""
    A = _square(A)
    rep = spectral_report(A, eps_spec)
    if not rep.is_hurwitz:
        raise NotHurwitzError(
            f"A is not Hurwitz (max real part {rep.max_real_part:.3g}); "
            "the integral defining M diverges"
        )
    d = A.shape[0]
    M = sla.solve_continuous_lyapunov(A.T, -np.eye(d))
    return 0.5 * (M + M.T)


def _gramian_vanloan(A, BBt, T):
    d = A.shape[0]
    C = np.zeros((2 * d, 2 * d))
    C[:d, :d] = -A
    C[:d, d:] = BBt
    C[d:, d:] = A.T
    E = sla.expm(T * C)
    Q = E[d:, d:].T @ E[:d, d:]
    return 0.5 * (Q + Q.T)


def gramian(A, B, T):
    """Controllability Gramian ``Q_T = int_0^T exp(tA) B B^T exp(tA^T) dt``.

    Van Loan's block exponential on a short horizon, then doubling
    ``Q_2t = Q_t + e^{tA} Q_t e^{tA^T}`` so that long horizons never
    exponentiate ``-A`` over a large time.
    """
    A = _square(A)
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    BBt = B @ B.T
    nA = np.linalg.norm(A, 1)
    k = 0
    if nA * T > 1.0:
        k = int(np.ceil(np.log2(nA * T)))
    t = T / 2.0**k
    Q = _gramian_vanloan(A, BBt, t)
    if k:
        E = sla.expm(t * A)
        for _ in range(k):
            Q = Q + E @ Q @ E.T
            E = E @ E
    return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual: float
    T: np.ndarray
    inv_norms: np.ndarray
    excluded: list


def gramian_inverse_scaling(A, B, T_grid, eps_rank=EPS_RANK):
    """Least-squares slope of ``log ||Q_T^{-1}||`` against ``log T``."""
    T_grid = np.asarray(T_grid, dtype=float)
    if T_grid.size < 5:
        raise ValueError("need at least 5 horizons")
    if np.any(T_grid <= 0) or np.any(T_grid > 1):
        raise ValueError("horizons must lie in (0, 1]")
    if np.log10(T_grid.max() / T_grid.min()) < 2 - 1e-12:
        raise ValueError("horizons must span at least two decades")
    d = _square(A).shape[0]
    Ts, norms, excluded = [], [], []
    for T in T_grid:
        Q = gramian(A, B, T)
        s = np.linalg.svd(Q, compute_uv=False)
        if matrix_rank(Q, eps_rank) < d or s[-1] <= 0:
            excluded.append(float(T))
            continue
        Ts.append(T)
        norms.append(1.0 / s[-1])
    if excluded:
        warnings.warn(f"Q_T numerically singular at T={excluded}; excluded from fit")
    if len(Ts) < 2:
        raise NumericError("fewer than two usable horizons")
    x = np.log(Ts)
    y = np.log(norms)
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if res.size else 0.0
    return ScalingFit(float(slope), float(intercept), rms, np.array(Ts), np.array(norms), excluded)


def matrix_to_csv(M):
    """Headerless row-major CSV with 17 significant digits."""
    M = as_matrix(M)
    buf = io.StringIO()
    for row in M:
        buf.write(",".join(f"{v:.17g}" for v in row))
        buf.write("\n")
    return buf.getvalue()


def matrix_from_csv(text):
    rows = [ln for ln in text.strip().splitlines() if ln.strip()]
    return as_matrix([[float(v) for v in ln.split(",")] for ln in rows])
