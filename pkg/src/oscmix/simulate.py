"""Ensemble simulation of ``dX = (AX + F(X)) dt + B dW``, the quadratic
Lyapunov certificate, and Monte Carlo probes of drift, minorization and
mixing.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from .linops import CertificateError, gramian, phi1, solve_lyapunov
from .rng import BLOCK_SIZE, block_slices, substream

__all__ = [
    "SCHEMES",
    "LyapunovCertificate",
    "Ensemble",
    "MixingReport",
    "certify_lyapunov",
    "simulate_ensemble",
    "integrate",
    "drift_check",
    "minorization_probe",
    "hit_probabilities",
    "tv_binned",
    "mixing_report",
    "wiener_path_mode",
    "cesaro_check",
]

SCHEMES = ("exponential_euler", "euler_maruyama")


# --------------------------------------------------------- certificate

@dataclass
class LyapunovCertificate:
    """Constants of ``E V(X_t) <= gamma^t V(x) + K`` for ``V(x) = <x, M x>``."""

    M: np.ndarray
    norm_M: float
    c1: float
    c2: float
    c3: float
    gamma: float
    K: float
    R: float
    trace: float
    a: float
    notes: list = field(default_factory=list)

    def V(self, X):
        X = np.asarray(X, dtype=float)
        return np.einsum("...i,ij,...j->...", X, self.M, X)

    def bound(self, x, t):
        return self.gamma**t * self.V(x) + self.K


def _young_c1(a, C, eps):
    # C (1 + r)^a <= C + C r^a <= C + eps r + c, maximising C r^a - eps r over r
    if a == 0.0:
        return C
    t_star = (a * C / eps) ** (1.0 / (1.0 - a))
    return C + eps * t_star * (1.0 - a) / a


def certify_lyapunov(spec):
    """Quadratic Lyapunov certificate from the Lyapunov solution M.

    With ``|F(x)| <= |x|/(8||M||) + c1`` the generator satisfies
    ``L V <= -|x|^2/2 + c2 + tr(M B B^T)``, ``c2 = 8 ||M||^2 c1^2``.  Since
    ``V <= ||M|| |x|^2`` this gives the rate ``gamma = exp(-1/(2||M||))``
    and ``K = 2||M|| (c2 + tr(M B B^T))``.
    """
    f = spec.force
    a = float(f.growth_exponent)
    if a >= 1.0:
        raise CertificateError(f"growth exponent a={a:g} >= 1: |F(x)| <= |x|/(8||M||) + c1 unobtainable")
    if not math.isfinite(f.growth_constant):
        raise CertificateError("force has no finite declared growth constant; c1 unobtainable")
    M = solve_lyapunov(spec.A)
    nM = float(np.linalg.norm(M, 2))
    c1 = 0.0 if f.is_zero else _young_c1(a, float(f.growth_constant), 1.0 / (8.0 * nM))
    c2 = 8.0 * nM**2 * c1**2
    W = gramian(spec.A.T, np.eye(spec.d), 1.0)  # int_0^1 e^{sA^T} e^{sA} ds
    c3 = float(np.linalg.eigvalsh(W)[0])
    tr = float(np.trace(M @ spec.B @ spec.B.T))
    gamma = math.exp(-1.0 / (2.0 * nM))
    K = 2.0 * nM * (c2 + tr)
    R = 1.0 + 2.0 * K / (1.0 - gamma)
    notes = [
        "rate uses V <= ||M|| |x|^2; the lower bound V >= c3 |x|^2 does not control the decay",
        f"rate with c3 in place of ||M||: gamma={math.exp(-1 / (2 * c3)):.6g}, K={2 * c3 * (c2 + tr):.6g}",
    ]
    return LyapunovCertificate(M, nM, c1, c2, c3, gamma, K, R, tr, a, notes)


# --------------------------------------------------------------- ensembles

@dataclass
class Ensemble:
    times: np.ndarray
    states: np.ndarray  # (N, len(times), d)
    seed: int
    h: float
    scheme: str
    diagnostic: str = ""


class _Stepper:
    def __init__(self, spec, h, scheme):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        if not h > 0:
            raise ValueError("step must be positive")
        self.spec, self.h, self.scheme = spec, float(h), scheme
        A, B = spec.A, spec.B
        self.zero_force = spec.force.is_zero
        if scheme == "exponential_euler":
            E, P = phi1(A, h)
            self.Et, self.Pt = E.T, P.T
            S = gramian(A, B, h) if np.any(B) else np.zeros((spec.d, spec.d))
            w, U = np.linalg.eigh(S)
            w = np.clip(w, 0.0, None)
            keep = w > 1e-300
            self.Lt = (U[:, keep] * np.sqrt(w[keep])).T
            self.Pdw = (P @ B / h).T  # averaged kernel for externally supplied increments
        else:
            self.At = A.T
            self.Lt = math.sqrt(h) * B.T
            self.Bt = B.T
        self.noise_dim = self.Lt.shape[0]

    def step(self, X, Z):
        """One step with standard normal draws Z (rows) of width ``noise_dim``."""
        if self.scheme == "exponential_euler":
            Xn = X @ self.Et
            if not self.zero_force:
                Xn += self.spec.force.value(X) @ self.Pt
        else:
            drift = X @ self.At
            if not self.zero_force:
                drift += self.spec.force.value(X)
            Xn = X + self.h * drift
        if Z is not None and self.noise_dim:
            Xn += Z @ self.Lt
        return Xn

    def step_increment(self, X, dW):
        """One step driven by given Brownian increments ``dW`` (rows, width n)."""
        if self.scheme == "exponential_euler":
            Xn = X @ self.Et + dW @ self.Pdw
            if not self.zero_force:
                Xn += self.spec.force.value(X) @ self.Pt
            return Xn
        drift = X @ self.At
        if not self.zero_force:
            drift += self.spec.force.value(X)
        return X + self.h * drift + dW @ self.Bt


def _record_indices(times, h):
    times = np.asarray(times, dtype=float)
    idx = np.rint(times / h).astype(int)
    if np.any(np.abs(idx * h - times) > 1e-9 * np.maximum(1.0, times)):
        raise ValueError("record times must be multiples of the step h")
    if np.any(np.diff(idx) < 0):
        raise ValueError("record times must be sorted")
    return idx


def _run_block(stepper, x_in, n_traj, idx, seed, block, key):
    d = stepper.spec.d
    X = np.tile(np.asarray(x_in, dtype=float), (n_traj, 1))
    out = np.empty((n_traj, idx.size, d))
    rng = substream(seed, key, block)
    r = 0
    while r < idx.size and idx[r] == 0:
        out[:, r] = X
        r += 1
    for k in range(1, idx[-1] + 1 if idx.size else 0):
        Z = rng.standard_normal((n_traj, stepper.noise_dim)) if stepper.noise_dim else None
        X = stepper.step(X, Z)
        while r < idx.size and idx[r] == k:
            out[:, r] = X
            r += 1
    return out


def simulate_ensemble(spec, x_in, times, h, N, seed, scheme="exponential_euler",
                      workers=1, key=0):
    """N trajectories from ``x_in`` recorded at ``times`` (multiples of h).

    Trajectories are grouped in blocks of a fixed size; block b draws its
    normals from the substream ``(seed, key, b)`` so the output does not
    depend on ``workers``.
    """
    stepper = _Stepper(spec, h, scheme)
    idx = _record_indices(times, h)
    slices = block_slices(int(N), BLOCK_SIZE)
    jobs = [(stepper, x_in, sl.stop - sl.start, idx, seed, b, key) for b, sl in enumerate(slices)]
    with np.errstate(over="ignore", invalid="ignore"):
        if workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(workers) as ex:
                parts = list(ex.map(lambda j: _run_block(*j), jobs))
        else:
            parts = [_run_block(*j) for j in jobs]
    states = np.concatenate(parts, axis=0)
    diag = ""
    if not np.all(np.isfinite(states)):
        diag = "non-finite states encountered"
        warnings.warn(diag)
    return Ensemble(np.asarray(times, dtype=float), states, seed, h, scheme, diag)


def integrate(spec, x_in, T, h, seed, scheme="exponential_euler"):
    """One trajectory on the grid ``0, h, ..., T``; truncated at the first
    non-finite state with a diagnostic."""
    n = int(round(T / h))
    times = h * np.arange(n + 1)
    ens = simulate_ensemble(spec, x_in, times, h, 1, seed, scheme)
    X = ens.states[0]
    bad = ~np.all(np.isfinite(X), axis=1)
    diag = ""
    if np.any(bad):
        cut = int(np.argmax(bad))
        times, X = times[:cut], X[:cut]
        diag = f"trajectory truncated at t={cut * h:g}: non-finite state"
    return times, X, diag


# --------------------------------------------------------------- probes

def drift_check(spec, cert, starts, times, N, seed, h=0.01, scheme="exponential_euler", workers=1):
    """Monte Carlo ``E V(X_t)`` against ``gamma^t V(x) + K`` (pass within 3 SE)."""
    rows = []
    for i, x in enumerate(starts):
        ens = simulate_ensemble(spec, x, times, h, N, seed, scheme, workers, key=i)
        V = cert.V(ens.states)
        for j, t in enumerate(times):
            est = float(np.mean(V[:, j]))
            se = float(np.std(V[:, j], ddof=1) / math.sqrt(N)) if N > 1 else 0.0
            bound = float(cert.bound(np.asarray(x), t))
            rows.append({"start": i, "t": float(t), "estimate": est, "se": se, "bound": bound,
                         "pass": est <= bound + 3 * se})
    return rows


def hit_probabilities(endpoints_by_start, x0, delta, confidence=0.95):
    """Frequencies of ``|X_T - x0| < delta`` per start with simultaneous
    (Bonferroni) Wilson intervals."""
    x0 = np.asarray(x0, dtype=float)
    k = max(len(endpoints_by_start), 1)
    level = 1 - (1 - confidence) / k
    rows = []
    for X in endpoints_by_start:
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        hits = int(np.count_nonzero(np.linalg.norm(X - x0, axis=1) < delta))
        n = X.shape[0]
        ci = binomtest(hits, n).proportion_ci(confidence_level=level, method="wilson")
        p = hits / n
        rows.append({"n": n, "hits": hits, "p": p, "se": math.sqrt(max(p * (1 - p), 0) / n),
                     "lower": float(ci.low), "upper": float(ci.high),
                     "status": "observed" if hits else "not observed"})
    return rows


def minorization_probe(spec, T, starts, x0, delta0, N, seed, h=0.01,
                       scheme="exponential_euler", workers=1, confidence=0.95):
    """Lower confidence bound on ``min_x P(X_T in B(x0, delta0))`` over ``starts``."""
    ends = []
    for i, x in enumerate(starts):
        ens = simulate_ensemble(spec, x, [T], h, N, seed, scheme, workers, key=i)
        ends.append(ens.states[:, 0])
    rows = hit_probabilities(ends, x0, delta0, confidence)
    lower = min(r["lower"] for r in rows)
    return {"rows": rows, "min_p": min(r["p"] for r in rows), "lower_bound": lower,
            "pass": lower > 0}


# --------------------------------------------------------------- mixing

def _fd_edges(x, k=1, max_bins=512):
    # Freedman-Diaconis width 2 IQR n^(-1/3) in 1-D; n^(-1/(2+k)) for a
    # k-dimensional histogram keeps the cell count from exploding
    q75, q25 = np.percentile(x, [75, 25])
    lo, hi = float(np.min(x)), float(np.max(x))
    width = 2.0 * (q75 - q25) / len(x) ** (1.0 / (2.0 + k))
    if hi <= lo:
        return np.array([lo - 0.5, hi + 0.5])
    nb = 1 if width <= 0 else int(min(max_bins, max(1, math.ceil((hi - lo) / width))))
    return np.linspace(lo, hi, nb + 1)


def tv_binned(P, Q):
    """Total variation between two samples after Freedman-Diaconis binning of
    the pooled sample (1-D or 2-D projections)."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.ndim == 1:
        P, Q = P[:, None], Q[:, None]
    pooled = np.concatenate([P, Q])
    k = P.shape[1]
    edges = [_fd_edges(pooled[:, j], k) for j in range(k)]
    hp, _ = np.histogramdd(P, bins=edges)
    hq, _ = np.histogramdd(Q, bins=edges)
    return float(0.5 * np.abs(hp / P.shape[0] - hq / Q.shape[0]).sum())


def _dictionary(X, cert):
    """Bounded test functions with ``|f| <= 1 + V``."""
    V = cert.V(X)
    cap = 1.0 + V
    fs = [np.tanh(X[..., j]) for j in range(X.shape[-1])]
    fs += [np.clip(X[..., j], -cap, cap) for j in range(X.shape[-1])]
    fs.append(V)
    return np.stack(fs, axis=-1)


@dataclass
class MixingReport:
    pairs: list
    times: np.ndarray
    tv: np.ndarray  # (n_pairs, n_times)
    v_distance: np.ndarray  # (n_pairs, n_times): max dictionary difference
    noise_floor: np.ndarray  # (n_pairs, n_times)
    rate: np.ndarray  # empirical rate per pair (nan if no fit)
    prefactor: np.ndarray
    r2: np.ndarray
    outcome: list
    projection: tuple
    windows: list  # fit window (t_start, t_end) per pair

    def informative(self, i):
        """Number of leading grid times whose TV exceeds three noise floors."""
        return _informative(self.tv[i], self.noise_floor[i])

    def monotone(self, i, tol=None):
        """TV non-increasing while above three noise floors, up to one floor of slack."""
        n = self.informative(i)
        tv = self.tv[i][:n]
        fl = self.noise_floor[i][:n] if tol is None else np.full(tv.shape, tol)
        return bool(np.all(np.diff(tv) <= fl[1:]))


def _informative(tv, floor):
    below = np.nonzero(tv <= 3 * floor)[0]
    return int(below[0]) if below.size else tv.size


def mixing_report(spec, pairs, horizon, N, seed, cert=None, dt_record=0.5, h=0.01,
                  projection=None, scheme="exponential_euler", workers=1,
                  r2_threshold=0.9, tail_fraction=0.6):
    """Empirical TV decay between ensembles from pairs of initial conditions.

    For each pair two ensembles are simulated with independent streams and a
    third from the first start gives the sampling noise floor.  The rate is
    the negative slope of ``log TV`` over the last ``tail_fraction`` of the
    informative part of the grid, i.e. of the times before TV first falls
    to three noise floors.
    """
    d = spec.d
    if projection is None:
        n_sites = d // 2
        projection = (n_sites, 0) if d >= 2 else (0,)
    projection = tuple(projection)
    if cert is None:
        cert = certify_lyapunov(spec)
    times = dt_record * np.arange(int(round(horizon / dt_record)) + 1)
    nt = times.size
    tv = np.zeros((len(pairs), nt))
    vdist = np.zeros_like(tv)
    floor = np.zeros_like(tv)
    rates, prefs, r2s, outcomes, windows = [], [], [], [], []
    for p, (xa, xb) in enumerate(pairs):
        ea = simulate_ensemble(spec, xa, times, h, N, seed, scheme, workers, key=3 * p)
        eb = simulate_ensemble(spec, xb, times, h, N, seed, scheme, workers, key=3 * p + 1)
        ec = simulate_ensemble(spec, xa, times, h, N, seed, scheme, workers, key=3 * p + 2)
        fa, fb = _dictionary(ea.states, cert), _dictionary(eb.states, cert)
        vdist[p] = np.max(np.abs(fa.mean(axis=0) - fb.mean(axis=0)), axis=1)
        for j in range(nt):
            Pa = ea.states[:, j, projection]
            tv[p, j] = tv_binned(Pa, eb.states[:, j, projection])
            floor[p, j] = tv_binned(Pa, ec.states[:, j, projection])
        n_inf = _informative(tv[p], floor[p])
        start = int(math.floor((1 - tail_fraction) * n_inf))
        use = np.zeros(nt, dtype=bool)
        use[start:n_inf] = True
        windows.append((float(times[start]), float(times[max(n_inf - 1, start)])))
        if np.allclose(np.asarray(xa, dtype=float), np.asarray(xb, dtype=float)):
            rates.append(np.nan), prefs.append(np.nan), r2s.append(np.nan)
            outcomes.append("degenerate: identical starts, TV is sampling noise")
            continue
        if np.count_nonzero(use) < 3:
            rates.append(np.nan), prefs.append(np.nan), r2s.append(np.nan)
            outcomes.append("no exponential fit: fewer than 3 tail points above the noise floor")
            continue
        t, y = times[use], np.log(tv[p][use])
        slope, icpt = np.polyfit(t, y, 1)
        resid = y - (slope * t + icpt)
        ss = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 0.0
        rates.append(-slope), prefs.append(math.exp(icpt)), r2s.append(r2)
        ok = r2 >= r2_threshold and slope < 0
        outcomes.append("fit" if ok else "no exponential fit: residual above threshold")
    return MixingReport(list(pairs), times, tv, vdist, floor, np.array(rates), np.array(prefs),
                        np.array(r2s), outcomes, projection, windows)


# ------------------------------------------------------------ path mode

def wiener_path_mode(spec, x_in, T, h, N, M_trunc, seed, scheme="euler_maruyama", key=0):
    """Endpoints ``X_T`` driven by Brownian paths synthesised from the first
    ``M_trunc`` basis functions, ``W_t = sqrt(T) * W~(t / T)``."""
    from .wiener import build_basis, tail_sum

    n_steps = int(round(T / h))
    tt = np.linspace(0.0, 1.0, n_steps + 1)
    stepper = _Stepper(spec, h, scheme)
    deficit = tail_sum(M_trunc) if M_trunc > 0 else 1.0
    if deficit > 1e-2:
        warnings.warn(f"path-mode variance deficit at t=T is {deficit * T:.3g}")
    out = np.empty((N, spec.d))
    n = spec.n
    basis = build_basis(M_trunc) if M_trunc > 0 else None
    P = basis.psi(tt) if basis is not None else None
    for b, sl in enumerate(block_slices(N)):
        m = sl.stop - sl.start
        if basis is None:
            dW = np.zeros((m, n_steps, n))
        else:
            rng = substream(seed, key, b)
            xi = rng.standard_normal((m, n, M_trunc))
            W = math.sqrt(T) * np.einsum("anm,tm->atn", xi, P)
            dW = np.diff(W, axis=1)
        X = np.tile(np.asarray(x_in, dtype=float), (m, 1))
        for k in range(n_steps):
            X = stepper.step_increment(X, dW[:, k])
        out[sl] = X
    return out


def cesaro_check(spec, cert, x_in, T, h, seed, scheme="exponential_euler", tol=0.05):
    """Running average of V along one long trajectory; stable within ``tol``
    (relative) over the last half."""
    times, X, _ = integrate(spec, x_in, T, h, seed, scheme)
    V = cert.V(X)
    avg = np.cumsum(V) / np.arange(1, V.size + 1)
    half = avg[avg.size // 2:]
    spread = float((half.max() - half.min()) / half[-1]) if half[-1] > 0 else math.inf
    return {"final": float(avg[-1]), "spread": spread, "pass": spread <= tol}
