"""Gramian-based steering of the controlled system
``x' = A x + F(x) + B u(t)``.

The linear minimum-energy control
``u(s) = B^T exp((T-s) A^T) Q_T^{-1} (x0 - exp(TA) x)`` hits ``x0`` exactly
when F = 0.  For small horizons the nonlinear endpoint stays within a
Gronwall bound of it; for long horizons the plan drifts with zero control
and steers only over a final window of length ``s_T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad_vec, solve_ivp

from .linops import (
    CertificateError,
    ControllabilityError,
    EPS_RANK,
    expm,
    gramian,
    kalman_index,
    phi1,
)

__all__ = [
    "ControlPlan",
    "SteerResult",
    "smoothstep_ramp",
    "linear_min_energy_control",
    "control_norm_constant",
    "gronwall_bound",
    "small_time_threshold",
    "integrate_plan",
    "steer_perturbed",
    "approachability_probe",
    "RTOL",
]

RTOL = 1e-12
_T_GRID = np.logspace(-6, 0, 121)


def smoothstep_ramp(t0, t1, w):
    """C^1 weight: cubic rise on [t0, t0+w], 1 in between, cubic fall on [t1-w, t1]."""

    def rho(t):
        t = np.asarray(t, dtype=float)
        out = np.where((t >= t0) & (t <= t1), 1.0, 0.0)
        if w > 0:
            a = np.clip((t - t0) / w, 0.0, 1.0)
            c = np.clip((t1 - t) / w, 0.0, 1.0)
            out = out * (3 * a**2 - 2 * a**3) * (3 * c**2 - 2 * c**3)
        return out

    return rho


@dataclass
class ControlPlan:
    """``u(t) = rho(t) B^T exp((T-t) A^T) lam`` on the steering window, 0 before.

    ``phase`` is ``"single"`` (window [0, T], rho = 1) or
    ``"drift-then-steer"`` (window [T - s_T, T], C^1 ramps of width ``w``).
    """

    A: np.ndarray
    B: np.ndarray
    T: float
    x: np.ndarray
    x0: np.ndarray
    lam: np.ndarray
    Q: np.ndarray
    m: int
    phase: str = "single"
    switch_time: float = 0.0
    ramp_width: float = 0.0
    predicted_endpoint: np.ndarray | None = None
    u_bound: float = math.nan
    meta: dict = field(default_factory=dict)

    @property
    def breakpoints(self):
        ts = [0.0, self.switch_time]
        if self.ramp_width > 0:
            ts += [self.switch_time + self.ramp_width, self.T - self.ramp_width]
        ts.append(self.T)
        return sorted(set(ts))

    def rho(self, t):
        if self.phase == "single":
            return np.ones_like(np.asarray(t, dtype=float))
        return smoothstep_ramp(self.switch_time, self.T, self.ramp_width)(t)

    def u(self, t):
        """Control values at times ``t`` (array), shape (len(t), n)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, self.B.shape[1]))
        for i, ti in enumerate(t):
            r = float(self.rho(ti))
            if r != 0.0:
                out[i] = r * (self.B.T @ (expm(self.A.T, self.T - ti) @ self.lam))
        return out

    def zeta(self, t):
        """``zeta(t) = int_0^t u``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, self.B.shape[1]))
        for i, ti in enumerate(t):
            if ti <= self.switch_time:
                continue
            if self.phase == "single":
                E, P = phi1(self.A.T, ti)
                out[i] = self.B.T @ expm(self.A.T, self.T - ti) @ P @ self.lam
            else:
                pts = [p for p in self.breakpoints if self.switch_time < p < ti]
                out[i] = quad_vec(lambda s: self.u(s)[0], self.switch_time, ti,
                                  points=pts or None, epsabs=1e-14, epsrel=1e-12)[0]
        return out


@dataclass
class SteerResult:
    endpoint: np.ndarray
    residual: float
    rtol: float
    phase_log: list
    perturbation: float | None = None  # |nonlinear - linear endpoint|
    certified_bound: float | None = None
    target: float | None = None

    @property
    def passed(self):
        return self.target is None or self.residual < self.target


def _gramian_checked(A, B, T, eps_rank=EPS_RANK):
    Q = gramian(A, B, T)
    ev = np.linalg.eigvalsh(Q)
    if ev[-1] <= 0 or ev[0] <= eps_rank * ev[-1]:
        raise ControllabilityError(
            f"Q_T numerically singular at T={T:g} (eigenvalue ratio {ev[0] / max(ev[-1], 1e-300):.3g})"
        )
    return Q, 1.0 / ev[0]


def _m_exponent(A, B):
    kal = kalman_index(A, B)
    if not kal.satisfied:
        raise ControllabilityError("(A, B) fails the Kalman rank condition")
    return 2 * kal.d_star - 1


def linear_min_energy_control(A, B, x, x0, T):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if not T > 0:
        raise ValueError("horizon must be positive")
    m = _m_exponent(A, B)
    Q, qinv = _gramian_checked(A, B, T)
    v = x0 - expm(A, T) @ x
    lam = np.linalg.solve(Q, v)
    nA = np.linalg.norm(A, 2)
    eT = math.exp(T * nA)
    ub = np.linalg.norm(B, 2) * eT * qinv * (np.linalg.norm(x0) + eT * np.linalg.norm(x))
    return ControlPlan(A, B, float(T), x, x0, lam, Q, m, "single", 0.0, 0.0,
                       expm(A, T) @ x + Q @ lam, float(ub))


def control_norm_constant(A, B, T_grid=None):
    """``C`` with ``||u||_inf <= C (|x| + |x0|) T^{-m}`` for all T in (0, 1].

    Uses ``C = ||B|| exp(2||A||) max_T T^m ||Q_T^{-1}||`` with the max over
    a logarithmic grid (T^m ||Q_T^{-1}|| is bounded as T -> 0).
    """
    m = _m_exponent(A, B)
    T_grid = np.logspace(-2, 0, 41) if T_grid is None else np.asarray(T_grid)
    cq = 0.0
    for T in T_grid:
        try:
            _, qinv = _gramian_checked(A, B, T)
        except ControllabilityError:
            continue
        cq = max(cq, T**m * qinv)
    nA = np.linalg.norm(A, 2)
    return float(np.linalg.norm(B, 2) * math.exp(2 * nA) * cq), m


def _qinv_norm(A, B, T):
    try:
        return _gramian_checked(A, B, T, eps_rank=1e-15)[1]
    except ControllabilityError:
        return math.inf


def gronwall_bound(spec, x, x0, T):
    """Certified bound on ``|y_T(T)|``, the gap between the nonlinear and the
    linear endpoint under the linear minimum-energy control."""
    f = spec.force
    if f.is_zero:
        return 0.0
    a, cg = float(f.growth_exponent), float(f.growth_constant)
    if not math.isfinite(cg):
        return math.inf
    nA = np.linalg.norm(spec.A, 2)
    eT = math.exp(T * nA)
    if a == 0.0:
        return cg * T * eT
    nB = np.linalg.norm(spec.B, 2)
    U = nB * eT * _qinv_norm(spec.A, spec.B, T) * (np.linalg.norm(x0) + eT * np.linalg.norm(x))
    Z = eT * np.linalg.norm(x) + T * eT * nB * U
    c1 = eT * cg
    with np.errstate(over="ignore"):
        val = c1 * T * (2.0 + Z**a) * math.exp(min(c1 * T, 700.0))
    return float(val) if np.isfinite(val) else math.inf


def _check_growth(spec):
    kal = kalman_index(spec.A, spec.B)
    if not kal.satisfied:
        raise CertificateError("(K) fails")
    a = spec.force.growth_exponent
    if a >= 1.0 / (2 * kal.d_star):
        m = 2 * kal.d_star - 1
        raise CertificateError(
            f"growth exponent a={a:g} violates a(1-m)+1 > 0 with m={m} (need a < {1 / (2 * kal.d_star):g})"
        )


def small_time_threshold(spec, x, delta, x0=None, T_grid=None):
    """Largest grid horizon in (0, 1] whose Gronwall bound is below delta/4."""
    _check_growth(spec)
    if spec.force.is_zero:
        return 1.0
    x0 = np.zeros(spec.d) if x0 is None else x0
    grid = _T_GRID if T_grid is None else np.sort(np.asarray(T_grid))
    best = 0.0
    for T in grid:
        if gronwall_bound(spec, x, x0, T) < delta / 4:
            best = float(T)
    if best == 0.0:
        raise ControllabilityError("no grid horizon meets the Gronwall bound (constant overflow)")
    return best


def integrate_plan(spec, plan, x=None, rtol=RTOL, atol=None, t_eval=None, linear=False):
    """Integrate ``x' = Ax + F(x) + B u`` under ``plan`` with DOP853.

    The control is carried as ``mu(t) = exp((T-t) A^T) lam``, solving
    ``mu' = -A^T mu`` alongside the state, so no exponentials are formed
    inside the right-hand side.  Returns (endpoint, times, states).
    """
    A, B = spec.A, spec.B
    d = spec.d
    x = plan.x if x is None else np.asarray(x, dtype=float)
    atol = rtol if atol is None else atol
    force = None if linear else spec.force

    def rhs(t, z):
        xs, mu = z[:d], z[d:]
        dx = A @ xs + B @ (B.T @ mu) * float(plan.rho(t)) if t >= plan.switch_time else A @ xs
        if force is not None and not force.is_zero:
            dx = dx + force.value(xs)
        return np.concatenate([dx, -A.T @ mu])

    z = np.concatenate([x, expm(A.T, plan.T) @ plan.lam])
    bps = plan.breakpoints
    ts_out, xs_out = [], []
    for t0, t1 in zip(bps[:-1], bps[1:]):
        te = None
        if t_eval is not None:
            te = [t for t in t_eval if t0 <= t <= t1]
        sol = solve_ivp(rhs, (t0, t1), z, method="DOP853", rtol=rtol, atol=atol, t_eval=te)
        if not sol.success:
            raise ControllabilityError(f"verification integrator failed: {sol.message}")
        z = sol.y[:, -1]
        if te:
            ts_out.extend(sol.t)
            xs_out.extend(sol.y[:d].T)
    return z[:d], np.array(ts_out), np.array(xs_out)


def _weighted_plan(spec, y, x0, t_s, T, w):
    """Steering from ``y`` at time ``t_s`` to ``x0`` at T with ramp weights."""
    A, B = spec.A, spec.B
    s = T - t_s
    BBt = B @ B.T
    # full-weight middle window [t_s + w, T - w]
    mid = s - 2 * w
    Q = np.zeros((spec.d, spec.d))
    if mid > 0:
        E = expm(A, w)
        Q += E @ gramian(A, B, mid) @ E.T
    nodes, weights = np.polynomial.legendre.leggauss(40)
    rho = smoothstep_ramp(t_s, T, w)
    for a, b_ in ((t_s, t_s + w), (T - w, T)):
        ss = 0.5 * (b_ - a) * nodes + 0.5 * (a + b_)
        for si, wi in zip(ss, 0.5 * (b_ - a) * weights):
            E = expm(A, T - si)
            Q += wi * float(rho(si)) * E @ BBt @ E.T
    Q = 0.5 * (Q + Q.T)
    lam = np.linalg.solve(Q, x0 - expm(A, s) @ y)
    return Q, lam


def steer_perturbed(spec, x, x0, delta, T, rtol=RTOL):
    """Plan and verify steering of the nonlinear system from x into B(x0, delta/2)."""
    _check_growth(spec)
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    T_thr = small_time_threshold(spec, x, delta, x0)
    log = [f"T_x_delta={T_thr:.6g}"]
    if T <= T_thr:
        plan = linear_min_energy_control(spec.A, spec.B, x, x0, T)
        end, _, _ = integrate_plan(spec, plan, rtol=rtol)
        lin, _, _ = integrate_plan(spec, plan, rtol=rtol, linear=True)
        bound = gronwall_bound(spec, x, x0, T)
        log.append("single phase")
        res = SteerResult(end, float(np.linalg.norm(end - x0)), rtol, log,
                          float(np.linalg.norm(end - lin)), bound, delta / 4)
        return plan, res

    # drift phase: where can the free trajectory be during [T/2, T]?
    free = solve_ivp(lambda t, z: spec.drift(z), (0, T), x, method="DOP853",
                     rtol=rtol, atol=rtol, dense_output=True)
    late = free.sol(np.linspace(T / 2, T, 201))
    r_T = float(np.max(np.linalg.norm(late, axis=0)))
    # the Gronwall bound depends on y only through |y|, so a radial grid suffices
    radii = np.linspace(0.0, r_T, 9)
    inf_T = min(small_time_threshold(spec, r * _unit(spec.d), delta, x0) for r in radii)
    s_T = min(T / 2, 0.5 * inf_T)
    t_s = T - s_T
    w = min(s_T / 4, 0.01 * T)
    y = free.sol(t_s)
    Q, lam = _weighted_plan(spec, y, x0, t_s, T, w)
    plan = ControlPlan(spec.A, spec.B, float(T), x, x0, lam, Q, _m_exponent(spec.A, spec.B),
                       "drift-then-steer", t_s, w, x0.copy(),
                       meta={"r_T": r_T, "s_T": s_T, "drift_endpoint": y})
    end, _, _ = integrate_plan(spec, plan, rtol=rtol)
    log += [f"drift on [0, {t_s:.6g}], |y|={np.linalg.norm(y):.6g}, r_T={r_T:.6g}",
            f"steer on [{t_s:.6g}, {T:.6g}] with ramp width {w:.3g}"]
    return plan, SteerResult(end, float(np.linalg.norm(end - x0)), rtol, log, None, None, delta / 2)


def _unit(d):
    e = np.zeros(d)
    e[0] = 1.0
    return e


def approachability_probe(spec, starts, x0, delta, T, N, seed, h=0.01,
                          scheme="exponential_euler", workers=1, confidence=0.95):
    """Monte Carlo ``P(X_T in B(x0, delta))`` per start with simultaneous
    Wilson intervals; zero hits are reported as "not observed"."""
    from .simulate import hit_probabilities, simulate_ensemble

    ends = [simulate_ensemble(spec, x, [T], h, N, seed, scheme, workers, key=i).states[:, 0]
            for i, x in enumerate(starts)]
    rows = hit_probabilities(ends, x0, delta, confidence)
    return {"rows": rows, "all_positive": all(r["lower"] > 0 for r in rows)}
