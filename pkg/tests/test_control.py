import numpy as np
import pytest
from scipy.integrate import quad, quad_vec, solve_ivp

from oscmix.control import (control_norm_constant, gronwall_bound, integrate_plan,
                            linear_min_energy_control, small_time_threshold, smoothstep_ramp,
                            steer_perturbed)
from oscmix.dynamics import CallableForce, DynamicsSpec
from oscmix.linops import CertificateError, ControllabilityError, expm

from conftest import random_kalman


def test_linear_steering_hits_target():
    rng = np.random.default_rng(21)
    for _ in range(10):
        A, B = random_kalman(rng)
        d = A.shape[0]
        x, x0 = rng.normal(size=d), rng.normal(size=d)
        plan = linear_min_energy_control(A, B, x, x0, 1.0)
        end, _, _ = integrate_plan(DynamicsSpec(A, B), plan)
        assert np.linalg.norm(end - x0) <= 1e-7


def test_plan_against_direct_integration():
    # integrate x' = Ax + B u(t) with u formed explicitly, a different route
    rng = np.random.default_rng(22)
    A, B = random_kalman(rng, d=3, n=1)
    x, x0 = np.array([1.0, -1.0, 0.5]), np.zeros(3)
    plan = linear_min_energy_control(A, B, x, x0, 0.7)
    sol = solve_ivp(lambda t, z: A @ z + B @ plan.u(t)[0], (0, 0.7), x, method="Radau",
                    rtol=1e-11, atol=1e-12)
    assert np.allclose(sol.y[:, -1], x0, atol=1e-7)


def test_energy_identity():
    rng = np.random.default_rng(23)
    A, B = random_kalman(rng, d=3, n=2)
    plan = linear_min_energy_control(A, B, np.ones(3), np.zeros(3), 0.5)
    energy = quad(lambda t: float(np.sum(plan.u(t) ** 2)), 0, 0.5, epsabs=1e-13, epsrel=1e-11)[0]
    assert energy == pytest.approx(plan.lam @ plan.Q @ plan.lam, rel=1e-8)


def test_zeta_is_running_integral():
    rng = np.random.default_rng(24)
    A, B = random_kalman(rng, d=2, n=1)
    plan = linear_min_energy_control(A, B, np.array([1.0, 2.0]), np.zeros(2), 0.9)
    for t in (0.1, 0.45, 0.9):
        ref = quad_vec(lambda s: plan.u(s)[0], 0, t, epsabs=1e-13)[0]
        assert np.allclose(plan.zeta(t)[0], ref, atol=1e-9)


def test_uses_forward_exponential():
    # the plan drives e^{TA} x + Q lam to x0, not e^{-TA} x + Q lam
    A = np.array([[0.0, 1.0], [-1.0, -0.5]])
    B = np.array([[0.0], [1.0]])
    x = np.array([1.0, 0.0])
    plan = linear_min_energy_control(A, B, x, np.zeros(2), 1.0)
    assert np.allclose(plan.lam, np.linalg.solve(plan.Q, -expm(A, 1.0) @ x))


def test_uncontrollable_pair_raises():
    with pytest.raises(ControllabilityError):
        linear_min_energy_control(np.diag([-1.0, -2.0]), np.array([[1.0], [0.0]]),
                                  np.ones(2), np.zeros(2), 1.0)


def test_control_norm_constant_exponent():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    C, m = control_norm_constant(A, B)
    assert m == 3 and np.isfinite(C) and C > 0
    for T in (0.05, 0.2, 1.0):
        plan = linear_min_energy_control(A, B, np.array([1.0, 0.0]), np.zeros(2), T)
        u = np.max(np.abs(plan.u(np.linspace(0, T, 101))))
        assert u <= C * 1.0 * T ** (-m) * (1 + 1e-9)


def test_smoothstep_ramp_is_c1():
    rho = smoothstep_ramp(0.2, 1.0, 0.1)
    assert rho(0.1) == 0 and rho(0.5) == 1 and rho(1.0) == 0
    t = np.array([0.2, 0.3, 0.9, 1.0])
    eps = 1e-9
    slopes = (rho(t + eps) - rho(t - eps)) / (2 * eps)
    assert np.allclose(slopes, 0.0, atol=1e-5)


def test_small_time_steering_on_coulomb_chain(coulomb2):
    x = np.array([1.0, -1.0, 0.5, 2.0])
    delta = 0.1
    T_thr = small_time_threshold(coulomb2, x, delta)
    assert 0 < T_thr < 1
    plan, res = steer_perturbed(coulomb2, x, np.zeros(4), delta, 0.9 * T_thr)
    assert res.residual < delta / 4
    assert res.perturbation <= res.certified_bound
    assert res.certified_bound == pytest.approx(gronwall_bound(coulomb2, x, np.zeros(4), 0.9 * T_thr))


def test_two_phase_steering(coulomb2):
    plan, res = steer_perturbed(coulomb2, np.array([1.0, -1.0, 0.5, 2.0]), np.zeros(4), 0.1, 0.5)
    assert plan.phase == "drift-then-steer"
    assert res.passed and res.residual < 0.05


def test_growth_exponent_too_large_rejected(chain2):
    f = CallableForce(4, lambda X: np.zeros_like(X), None, 0.3, 1.0, 1.0)
    with pytest.raises(CertificateError):
        small_time_threshold(chain2.with_force(f), np.ones(4), 0.1)


def test_gronwall_bound_zero_for_linear(chain2):
    assert gronwall_bound(chain2, np.ones(4), np.zeros(4), 0.5) == 0.0
