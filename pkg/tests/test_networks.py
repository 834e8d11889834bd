import math
from pathlib import Path

import numpy as np
import pytest
from scipy.special import erf

from oscmix import networks as nw
from oscmix.linops import matrix_from_csv

from conftest import chain

GOLDEN = Path(__file__).parent / "golden"


def test_chain_L2_golden():
    spec = chain(2)
    A = matrix_from_csv((GOLDEN / "chain_L2_A.csv").read_text())
    B = matrix_from_csv((GOLDEN / "chain_L2_B.csv").read_text())
    assert np.array_equal(spec.A, A)
    assert np.array_equal(spec.B, B)
    assert spec.force.is_zero


def test_chain_rejects_bad_parameters():
    with pytest.raises(nw.ConstructionError):
        nw.build_chain(nw.ChainSpec(L=1))
    with pytest.raises(nw.ConstructionError):
        nw.build_chain(nw.ChainSpec(L=3, k=0.0))


def test_chain_as_langevin_is_similar():
    cs = nw.ChainSpec(L=4, kappa=0.5, k=1.3, gamma1=0.7, gammaL=1.1, theta1=1.0, thetaL=2.0)
    a = nw.build_chain(cs)
    b = nw.build_langevin(nw.chain_as_langevin(cs))
    # (p, q) -> (p, omega q)
    om = nw.principal_sqrt(nw.chain_stiffness(4, 0.5, 1.3))
    S = np.block([[np.eye(4), np.zeros((4, 4))], [np.zeros((4, 4)), om]])
    assert np.allclose(S @ a.A @ np.linalg.inv(S), b.A, atol=1e-12)
    assert np.allclose(a.B @ a.B.T, b.B @ b.B.T, atol=1e-12)


def test_langevin_structure():
    om = np.array([[2.0, 0.3, 0.0], [0.3, 1.5, 0.2], [0.0, 0.2, 1.0]])
    spec = nw.build_langevin(nw.LangevinNetSpec(3, [0, 2], om, [1.0, 3.0], [0.5, 0.25]))
    S = spec.A + spec.A.T
    iota = np.zeros((3, 2))
    iota[0, 0], iota[2, 1] = 1.0, math.sqrt(0.5)
    assert np.allclose(S[:3, :3], -iota @ iota.T)
    assert np.allclose(S[3:, :], 0.0)
    assert np.allclose(spec.B @ spec.B.T, np.block([[iota @ np.diag([1.0, 3.0]) @ iota.T, np.zeros((3, 3))],
                                                  [np.zeros((3, 3)), np.zeros((3, 3))]]))


def test_langevin_validation():
    with pytest.raises(nw.ConstructionError):
        nw.build_langevin(nw.LangevinNetSpec(2, [], np.eye(2), [], []))
    with pytest.raises(nw.ConstructionError):
        nw.build_langevin(nw.LangevinNetSpec(2, [0], np.zeros((2, 2)), [1.0], [1.0]))


def test_semi_markov_constraints_hold():
    sm = nw.SemiMarkovSpec(2, 1, np.array([[1.0, 0.2], [0.2, 1.5]]), np.array([[1.0], [0.5]]),
                           np.array([[1.2]]), np.array([[0.7]]))
    spec = nw.build_semi_markov(sm)
    c = spec.meta["constraints"]
    assert c["A + A* = -B theta^-1 B*"] < 1e-12
    assert spec.d == 5


def test_semi_markov_constraint_violation_detected():
    A = np.array([[-1.0, 0.0], [0.0, -1.0]])
    B = np.array([[1.0], [0.0]])
    checks = nw.semi_markov_constraints(A, B, np.eye(1))
    assert not checks["A + A* = -B theta^-1 B*"][0]
    assert not checks["ker(A - A*) & ker B* = {0}"][0]
    with pytest.raises(nw.ConstructionError):
        nw.build_semi_markov(nw.SemiMarkovSpec(1, 1, np.eye(1), np.eye(1), np.eye(1), -np.eye(1)))


def _pair_energy(q, sigma=1.0, c=1.0, all_pairs=True):
    u = 0.0
    n = len(q)
    for i in range(n):
        for j in range(n):
            if i == j or (not all_pairs and abs(i - j) != 1):
                continue
            r = abs(q[i] - q[j])
            u += c * erf(r / (math.sqrt(2) * sigma)) / r
    return u if all_pairs else u / 2


@pytest.mark.parametrize("variant", ["coulomb_all_pairs", "coulomb_nearest_neighbor"])
def test_coulomb_value_and_gradient(variant):
    ps = nw.PotentialSpec(variant=variant, coupling=0.8, sigma=0.6)
    q = np.array([0.3, -1.1, 2.0])
    U, g, H = nw.coulomb_value_grad(ps, q, order=2)
    ref = _pair_energy(q, 0.6, 0.8, variant == "coulomb_all_pairs")
    assert U == pytest.approx(ref, rel=1e-13)
    eps = 1e-6
    fd = [(_pair_energy(q + eps * e, 0.6, 0.8, variant == "coulomb_all_pairs")
           - _pair_energy(q - eps * e, 0.6, 0.8, variant == "coulomb_all_pairs")) / (2 * eps)
          for e in np.eye(3)]
    assert np.allclose(g, fd, atol=1e-8)
    assert np.allclose(H, H.T)


def test_coulomb_higher_derivatives_by_differencing():
    ps = nw.PotentialSpec(variant="coulomb_all_pairs", sigma=1.0)
    q = np.array([0.05, 0.4])  # close charges exercise the small-argument series
    D = nw.coulomb_value_grad(ps, q, order=4)
    eps = 1e-4
    for j in range(1, 4):
        for e in np.eye(2):
            up = nw.coulomb_value_grad(ps, q + eps * e, order=4)[j]
            dn = nw.coulomb_value_grad(ps, q - eps * e, order=4)[j]
            fd = (up - dn) / (2 * eps)
            assert np.allclose(np.tensordot(D[j + 1], e, axes=([-1], [0])), fd, atol=1e-6)


def test_coulomb_regular_at_coincidence():
    ps = nw.PotentialSpec(variant="coulomb_all_pairs", sigma=1.0)
    U = nw.coulomb_value_grad(ps, np.zeros(2), order=0)[0]
    # erf(r/sqrt2)/r -> sqrt(2/pi), ordered pairs counted twice
    assert U == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-14)


def test_chain_force_is_minus_gradient_in_momenta(coulomb2):
    x = np.array([0.1, -0.2, 0.7, -0.4])  # (p1, p2, q1, q2)
    F = coulomb2.force.value(x)
    g = nw.coulomb_value_grad(nw.PotentialSpec(variant="coulomb_all_pairs"), x[2:], 1)[1]
    assert np.allclose(F[:2], -g)
    assert np.allclose(F[2:], 0.0)


def test_coulomb_growth_constant(coulomb2):
    # sup |f'| for f(r) = erf(r/sqrt2)/r by dense sampling
    r = np.linspace(1e-4, 20, 400001)
    fp = math.sqrt(2 / math.pi) * np.exp(-r**2 / 2) / r - erf(r / math.sqrt(2)) / r**2
    sup = np.max(np.abs(fp))
    # two ordered pairs along e1 - e2 with |e1 - e2| = sqrt2
    assert coulomb2.force.growth_constant == pytest.approx(2 * sup * math.sqrt(2), rel=1e-6)
    assert coulomb2.force.growth_exponent == 0.0
