import numpy as np
import pytest

from oscmix import networks as nw
from oscmix.dynamics import DynamicsSpec


def chain(L=2, variant="none", **kw):
    cs = nw.ChainSpec(L=L, kappa=kw.get("kappa", 1.0), k=kw.get("k", 1.0), gamma1=1.0,
                      gammaL=1.0, theta1=1.0, thetaL=1.0)
    return nw.build_chain(cs, nw.PotentialSpec(variant=variant))


@pytest.fixture
def ou():
    return DynamicsSpec(np.array([[-1.0]]), np.array([[1.0]]), label="ou")


@pytest.fixture
def chain2():
    return chain(2)


@pytest.fixture
def coulomb2():
    return chain(2, "coulomb_all_pairs")


def random_kalman(rng, d=None, n=None, cond_max=1e8, T=1.0):
    """Random controllable pair with a well-conditioned Gramian at T."""
    from oscmix.linops import gramian, kalman_index

    while True:
        dd = d or int(rng.integers(2, 7))
        nn = n or int(rng.integers(1, 3))
        A = rng.normal(size=(dd, dd))
        B = rng.normal(size=(dd, nn))
        if not kalman_index(A, B).satisfied:
            continue
        if np.linalg.cond(gramian(A, B, T)) < cond_max:
            return A, B


def random_hurwitz(rng, d):
    A = rng.normal(size=(d, d))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 1.0)
    return A - shift * np.eye(d)


H_FD = 1e-5


def _jac(f, x, h=H_FD):
    cols = [(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)]
    return np.array(cols).T


def fd_lie(X, Y):
    """``L_X Y = DY[X] - DX[Y]`` by central differences."""
    return lambda x: _jac(Y, x) @ X(x) - _jac(X, x) @ Y(x)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
