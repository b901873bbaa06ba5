import numpy as np
import pytest

from chaintransport.environment import RateSet

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_rates(rng, n, mode="uni", drive=True):
    """A valid RateSet with a comfortable spectral gap.

    Off-diagonal couplings are kept well below the local rates so reciprocal
    sets stay positive semidefinite and relaxation is fast.
    """
    gamma = np.zeros((n, n))
    g = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    gamma[iu] = rng.uniform(-0.3, 0.3, len(iu[0]))
    g[iu] = rng.uniform(-0.5, 0.5, len(iu[0]))
    if mode == "rec":
        gamma = gamma + gamma.T
        g = g + g.T
    elif mode == "uni_up":
        gamma, g = gamma.T.copy(), g.T.copy()
    np.fill_diagonal(gamma, rng.uniform(0.8, 1.5, n))
    gamma_in = rng.uniform(0.3, 1.5) if drive else 0.0
    gamma_out = rng.uniform(0.3, 1.5) if drive else 0.0
    return RateSet(gamma, g, gamma_in, gamma_out, mode)


def random_density_matrix(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return a + a.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
