import numpy as np
import pytest

from arasim.model import AnnealSpec, build_basis, build_operators

# pass/fail lines emitted by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def make_path(n, c="1", gamma=1.0, q=1, tau=100.0, basis="full", p=3):
    spec = AnnealSpec(n, p, c, gamma, q, anneal_time=tau)
    return build_operators(spec, build_basis(spec, basis))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_density(rng, dim):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
