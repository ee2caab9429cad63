import numpy as np
import pytest

from krikf.filter import FilterConfig, Observation
from krikf.graph import build_graph, eigendecompose, is_connected, laplacian
from krikf.kernels import KernelMatrix

ACCEPTANCE_RESULTS = []


def random_connected_graph(n, rng, density=0.5, weighted=True):
    """Random weighted graph on ``n`` nodes; a path is added so it is connected."""
    a = np.triu((rng.random((n, n)) < density) * (rng.uniform(0.5, 2.0, (n, n)) if weighted else 1.0), 1)
    for i in range(n - 1):
        if a[i, i + 1] == 0:
            a[i, i + 1] = 1.0
    a = a + a.T
    assert is_connected(a)
    return build_graph(a)


def random_spd(n, rng, floor=0.1):
    x = rng.standard_normal((n, n))
    return x @ x.T / n + floor * np.eye(n)


def random_instance(rng, n, horizon, missing=True):
    """Random filter configs and observations for the batch comparison."""
    lam1, lam2 = rng.uniform(0.2, 3.0, 2)
    b = rng.standard_normal((n, n)) / np.sqrt(n)
    k_nu = KernelMatrix.from_matrix(random_spd(n, rng))
    k_eta = KernelMatrix.from_matrix(random_spd(n, rng))
    cfg = FilterConfig(lam1, lam2, b, k_nu, k_eta)
    obs = []
    for t in range(1, horizon + 1):
        s = rng.integers(0 if missing else 1, n + 1)
        idx = np.sort(rng.choice(n, size=s, replace=False))
        obs.append(Observation(t, idx, rng.standard_normal(s)))
    return cfg, obs


def basis_of(g):
    return eigendecompose(laplacian(g))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record_acceptance():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, name, passed, detail):
        ACCEPTANCE_RESULTS.append((number, name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {name}: {detail}")
