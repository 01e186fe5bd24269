import sys

import numpy as np
import pytest

from kernel_mor import KernelSpec, TimeGrid, ToleranceConfig, balance_dataset, benchmark_7d, collect, truncate


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bench_dataset():
    """7-D benchmark dataset at reduced resolution (200 samples on [0, 5])."""
    return collect(benchmark_7d(), TimeGrid.with_substeps(5.0, 200, 10))


@pytest.fixture(scope="session")
def bench_reduction(bench_dataset):
    res, fmap = balance_dataset(bench_dataset, KernelSpec.polynomial(3), ToleranceConfig())
    return truncate(res, fmap, 2, bench_dataset.ctrl_scale)


def random_psd(rng, n, rank=None):
    B = rng.standard_normal((n, rank or n))
    return B @ B.T


def random_symmetric_lti(rng, n):
    """Stable ``F = F^T`` with ``H = G^T`` (single input and output)."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    F = Q @ np.diag(-rng.uniform(0.3, 3.0, n)) @ Q.T
    F = 0.5 * (F + F.T)
    G = rng.standard_normal((n, 1))
    return F, G, G.T.copy()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
