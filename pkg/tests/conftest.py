import numpy as np
import pytest

from minpen.kernels import KernelSpec, build_kernel_matrix

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_psd(n, rng, rank=None):
    G = rng.standard_normal((n, rank or n))
    return G @ G.T / (rank or n)


def exp_kernel(n, d, seed):
    pts = np.random.default_rng(seed).standard_normal((n, d))
    return pts, build_kernel_matrix(KernelSpec(), pts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
