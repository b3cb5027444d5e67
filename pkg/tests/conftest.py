import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_convolve(x, k):
    """Nested-loop true convolution, valid region only."""
    n_k, m_k = k.shape
    rows, cols = x.shape[0] - n_k + 1, x.shape[1] - m_k + 1
    y = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for a in range(n_k):
                for b in range(m_k):
                    acc += k[a, b] * x[i + n_k - 1 - a, j + m_k - 1 - b]
            y[i, j] = acc
    return y


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
