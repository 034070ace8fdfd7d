import math

import pytest

from vertvar.hecke_forms import cached_eigenforms
from vertvar.testfunctions import Bump, LogGaussian
from vertvar.trace_formula import WeightKernel


def delta_coefficients(N):
    """tau(1..N) from q prod (1 - q^n)^24 by integer series multiplication."""
    series = [1] + [0] * N
    for n in range(1, N + 1):
        for _ in range(24):
            for i in range(N, n - 1, -1):
                series[i] -= series[i - n]
    return [0] + series[:N]


def eisenstein(k, N):
    """Integer q-expansion of E_k / (normalizing constant) with constant term 1, k in {4, 6}."""
    c = {4: 240, 6: -504}[k]
    return [1] + [c * sum(d ** (k - 1) for d in range(1, n + 1) if n % d == 0) for n in range(1, N + 1)]


def series_mul(a, b, N):
    return [sum(a[i] * b[n - i] for i in range(n + 1)) for n in range(N + 1)]


def divisor_count(n):
    return sum(1 + (d * d != n) for d in range(1, math.isqrt(n) + 1) if n % d == 0)


@pytest.fixture(scope="session")
def delta():
    return cached_eigenforms(12, 1100)[0]


@pytest.fixture(scope="session")
def kernel():
    return WeightKernel()


@pytest.fixture(scope="session")
def bump():
    return Bump(2.0)


@pytest.fixture(scope="session")
def log_gauss():
    return LogGaussian(0.5)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
