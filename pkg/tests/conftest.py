import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pkf.demos import example1, harmonic_oscillator, pendulums
from pkf.kalman import kalman_gains

settings.register_profile("pkf", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkf")


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    G = rng.standard_normal((n, rank))
    return scale * G @ G.T


def random_pd(rng, n):
    return random_psd(rng, n) + 0.1 * np.eye(n)


@pytest.fixture(scope="session")
def ho():
    return harmonic_oscillator()


@pytest.fixture(scope="session")
def ho_gains(ho):
    return kalman_gains(ho)


@pytest.fixture(scope="session")
def pend():
    return pendulums()


@pytest.fixture(scope="session")
def ex1():
    return example1()


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the lines are repeated in the terminal summary."""
    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
