import numpy as np
import pytest

from pqlab.discretization import ProblemParams, interval

_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Shared list of one-line verdicts printed at the end of the run."""
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _acceptance_lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mesh128():
    return interval(1.0).mesh(128)


@pytest.fixture(scope="session")
def mesh256():
    return interval(1.0).mesh(256)


@pytest.fixture(scope="session")
def pq315():
    return ProblemParams(3.0, 1.5)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260819)
