import numpy as np
import pytest

from netlspi.tasks import pendulum_task, point_mass_task

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pm_task():
    return point_mass_task(seed=0)


@pytest.fixture(scope="session")
def pend_task():
    return pendulum_task(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
