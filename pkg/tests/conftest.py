import numpy as np
import pytest

from curvdisk import Grid

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def grid():
    return Grid(32, 64)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(16, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
