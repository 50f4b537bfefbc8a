import numpy as np
import pytest

from morseflow.cocycle import double_well
from morseflow.noise import TimeGrid, sample_wiener, zero_path
from morseflow.randset import CellSet, Partition


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(-30.0, 30.0, 0.01)


@pytest.fixture(scope="session")
def still(grid):
    """Noise-free path."""
    return zero_path(grid)


@pytest.fixture(scope="session")
def paths(grid):
    return [sample_wiener(grid, s) for s in range(6)]


@pytest.fixture(scope="session")
def dw():
    return double_well()


@pytest.fixture(scope="session")
def dw_sde():
    return double_well("stratonovich-sde")


@pytest.fixture(scope="session")
def part(dw):
    return Partition(dw.box, 200)


@pytest.fixture
def cells(part):
    """Shorthand for interval cell sets on the 200-cell partition."""
    def make(*intervals):
        return CellSet.from_intervals(part, list(intervals))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines collected by ``test_acceptance`` (if it ran)."""
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
