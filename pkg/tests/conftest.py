import numpy as np
import pytest

from slicekit.dynamics import ModelParams
from slicekit.grid import Grid2D

LX, H = 1.0e6, 1.0e4


def make_grid(nx=32, nz=17):
    return Grid2D(nx, nz, LX, H)


def observed_orders(errors, factor=2.0):
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / np.log(factor)


@pytest.fixture
def grid():
    return make_grid()


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS, summary_line
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(summary_line(n))
