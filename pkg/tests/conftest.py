import numpy as np
import pytest

from prefopt import Instance

from acceptance_log import RESULTS


@pytest.fixture
def square():
    return Instance.from_coords([(0, 0), (0, 1), (1, 1), (1, 0)], id="square")


@pytest.fixture
def triangle():
    return Instance.from_coords([(0, 0), (3, 0), (0, 4)], id="triangle")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
