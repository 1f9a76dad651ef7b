import numpy as np
import pytest

from lpineq.estimators import Dataset
from lpineq.simulation import draw, make_dgp


@pytest.fixture(scope="session")
def dgp0_sample():
    return draw(make_dgp("dgp0-homo"), 400, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def synthetic(n, d=1, J=1, seed=0):
    r = np.random.default_rng(seed)
    x = r.uniform(0, 1, size=(n, d))
    y = r.normal(size=(n, J)) + 0.3 * np.sin(3 * x[:, :1])
    return Dataset(x, y)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
