import numpy as np
import pytest

from sleepmis.graph import Graph


@pytest.fixture
def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


def path(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star(k, center=0):
    leaves = [v for v in range(k + 1) if v != center]
    return Graph.from_edges(k + 1, [(center, v) for v in leaves])


def mask(n, nodes):
    m = np.zeros(n, dtype=bool)
    m[list(nodes)] = True
    return m


# acceptance lines, printed once at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
