import numpy as np
import pytest

from maxslice.grid import GridSpec, make_grid


def flat_metric(grid, scale=1.0):
    g = np.zeros((3, 3) + grid.shape)
    for i in range(3):
        g[i, i] = scale
    return g


def diag_metric(grid, d1, d2, d3):
    g = np.zeros((3, 3) + grid.shape)
    for i, d in enumerate((d1, d2, d3)):
        g[i, i] = np.broadcast_to(d, grid.shape)
    return g


def nodes(grid, a):
    return a[..., grid.nodes]


@pytest.fixture
def grid8():
    return make_grid(GridSpec(8, 8, 8))


@pytest.fixture
def grid16():
    return make_grid(GridSpec(16, 16, 17))


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0][1:].rstrip(":"))):
            terminalreporter.write_line(line)
