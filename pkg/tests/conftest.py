import math

import numpy as np
import pytest

from degwave.geometry import Domain, Grid, build_control_region, minimal_time
from degwave.wavesolver import StatePair, cfl_timestep


def interval(alpha=0.5, cells=200, a=-1.0, b=1.0):
    return Grid(Domain(1, ((a, b),), alpha), cells)


def square(alpha=1.0, cells=32, lo=-1.0, hi=1.0):
    return Grid(Domain(2, ((lo, hi), (lo, hi)), alpha), cells)


class Benchmark:
    """1D benchmark scenario: (-1, 1), alpha = 0.5, collar + origin ball."""

    def __init__(self, cells=200, delta=0.1, epsilon=0.1):
        self.grid = interval(0.5, cells)
        self.omega = build_control_region(self.grid, delta, epsilon, include_origin=True)
        self.delta, self.epsilon = delta, epsilon
        self.T = minimal_time(self.grid.domain, epsilon, delta)
        self.dt = cfl_timestep(self.grid, 0.9)

    def initial(self):
        x = self.grid.axes[0]
        return StatePair(np.exp(-20 * x**2) * (1 - x**2), self.grid.zeros())


@pytest.fixture(scope="session")
def bench():
    return Benchmark()


@pytest.fixture(scope="session")
def bench_fine():
    return Benchmark(cells=400)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def interior_random(grid, rng):
    u = rng.standard_normal(grid.shape)
    u[~grid.interior] = 0.0
    return u


__all__ = ["interval", "square", "Benchmark", "rel", "interior_random", "math"]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=lambda k: int(k[2:])):
            terminalreporter.write_line(RESULTS[key])
