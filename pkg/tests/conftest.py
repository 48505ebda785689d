import numpy as np
import pytest

from astn.schedule import make_linear_schedule


@pytest.fixture(scope="session")
def sched():
    """Default linear schedule: T=1000, beta 1e-4 .. 0.02."""
    return make_linear_schedule(1000)


@pytest.fixture(scope="session")
def sched_small():
    """Short schedule for cheap exhaustive checks."""
    return make_linear_schedule(40, 1e-3, 0.05)


@pytest.fixture()
def rng():
    return np.random.default_rng(0xA57)
