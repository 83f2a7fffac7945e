from __future__ import annotations

import numpy as np
import pytest

from vstar.grid import Grid
from vstar.profiles import lane_emden_equilibrium, vacuum_profile
from vstar.weights import build_weights


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def quad200():
    data = vacuum_profile(Grid(200), 2.0)
    return data, build_weights(data)


@pytest.fixture(scope="session")
def eq400():
    data = lane_emden_equilibrium(Grid(400), 2.0, A=2.0 / np.pi)
    return data, build_weights(data)
