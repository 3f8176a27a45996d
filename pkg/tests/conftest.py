import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from diraclab.lattice import make_grid


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16, 12.0)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(32, 12.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
