from __future__ import annotations

import numpy as np
import pytest

from hpe.field import GridField
from hpe.scenarios import odd_gaussian


def patch(n: int = 64, amplitude: float = 1.0, sigma: float = 0.5, center=(0.0, 2.0), width: float = 6.4):
    """Odd-symmetrized Gaussian on a ``width``-square window."""
    fn = odd_gaussian(amplitude, sigma, center)
    return GridField.from_function(fn, (-0.5 * width, 0.5 * width), width, n, n, name="omega")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def patch64():
    return patch(64)
