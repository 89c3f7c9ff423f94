import numpy as np
import pytest

from s2inverse.sphere import SphMap, make_grid, random_coefficients, sht_inverse


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid4():
    return make_grid(4)


@pytest.fixture(scope="session")
def grid8():
    return make_grid(8)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16)


@pytest.fixture
def real_map8(grid8, rng):
    """A real, band-limited spin-0 map on the L=8 grid."""
    coeffs = random_coefficients(8, 0, rng, real=True)
    return SphMap(grid8, 0, sht_inverse(coeffs, grid8).values.real.copy())
