import math

import numpy as np
import pytest

from obslab import geometry, modes1d


@pytest.fixture(scope="session")
def sphere():
    return geometry.make_profile("sphere")


@pytest.fixture(scope="session")
def sphere_eq(sphere):
    return geometry.equator_data(sphere)


@pytest.fixture(scope="session")
def sphere_family(sphere):
    """Ground radial modes k = 1..40 on the sphere, shared across tests."""
    return modes1d.solve_family(sphere, range(1, 41), n_max=0, grid_size=2000)


@pytest.fixture(scope="session")
def perturbed_sphere():
    return geometry.make_profile("perturbed-sphere", {"eps": 0.05})


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)
