import math

import numpy as np
import pytest

from gradreduce import Potential, ReducedPotential, SpectralBasis


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def basis32():
    return SpectralBasis(math.pi, 32)


@pytest.fixture(scope="session")
def basis64():
    return SpectralBasis(math.pi, 64)


@pytest.fixture(scope="session")
def well():
    """Double well with wells for L = pi and the declared certificate C = 11."""
    return Potential.clamped_double_well(2.0, lipschitz_bound=11.0)


@pytest.fixture(scope="session")
def rp3(basis64, well):
    return ReducedPotential(basis64, well, 3)


@pytest.fixture(scope="session")
def rp2(basis32):
    return ReducedPotential(basis32, Potential.clamped_double_well(2.0), 2)
