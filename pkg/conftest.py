# conftest.py - Shared pytest fixtures
import numpy as np
import pytest

from core.derivator import identity_derivator, identity_with_jumps, silkworm_derivator, step_derivator
from backend.fem import generate_rect_mesh


@pytest.fixture
def silkworm():
    return silkworm_derivator()


@pytest.fixture
def identity():
    return identity_derivator()


@pytest.fixture
def step():
    return step_derivator()


@pytest.fixture
def two_jumps():
    """g(t) = t plus jumps of 0.5 at 0.3 and 1.0 at 0.7, on [0, 1]"""
    return identity_with_jumps([(0.3, 0.5), (0.7, 1.0)], 1.0)


@pytest.fixture
def small_square():
    return generate_rect_mesh(8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
