import numpy as np
import pytest

from mvlancaster.basis import build_basis


@pytest.fixture
def sym2():
    """Two equally likely states, u^(1) = (-1, 1)."""
    return build_basis([0.5, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_weights(rng, d):
    p = rng.uniform(0.05, 1.0, d)
    return p / p.sum()
