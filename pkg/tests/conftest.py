import pytest

from nlifsim import NetworkParams, RandomSource, make_grid


@pytest.fixture
def params():
    """Quiet excitatory network with the stock potentials."""
    return NetworkParams(connectivity=1.0, n_neurons=100)


@pytest.fixture
def grid():
    return make_grid(-4.0, 2.0, 1.0, 0.05)


@pytest.fixture
def source():
    return RandomSource(20240817)


@pytest.fixture
def rng(source):
    return source.generator()
