import numpy as np
import pytest

from obslab.grid import GridSpec


@pytest.fixture
def grid_1d() -> GridSpec:
	"""L = 16, h = 1/16, Nyquist ~ 50."""
	return GridSpec(d=1, half_width=16.0, n_per_axis=512)


@pytest.fixture
def kernel_grid() -> GridSpec:
	return GridSpec(d=1, half_width=12.0, n_per_axis=512)


@pytest.fixture
def ou_grid() -> GridSpec:
	return GridSpec(d=1, half_width=8.0, n_per_axis=256)


@pytest.fixture
def rng() -> np.random.Generator:
	return np.random.default_rng(1234)
