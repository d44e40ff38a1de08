import numpy as np
import pytest

from obslab.errors import DomainError, QuadratureTruncationError
from obslab.estimates import generate_test_functions
from obslab.grid import GridSpec, SampledField, l1_norm, sup_norm
from obslab.semigroups import (
	PropagatorConfig,
	SemigroupKind,
	gw_kernel,
	gw_multiplier,
	gw_step,
	gw_step_quadrature,
	mehler_kernel,
	orbit,
	ou_evaluate,
	ou_step,
	ou_step_scaling,
	ou_stddev,
	propagate,
	safe_region,
)
from obslab.spectral import spectral_multiply


def bump(g: GridSpec, centre: float = 0.3, width: float = 0.4) -> SampledField:
	return SampledField.from_function(g, lambda *xs: np.exp(-sum((x - centre) ** 2 for x in xs) / (2.0 * width ** 2)))


@pytest.fixture
def ou_corpus(ou_grid):
	return generate_test_functions("gaussian_bumps", 40, 3, ou_grid, decay_radius=2.0, widths=(0.15, 0.3))


class TestGaussWeierstrass:
	@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
	def test_kernel_mass(self, kernel_grid, t):
		assert l1_norm(gw_kernel(kernel_grid, t)) == pytest.approx(1.0, abs=1e-6)

	def test_identity_at_zero(self, grid_1d, rng):
		f = SampledField(grid_1d, rng.standard_normal(512))
		assert gw_step(f, 0.0) is f

	def test_negative_time(self, grid_1d):
		with pytest.raises(DomainError):
			gw_step(SampledField.zeros(grid_1d), -0.1)

	def test_composition(self, kernel_grid):
		f = bump(kernel_grid)
		composed = gw_step(gw_step(f, 0.1), 0.2)
		assert np.max(np.abs(composed.values - gw_step(f, 0.3).values)) <= 1e-10

	def test_gaussian_oracle(self, kernel_grid):
		evolved = gw_step(gw_kernel(kernel_grid, 0.3), 0.2)
		assert np.max(np.abs(evolved.values - gw_kernel(kernel_grid, 0.5).values)) <= 1e-8

	def test_spectral_matches_quadrature(self, kernel_grid):
		f = bump(kernel_grid, centre=-1.0, width=0.3)
		assert np.max(np.abs(gw_step(f, 0.2).values - gw_step_quadrature(f, 0.2).values)) <= 1e-10

	def test_contraction_and_positivity(self, grid_1d, rng):
		corpus = generate_test_functions("mixed", 20, 11, grid_1d, lam_max=24.0)
		for f in corpus:
			t = rng.uniform(0.05, 2.0)
			assert sup_norm(gw_step(f, t)) <= sup_norm(f) + 1e-10
		for f in generate_test_functions("gaussian_bumps", 10, 12, grid_1d):
			assert gw_step(f, rng.uniform(0.05, 2.0)).values.min() >= -1e-10

	def test_two_dimensional(self):
		g = GridSpec(d=2, half_width=8.0, n_per_axis=64)
		f = bump(g, centre=0.0, width=0.5)
		spectral = gw_step(f, 0.2).values
		quadrature = gw_step_quadrature(f, 0.2).values
		assert np.max(np.abs(spectral - quadrature)) <= 1e-10


class TestOrnsteinUhlenbeck:
	def test_stddev(self):
		assert ou_stddev(0.0) == 0.0
		assert ou_stddev(50.0) == pytest.approx(np.sqrt(0.5))

	def test_mehler_kernel_is_normalised(self, ou_grid):
		y = ou_grid.axis()
		row = mehler_kernel(np.array([0.0, 1.0]), y, 0.5)
		assert np.allclose(ou_grid.spacing * row.sum(axis=1), 1.0, atol=1e-10)

	def test_identity_at_zero(self, ou_grid):
		f = bump(ou_grid)
		assert ou_step(f, 0.0) is f

	@pytest.mark.parametrize("t", [0.25, 1.0])
	def test_constants_are_preserved(self, ou_grid, t):
		ones = SampledField(ou_grid, np.ones(ou_grid.shape))
		out = ou_step(ones, t, require_decay=False)
		safe = safe_region(ou_grid, t)
		assert safe.any()
		assert np.max(np.abs(out.values[safe] - 1.0)) <= 1e-8

	def test_constants_fail_the_decay_check(self, ou_grid):
		ones = SampledField(ou_grid, np.ones(ou_grid.shape))
		with pytest.raises(QuadratureTruncationError):
			ou_step(ones, 0.5)

	@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
	def test_quadrature_matches_scaling_identity(self, ou_grid, t):
		f = bump(ou_grid)
		safe = safe_region(ou_grid, t)
		quadrature = ou_step(f, t).values[safe]
		scaling = ou_step_scaling(f, t).values[safe]
		assert np.max(np.abs(quadrature - scaling)) <= 1e-6

	@pytest.mark.parametrize("t", [0.25, 1.0])
	def test_dilation_of_gaussian_smoothing(self, ou_grid, t):
		# S_t f evaluated at x/s equals (k_s * f)(x)
		f = bump(ou_grid)
		s = np.exp(-t)
		x = ou_grid.axis()
		near = np.abs(x) <= 2.0
		evaluated = ou_evaluate(f, t, [x[near] / s])
		smoothed = spectral_multiply(f, gw_multiplier((1.0 - s * s) / 4.0)).values[near]
		assert np.max(np.abs(evaluated - smoothed)) <= 1e-7

	def test_contraction_and_positivity(self, ou_grid, ou_corpus, rng):
		for f in ou_corpus:
			t = rng.uniform(0.05, 2.0)
			out = ou_step(f, t)
			assert sup_norm(out) <= sup_norm(f) + 1e-8
			assert out.values.min() >= -1e-12

	def test_separable_in_two_dimensions(self):
		g = GridSpec(d=2, half_width=8.0, n_per_axis=64)
		g1 = GridSpec(d=1, half_width=8.0, n_per_axis=64)
		bx = np.exp(-((g1.axis() - 0.5) ** 2) / 0.5)
		by = np.exp(-((g1.axis() + 0.25) ** 2) / 0.4)
		product = SampledField(g, np.outer(bx, by))
		out = ou_step(product, 0.4).values
		sx = ou_step(SampledField(g1, bx), 0.4).values
		sy = ou_step(SampledField(g1, by), 0.4).values
		assert np.max(np.abs(out - np.outer(sx, sy))) <= 1e-12

	def test_safe_region_shrinks_with_truncation(self, ou_grid):
		wide = safe_region(ou_grid, 0.5)
		narrow = safe_region(ou_grid, 0.5, truncation=5.0)
		assert narrow.sum() < wide.sum()
		assert np.all(wide[narrow])


class TestDispatch:
	def test_truncation_default_and_validation(self, ou_grid):
		assert PropagatorConfig(SemigroupKind.OU, ou_grid).truncation == ou_grid.half_width - ou_grid.spacing
		assert PropagatorConfig("OU", ou_grid, 20.0).truncation == ou_grid.half_width
		with pytest.raises(DomainError):
			PropagatorConfig(SemigroupKind.OU, ou_grid, -1.0)

	def test_propagate_rejects_other_grid(self, ou_grid, grid_1d):
		with pytest.raises(DomainError):
			propagate(PropagatorConfig(SemigroupKind.GW, grid_1d), bump(ou_grid), 0.1)

	def test_orbit_of_zero_time(self, grid_1d):
		f = bump(grid_1d)
		states = orbit(f, [0.0], PropagatorConfig(SemigroupKind.GW, grid_1d))
		assert len(states) == 1
		assert states[0] is f

	def test_orbit_is_consistent_with_steps(self, grid_1d):
		f = bump(grid_1d)
		states = orbit(f, [0.1, 0.2], PropagatorConfig(SemigroupKind.GW, grid_1d))
		assert np.max(np.abs(states[1].values - gw_step(states[0], 0.1).values)) <= 1e-10

	@pytest.mark.parametrize("kind", ["GW", "OU"])
	def test_orbit_norms_do_not_grow(self, ou_grid, ou_corpus, kind):
		cfg = PropagatorConfig(kind, ou_grid)
		times = np.linspace(0.0, 1.5, 16)
		for f in ou_corpus[:5]:
			norms = [sup_norm(s) for s in orbit(f, times, cfg)]
			assert all(b <= a + 1e-8 for a, b in zip(norms, norms[1:]))

	def test_orbit_rejects_unsorted_times(self, grid_1d):
		with pytest.raises(DomainError):
			orbit(bump(grid_1d), [0.2, 0.1], PropagatorConfig(SemigroupKind.GW, grid_1d))

	def test_orbit_rejects_short_truncation(self, ou_grid):
		cfg = PropagatorConfig(SemigroupKind.OU, ou_grid, 1.0)
		with pytest.raises(QuadratureTruncationError):
			orbit(bump(ou_grid), [0.0, 1.0], cfg)
