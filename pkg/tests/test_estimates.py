import math

import numpy as np
import pytest

from obslab.errors import DegenerateFitError, DomainError, ObservationAnnihilatesError, SamplingError
from obslab.estimates import (
	CobsShape,
	ObsParams,
	certify_one_sided,
	cobs_form,
	cobs_ratios,
	diss_multiplier,
	diss_operator_norm,
	estimate_cobs,
	fit_cobs_scaling,
	fit_log_linear,
	generate_test_functions,
	lemma_value,
	measure_diss,
	measure_lemma_l1,
	measure_up,
	ou_transfer_violations,
	r_squared,
	time_grid,
	up_witnesses,
)
from obslab.grid import GridSpec, ObservationMask, PeriodicSlabs, SampledField, ThickSetSpec, make_mask, sup_norm
from obslab.semigroups import PropagatorConfig, SemigroupKind
from obslab.spectral import forward_transform, frequency_magnitude, multiplier_l1, projection_norm, spectral_multiply


def slab_mask(g: GridSpec, period: float, filled: tuple[float, float]) -> ObservationMask:
	spec = ThickSetSpec(windows=(period,), density=(filled[1] - filled[0]) / period, geometry=PeriodicSlabs((period,), (filled,)))
	return make_mask(spec, g)


@pytest.fixture(scope="module")
def grid() -> GridSpec:
	return GridSpec(d=1, half_width=16.0, n_per_axis=512)


@pytest.fixture(scope="module")
def corpus(grid):
	return generate_test_functions("band_limited", 8, 0, grid, lam_max=24.0)


@pytest.fixture(scope="module")
def lemma_fit(grid):
	return measure_lemma_l1(
		grid,
		[2.0, 4.0, 6.0, 8.0, 10.0],
		[0.1, 0.3, 0.5, 0.7, 0.9],
		held_out_lambdas=[3.0, 5.0, 7.0, 9.0, 9.5],
		held_out_s=[0.2, 0.4, 0.6, 0.8, 0.85],
	)


class TestFitting:
	def test_r_squared(self):
		y = np.array([1.0, 2.0, 3.0])
		assert r_squared(y, y) == 1.0
		assert r_squared(np.ones(3), np.ones(3)) == 1.0
		assert r_squared(np.ones(3), np.zeros(3)) == -math.inf

	def test_exact_line(self):
		x = np.array([0.0, 1.0, 2.0, 5.0])
		a, b, r2 = fit_log_linear(x, 0.5 - 2.0 * x)
		assert a == pytest.approx(0.5)
		assert b == pytest.approx(-2.0)
		assert r2 == pytest.approx(1.0)

	def test_single_abscissa(self):
		with pytest.raises(DegenerateFitError):
			fit_log_linear([1.0, 1.0], [0.0, 1.0])

	def test_one_sided_bound_covers_training_cells(self, rng):
		x = np.linspace(0.0, 10.0, 20)
		logv = -0.7 * x + 0.3 * rng.standard_normal(20)
		_, slope, _ = fit_log_linear(x, logv)
		d2, d3 = certify_one_sided(x, logv, slope)
		assert d2 >= 1.0
		assert d3 == pytest.approx(-slope)
		assert np.all(np.exp(logv) <= d2 * np.exp(-d3 * x))

	def test_growing_data_has_no_decay_rate(self):
		with pytest.raises(DegenerateFitError):
			certify_one_sided([0.0, 1.0], [0.0, 1.0], 1.0)


class TestParams:
	def test_kappa(self):
		assert ObsParams().kappa == 1.0
		assert ObsParams(gamma1=1.0, gamma2=3.0, gamma3=2.0).kappa == 1.0

	@pytest.mark.parametrize(
		"kwargs",
		[dict(gamma1=2.0, gamma2=2.0), dict(d2=0.5), dict(d0=0.0), dict(T=0.0), dict(r=0.5), dict(lambda_star=-1.0)],
	)
	def test_validation(self, kwargs):
		with pytest.raises(DomainError):
			ObsParams(**kwargs)

	def test_shape_validation(self):
		with pytest.raises(DomainError):
			CobsShape(1.0, -0.1, 0.0)


class TestCorpus:
	def test_deterministic_and_normalised(self, grid):
		a = generate_test_functions("mixed", 6, 42, grid, lam_max=12.0)
		b = generate_test_functions("mixed", 6, 42, grid, lam_max=12.0)
		for f, g in zip(a, b):
			assert np.array_equal(f.values, g.values)
			assert sup_norm(f) == pytest.approx(1.0, abs=1e-12)

	def test_prefix_is_stable(self, grid):
		short = generate_test_functions("band_limited", 4, 5, grid, lam_max=12.0)
		long = generate_test_functions("band_limited", 8, 5, grid, lam_max=12.0)
		for f, g in zip(short, long):
			assert np.array_equal(f.values, g.values)

	def test_band_limit(self, grid):
		xi = frequency_magnitude(grid)
		for f in generate_test_functions("band_limited", 4, 1, grid, lam_max=8.0):
			coeffs = forward_transform(f).coefficients
			assert np.max(np.abs(coeffs[xi >= 8.0])) <= 1e-13

	def test_bumps_decay(self, grid):
		outside = np.abs(grid.axis()) > 4.0
		for f in generate_test_functions("gaussian_bumps", 8, 2, grid, decay_radius=4.0):
			assert np.max(np.abs(f.values[outside])) < 1e-12

	def test_impossible_decay(self, grid):
		with pytest.raises(SamplingError):
			generate_test_functions("gaussian_bumps", 1, 0, grid, decay_radius=0.5, widths=(1.0, 2.0))

	def test_invalid_requests(self, grid):
		with pytest.raises(DomainError):
			generate_test_functions("band_limited", 0, 0, grid, lam_max=4.0)
		with pytest.raises(DomainError):
			generate_test_functions("band_limited", 2, 0, grid)


class TestUncertainty:
	LAMBDAS = [2.0, 4.0, 8.0, 16.0]

	@pytest.fixture(scope="class")
	def wide_corpus(self, grid):
		return generate_test_functions("band_limited", 16, 0, grid, lam_max=24.0)

	def test_full_mask_has_no_growth(self, grid, corpus):
		fit = measure_up(ObservationMask.full(grid), self.LAMBDAS, corpus)
		assert all(cell["ratio"] == pytest.approx(1.0) for cell in fit.cells)
		assert abs(fit.fitted["d1"]) <= 1e-3
		assert abs(fit.fitted["affine_d1"]) <= 1e-3

	def test_thick_slabs_with_witnesses(self, grid, wide_corpus):
		mask = slab_mask(grid, 2.0, (0.0, 1.0))
		fit = measure_up(mask, self.LAMBDAS, wide_corpus, windows=[2.0], rho=0.5, witnesses=True)
		assert fit.fitted["d0"] == 1.0
		assert 0 < fit.fitted["d1"] < math.inf
		assert fit.fitted["affine_d1"] > 0
		assert fit.r2 >= 0.9
		assert all(math.isfinite(cell["ratio"]) and cell["ratio"] >= 1.0 for cell in fit.cells)

	def test_rate_grows_as_density_shrinks(self, grid, wide_corpus):
		densities = [0.5, 0.4, 0.3, 0.2, 0.1]
		masks = [slab_mask(grid, 2.0, (0.0, 2.0 * rho)) for rho in densities]
		shared = list(wide_corpus) + [w for m in masks for w in up_witnesses(m)]
		rates = [measure_up(m, self.LAMBDAS, shared).fitted["d1"] for m in masks]
		assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))
		assert rates[-1] > rates[0]

	def test_rate_is_least_squares_through_origin(self, grid, corpus):
		fit = measure_up(slab_mask(grid, 2.0, (0.0, 1.0)), self.LAMBDAS, corpus)
		lam = np.array([c["lambda"] for c in fit.cells])
		logs = np.array([c["log_ratio"] for c in fit.cells])
		assert fit.fitted["d1"] == pytest.approx(lam @ logs / (lam @ lam), rel=1e-12)

	def test_annihilated_observation(self, grid):
		# odd and band-limited, so P f vanishes at the origin, the only observed point
		f = SampledField.from_function(grid, lambda x: np.sin(np.pi * x / 4.0))
		only_origin = np.zeros(grid.shape, dtype=bool)
		only_origin[grid.n_per_axis // 2] = True
		with pytest.raises(ObservationAnnihilatesError, match="observation annihilates test function"):
			measure_up(ObservationMask(grid, only_origin), [2.0, 4.0], [f])

	def test_rejects_nonpositive_cutoff(self, grid, corpus):
		with pytest.raises(DomainError):
			measure_up(ObservationMask.full(grid), [0.0, 2.0], corpus)

	def test_smaller_observation_set_gives_larger_ratios(self, grid, corpus):
		lambdas = [2.0, 4.0, 8.0]
		small = measure_up(slab_mask(grid, 2.0, (0.0, 0.5)), lambdas, corpus)
		large = measure_up(slab_mask(grid, 2.0, (0.0, 1.0)), lambdas, corpus)
		for a, b in zip(small.cells, large.cells):
			assert a["ratio"] >= b["ratio"] - 1e-12

	def test_ratio_is_scale_invariant(self, grid, corpus):
		mask = slab_mask(grid, 2.0, (0.0, 1.0))
		base = measure_up(mask, [4.0, 8.0], corpus)
		scaled = measure_up(mask, [4.0, 8.0], [f.scaled(3.0) for f in corpus])
		for a, b in zip(base.cells, scaled.cells):
			assert a["ratio"] == pytest.approx(b["ratio"], rel=1e-12)

	def test_larger_corpus_never_lowers_ratios(self, grid, corpus):
		mask = slab_mask(grid, 2.0, (0.0, 1.0))
		half = measure_up(mask, [4.0, 8.0], corpus[:4])
		full = measure_up(mask, [4.0, 8.0], corpus)
		for a, b in zip(half.cells, full.cells):
			assert b["ratio"] >= a["ratio"]

	def test_rejects_sets_that_are_not_thick(self, grid, corpus):
		mask = ObservationMask(grid, np.abs(grid.axis()) <= 1.0)
		with pytest.raises(DomainError):
			measure_up(mask, [2.0, 4.0], corpus, windows=[2.0], rho=0.5)

	def test_zero_corpus(self, grid):
		with pytest.raises(DegenerateFitError):
			measure_up(ObservationMask.full(grid), [2.0, 4.0], [SampledField.zeros(grid)])


class TestDissipation:
	def test_heat_flow_fit(self, grid, corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, grid)
		fit = measure_diss(
			cfg,
			[4.0, 8.0, 16.0],
			[0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
			corpus,
			held_out_lambdas=[6.0, 12.0],
			held_out_times=[0.075, 0.15, 0.25],
			witnesses=True,
		)
		assert fit.r2 >= 0.99
		assert fit.fitted["d3"] > 0
		assert fit.fitted["d2"] >= 1.0
		assert fit.violations == 0
		assert len(fit.cells) == 18 + 6

	def test_witness_attains_operator_norm(self, grid, corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, grid)
		fit = measure_diss(cfg, [4.0, 8.0], [0.05, 0.1], corpus, witnesses=True)
		cell = next(c for c in fit.cells if c["lambda"] == 4.0 and c["t"] == 0.05)
		assert cell["ratio"] == pytest.approx(diss_operator_norm(grid, 4.0, 0.05), rel=1e-9)

	def test_low_frequencies_are_removed(self, grid):
		for f in generate_test_functions("band_limited", 4, 9, grid, lam_max=4.0):
			assert sup_norm(spectral_multiply(f, diss_multiplier(8.0, 0.2))) <= 1e-10

	def test_short_time_bound(self, grid):
		lam = 8.0
		assert diss_operator_norm(grid, lam, 0.02) <= 1.0 + projection_norm(grid, lam) + 1e-9

	def test_rejects_nonpositive_times(self, grid, corpus):
		with pytest.raises(DomainError):
			measure_diss(PropagatorConfig(SemigroupKind.GW, grid), [4.0], [0.0, 0.1], corpus)

	def test_times_limited_to_half_horizon(self, grid, corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, grid)
		with pytest.raises(DomainError, match="half the horizon"):
			measure_diss(cfg, [4.0, 8.0], [0.1, 0.6], corpus, horizon=1.0)
		with pytest.raises(DomainError, match="half the horizon"):
			measure_diss(cfg, [4.0, 8.0], [0.1, 0.2], corpus, held_out_lambdas=[6.0], held_out_times=[0.3], horizon=0.5)
		fit = measure_diss(cfg, [4.0, 8.0], [0.1, 0.5], corpus, horizon=1.0)
		assert fit.params["horizon"] == 1.0

	def test_ornstein_uhlenbeck_transfer(self, lemma_fit):
		g = GridSpec(d=1, half_width=8.0, n_per_axis=256)
		bumps = generate_test_functions("gaussian_bumps", 8, 4, g, decay_radius=2.0, widths=(0.1, 0.13))
		fit = measure_diss(PropagatorConfig(SemigroupKind.OU, g), [2.0, 4.0], [0.1, 0.2], bumps)
		assert fit.fitted["d3"] > 0
		violations, checked = ou_transfer_violations(fit, lemma_fit)
		assert checked >= 1
		assert violations == 0


class TestLemma:
	def test_fit_and_held_out_cells(self, lemma_fit):
		assert lemma_fit.fitted["d3"] > 0
		assert lemma_fit.violations == 0
		assert lemma_fit.fitted["x_min"] < lemma_fit.fitted["x_max"]
		assert sum(cell["held_out"] for cell in lemma_fit.cells) == 25

	def test_bound_holds_on_training_cells(self, grid, lemma_fit):
		d2, d3 = lemma_fit.fitted["d2"], lemma_fit.fitted["d3"]
		value = multiplier_l1(diss_multiplier(6.0, (1.0 - 0.25) / 4.0), grid)
		assert value <= d2 * math.exp(-d3 * 36.0 * 0.75)

	@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
	def test_zero_cutoff_limit(self, grid, s):
		assert lemma_value(grid, 0.0, s) == pytest.approx(1.0, abs=1e-4)

	def test_decrement_ratio(self, grid):
		v2, v4, v8 = (lemma_value(grid, lam, 0.5) for lam in (2.0, 4.0, 8.0))
		ratio = (math.log(v4) - math.log(v8)) / (math.log(v2) - math.log(v4))
		assert 2.0 <= ratio <= 4.5

	def test_rejects_s_outside_unit_interval(self, grid):
		with pytest.raises(DomainError):
			lemma_value(grid, 2.0, 1.0)


class TestObservability:
	@pytest.fixture(scope="class")
	def cobs_grid(self) -> GridSpec:
		return GridSpec(d=1, half_width=16.0, n_per_axis=256)

	@pytest.fixture(scope="class")
	def cobs_corpus(self, cobs_grid):
		return generate_test_functions("band_limited", 16, 0, cobs_grid, lam_max=12.0)

	def test_time_grid(self):
		assert np.allclose(time_grid(1.0, 32), np.arange(32) / 32)
		with pytest.raises(DomainError):
			time_grid(1.0, 16)

	def test_full_observation(self, cobs_grid, cobs_corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, cobs_grid)
		value = estimate_cobs(cfg, ObservationMask.full(cobs_grid), 1.0, math.inf, cobs_corpus)
		assert value <= 1.0 + 1e-8

	def test_ratios_bound_every_test_function(self, cobs_grid, cobs_corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, cobs_grid)
		mask = slab_mask(cobs_grid, 4.0, (0.0, 1.0))
		ratios = cobs_ratios(cfg, mask, 1.0, 2.0, cobs_corpus)
		assert len(ratios) == len(cobs_corpus)
		assert max(ratios) == estimate_cobs(cfg, mask, 1.0, 2.0, cobs_corpus)
		scaled = cobs_ratios(cfg, mask, 1.0, 2.0, [f.scaled(-2.0) for f in cobs_corpus])
		assert np.allclose(ratios, scaled, rtol=1e-12)

	def test_decreases_with_horizon(self, cobs_grid, cobs_corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, cobs_grid)
		mask = slab_mask(cobs_grid, 4.0, (0.0, 1.0))
		values = [estimate_cobs(cfg, mask, T, math.inf, cobs_corpus, witnesses=True) for T in (0.5, 1.0, 2.0)]
		assert all(math.isfinite(v) for v in values)
		assert values[0] >= values[1] >= values[2]

	def test_stable_under_corpus_growth(self, cobs_grid):
		cfg = PropagatorConfig(SemigroupKind.GW, cobs_grid)
		mask = slab_mask(cobs_grid, 4.0, (0.0, 1.0))
		small = estimate_cobs(cfg, mask, 0.5, math.inf, generate_test_functions("band_limited", 16, 3, cobs_grid, lam_max=12.0), witnesses=True)
		large = estimate_cobs(cfg, mask, 0.5, math.inf, generate_test_functions("band_limited", 32, 3, cobs_grid, lam_max=12.0), witnesses=True)
		assert small <= large <= 1.2 * small

	def test_rejects_coarse_time_grid(self, cobs_grid, cobs_corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, cobs_grid)
		with pytest.raises(DomainError):
			estimate_cobs(cfg, ObservationMask.full(cobs_grid), 1.0, math.inf, cobs_corpus, n_steps=8)

	@pytest.mark.slow
	def test_blow_up_fit_on_thick_set(self, cobs_grid, cobs_corpus):
		cfg = PropagatorConfig(SemigroupKind.GW, cobs_grid)
		mask = slab_mask(cobs_grid, 4.0, (0.0, 1.0))
		horizons = [0.25, 0.5, 1.0, 2.0]
		measured = [estimate_cobs(cfg, mask, T, math.inf, cobs_corpus, witnesses=True) for T in horizons]
		fit = fit_cobs_scaling(horizons, measured, ObsParams())
		assert fit.r2 >= 0.9
		assert fit.shape.C2 > 0


class TestCobsScaling:
	def test_form(self):
		assert cobs_form(2.0, CobsShape(3.0, 0.0, 0.0), ObsParams()) == 3.0
		assert cobs_form(2.0, CobsShape(3.0, 0.0, 0.0), ObsParams(r=1.0)) == 1.5
		assert cobs_form(1.0, CobsShape(1.0, 1.0, 1.0), ObsParams()) == pytest.approx(math.exp(2.0))

	@pytest.mark.parametrize("r", [math.inf, 2.0])
	def test_recovers_synthetic_shape(self, r):
		p = ObsParams(r=r)
		truth = CobsShape(2.0, 0.3, 0.1)
		Ts = [0.25, 0.5, 1.0, 2.0, 4.0]
		fit = fit_cobs_scaling(Ts, [cobs_form(T, truth, p) for T in Ts], p)
		assert fit.shape.C1 == pytest.approx(2.0, rel=1e-6)
		assert fit.shape.C2 == pytest.approx(0.3, rel=1e-6)
		assert fit.shape.C3 == pytest.approx(0.1, rel=1e-6)
		assert fit.r2 == pytest.approx(1.0)

	def test_order_of_points_does_not_matter(self):
		p = ObsParams()
		Ts = [0.25, 0.5, 1.0, 2.0, 4.0]
		measured = [9.0, 4.0, 2.5, 2.2, 2.4]
		a = fit_cobs_scaling(Ts, measured, p)
		b = fit_cobs_scaling(Ts[::-1], measured[::-1], p)
		assert a.shape.C1 == pytest.approx(b.shape.C1, rel=1e-9)
		assert a.shape.C2 == pytest.approx(b.shape.C2, rel=1e-9, abs=1e-12)
		assert a.shape.C3 == pytest.approx(b.shape.C3, rel=1e-9, abs=1e-12)

	def test_needs_four_horizons(self):
		with pytest.raises(DegenerateFitError):
			fit_cobs_scaling([1.0, 2.0, 3.0], [1.0, 1.0, 1.0], ObsParams())
