"""Empirical uncertainty, dissipation and observability constants.

Every measured constant is a maximum over a finite seeded corpus of test
functions, hence a lower bound of the true supremum that can only grow when
the corpus grows. Fits are ordinary least squares in log space; one-sided
bounds take the fitted slope, lift the intercept to the envelope of the
training cells and inflate the prefactor by a margin (10% by default).
"""

from __future__ import annotations

import enum
import logging
import math
import typing as t
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .errors import (
	DegenerateFitError,
	DomainError,
	ObservationAnnihilatesError,
	SamplingError,
)
from .grid import (
	GridSpec,
	ObservationMask,
	SampledField,
	check_thickness,
	deepest_points,
	impulse,
	restrict,
	sup_norm,
)
from .parallel import parallel_map
from .semigroups import (
	PropagatorConfig,
	SemigroupKind,
	gw_multiplier,
	orbit,
	ou_step,
)
from .spectral import (
	Projection,
	SpectrumField,
	apply_projection,
	check_nyquist,
	chi,
	frequency_magnitude,
	inverse_transform,
	multiplier_l1,
	spectral_multiply,
)

logger = logging.getLogger(__name__)

FLOOR = 1e-14
MAX_REJECTIONS = 100
DEFAULT_MARGIN = 0.1


@dataclass(frozen=True)
class ObsParams:
	gamma1: float = 1.0
	gamma2: float = 2.0
	gamma3: float = 1.0
	d0: float = 1.0
	d1: float = 1.0
	d2: float = 1.0
	d3: float = 1.0
	T: float = 1.0
	r: float = math.inf
	lambda_star: float = 0.0

	def __post_init__(self) -> None:
		if self.lambda_star < 0:
			raise DomainError(f"lambda_star must be nonnegative, got {self.lambda_star}")
		if min(self.gamma1, self.gamma2, self.gamma3) <= 0:
			raise DomainError("gamma1, gamma2, gamma3 must be positive")
		if not self.gamma1 < self.gamma2:
			raise DomainError(f"gamma1 must be below gamma2, got {self.gamma1} >= {self.gamma2}")
		if min(self.d0, self.d1, self.d3) <= 0:
			raise DomainError("d0, d1, d3 must be positive")
		if self.d2 < 1:
			raise DomainError(f"d2 must be at least 1, got {self.d2}")
		if not self.T > 0:
			raise DomainError(f"T must be positive, got {self.T}")
		if not self.r >= 1:
			raise DomainError(f"r must lie in [1, inf], got {self.r}")

	@property
	def kappa(self) -> float:
		"""Blow-up exponent gamma1*gamma3/(gamma2 - gamma1)."""
		return self.gamma1 * self.gamma3 / (self.gamma2 - self.gamma1)


@dataclass(frozen=True)
class CobsShape:
	C1: float
	C2: float
	C3: float

	def __post_init__(self) -> None:
		for name in ("C1", "C2", "C3"):
			value = getattr(self, name)
			if not math.isfinite(value) or value < 0:
				raise DomainError(f"{name} must be finite and nonnegative, got {value}")


@dataclass(frozen=True)
class CobsFit:
	shape: CobsShape
	r2: float


@dataclass
class FitReport:
	params: dict[str, t.Any]
	cells: list[dict[str, t.Any]]
	fitted: dict[str, float]
	r2: float
	violations: int = 0

	def to_json(self) -> dict[str, t.Any]:
		return {
			"params": self.params,
			"cells": self.cells,
			"fitted": self.fitted,
			"r2": self.r2,
			"violations": self.violations,
		}


# Fitting helpers


def r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
	y = np.asarray(y, dtype=float)
	ss_res = float(np.sum((y - fitted) ** 2))
	ss_tot = float(np.sum((y - y.mean()) ** 2))
	if ss_tot == 0.0:
		return 1.0 if ss_res <= 1e-24 else -math.inf
	return 1.0 - ss_res / ss_tot


def fit_log_linear(x: t.Sequence[float], logv: t.Sequence[float]) -> tuple[float, float, float]:
	"""OLS of logv = a + b*x; returns (a, b, R^2)."""
	x = np.asarray(x, dtype=float)
	logv = np.asarray(logv, dtype=float)
	if np.unique(x).size < 2:
		raise DegenerateFitError(f"need at least 2 distinct abscissae, got {np.unique(x).size}")
	design = np.column_stack([np.ones_like(x), x])
	coef, *_ = np.linalg.lstsq(design, logv, rcond=None)
	return float(coef[0]), float(coef[1]), r_squared(logv, design @ coef)


def certify_one_sided(
	x: t.Sequence[float],
	logv: t.Sequence[float],
	slope: float,
	margin: float = DEFAULT_MARGIN,
) -> tuple[float, float]:
	"""(d2, d3) with v <= d2*exp(-d3*x) on every training cell.

	d3 is minus the fitted slope; d2 is the envelope prefactor inflated by
	``margin`` and never below 1.
	"""
	d3 = -slope
	if not d3 > 0:
		raise DegenerateFitError(f"decay rate must be positive, fitted slope {slope}")
	x = np.asarray(x, dtype=float)
	logv = np.asarray(logv, dtype=float)
	intercept = float(np.max(logv + d3 * x))
	d2 = max(1.0, math.exp(intercept) * (1.0 + margin))
	return d2, d3


# Test corpus


class CorpusKind(str, enum.Enum):
	BAND_LIMITED = "band_limited"
	GAUSSIAN_BUMPS = "gaussian_bumps"
	MIXED = "mixed"


def _band_limited(rng: np.random.Generator, g: GridSpec, lam_max: float) -> SampledField:
	noise = SampledField(g, rng.standard_normal(g.shape))
	return spectral_multiply(noise, chi(lam_max))


def _bump(
	rng: np.random.Generator,
	g: GridSpec,
	decay_radius: float,
	widths: tuple[float, float],
) -> SampledField:
	coords = g.coordinates()
	outside = np.zeros(g.shape, dtype=bool)
	for c in coords:
		outside |= np.abs(c) > decay_radius
	for _ in range(MAX_REJECTIONS):
		centre = rng.uniform(-decay_radius / 2.0, decay_radius / 2.0, size=g.d)
		width = rng.uniform(*widths)
		r2 = sum((c - x0) ** 2 for c, x0 in zip(coords, centre))
		values = np.exp(-r2 / (2.0 * width * width))
		if not outside.any() or np.max(values[outside]) < 1e-12:
			return SampledField(g, values)
	raise SamplingError(f"no bump decayed below 1e-12 outside radius {decay_radius} after {MAX_REJECTIONS} draws")


def generate_test_functions(
	kind: CorpusKind | str,
	count: int,
	seed: int,
	g: GridSpec,
	*,
	lam_max: float | None = None,
	decay_radius: float | None = None,
	widths: tuple[float, float] = (0.25, 0.6),
) -> list[SampledField]:
	"""Seeded corpus, each member normalised to sup-norm 1."""
	kind = CorpusKind(kind)
	if count < 1:
		raise DomainError(f"corpus size must be at least 1, got {count}")
	if kind is not CorpusKind.GAUSSIAN_BUMPS:
		if lam_max is None or not lam_max > 0:
			raise DomainError(f"{kind.value} corpus needs a positive lam_max")
		check_nyquist(g, lam_max)
	radius = g.half_width / 2.0 if decay_radius is None else decay_radius
	rng = np.random.default_rng(seed)
	fns = []
	for i in range(count):
		use_bump = kind is CorpusKind.GAUSSIAN_BUMPS or (kind is CorpusKind.MIXED and i % 2 == 1)
		f = _bump(rng, g, radius, widths) if use_bump else _band_limited(rng, g, lam_max)
		fns.append(f.scaled(1.0 / sup_norm(f)))
	return fns


# Uncertainty principle


def up_witnesses(mask: ObservationMask, limit: int = 16) -> list[SampledField]:
	return [impulse(mask.grid, int(k)) for k in deepest_points(mask, limit)]


def _up_ratio(lam: float, mask: ObservationMask, fns: t.Sequence[SampledField]) -> float:
	p = Projection(lam)
	best = 0.0
	for f in fns:
		pf = apply_projection(p, f)
		num = sup_norm(pf)
		if num == 0.0:
			continue
		den = sup_norm(restrict(pf, mask))
		if den <= FLOOR * num:
			raise ObservationAnnihilatesError(f"lambda={lam}")
		best = max(best, num / den)
	if best == 0.0:
		raise DegenerateFitError(f"every test function is annihilated by P_lambda at lambda={lam}")
	return best


def measure_up(
	mask: ObservationMask,
	lambdas: t.Sequence[float],
	fns: t.Sequence[SampledField],
	*,
	windows: t.Sequence[float] | None = None,
	rho: float | None = None,
	witnesses: bool = False,
	workers: int = 1,
	progress: bool = False,
) -> FitReport:
	"""Fit log(sup ||P f|| / ||C P f||) = log d0 + d1*lambda.

	d0 is pinned to 1, the lambda -> 0 limit of the ratio, and d1 is the
	least-squares rate through the origin. d1 is then a positively weighted
	sum of log ratios, so it cannot decrease when the ratios grow (smaller
	observation set, larger corpus). The free affine fit is reported next to
	it as affine_d0, affine_d1 and R^2.
	"""
	if windows is not None and rho is not None:
		report = check_thickness(mask, windows, rho)
		if not report.thick:
			raise DomainError(f"observation set is not thick: min density {report.min_density:.4f} < {rho}")
	lambdas = sorted(float(x) for x in lambdas)
	for lam in lambdas:
		if not lam > 0:
			raise DomainError(f"cutoffs must be positive, got {lam}")
		check_nyquist(mask.grid, lam)
	corpus = list(fns) + (up_witnesses(mask) if witnesses else [])
	ratios = parallel_map(lambda lam: _up_ratio(lam, mask, corpus), lambdas, workers, "uncertainty", progress)
	logs = np.log(ratios)
	a, b, r2 = fit_log_linear(lambdas, logs)
	x = np.asarray(lambdas)
	d1 = float(x @ logs / (x @ x))
	cells = [
		{"lambda": lam, "ratio": ratio, "log_ratio": float(lr), "fitted_log_ratio": a + b * lam}
		for lam, ratio, lr in zip(lambdas, ratios, logs)
	]
	logger.info(f"uncertainty fit: d1={d1:.4g} affine d0={math.exp(a):.4g} d1={b:.4g} R2={r2:.4f}")
	return FitReport(
		params={"lambdas": lambdas, "corpus_size": len(corpus), "witnesses": witnesses},
		cells=cells,
		fitted={"d0": 1.0, "d1": d1, "affine_d0": math.exp(a), "affine_d1": b},
		r2=r2,
	)


# Dissipation


def diss_multiplier(lam: float, t_: float) -> t.Callable[[np.ndarray], np.ndarray]:
	"""(1 - chi_lam) exp(-t|xi|^2), the symbol of (I - P_lam) S_t for GW."""
	cut = chi(lam)
	decay = gw_multiplier(t_)
	return lambda xi: (1.0 - cut(xi)) * decay(xi)


def diss_operator_norm(g: GridSpec, lam: float, t_: float) -> float:
	check_nyquist(g, lam)
	return multiplier_l1(diss_multiplier(lam, t_), g)


def young_extremal_witness(g: GridSpec, mult: t.Callable[[np.ndarray], np.ndarray]) -> SampledField:
	"""sign(K(-x)) for the kernel K of ``mult``; (K * w)(0) = ||K||_L1."""
	spectrum = SpectrumField(g, mult(frequency_magnitude(g)))
	kernel = inverse_transform(spectrum, real=True).values
	axes = tuple(range(g.d))
	reflected = np.roll(np.flip(kernel, axis=axes), 1, axis=axes)
	return SampledField(g, np.sign(reflected))


def _diss_ratio(
	cfg: PropagatorConfig,
	lam: float,
	t_: float,
	fns: t.Sequence[SampledField],
	witnesses: bool,
	require_decay: bool,
) -> float:
	best = 0.0
	if cfg.kind is SemigroupKind.GW:
		mult = diss_multiplier(lam, t_)
		corpus = list(fns) + ([young_extremal_witness(cfg.grid, mult)] if witnesses else [])
		for f in corpus:
			norm = sup_norm(f)
			if norm > 0:
				best = max(best, sup_norm(spectral_multiply(f, mult)) / norm)
		return best
	cut = chi(lam)
	high = lambda xi: 1.0 - cut(xi)
	for f in fns:
		norm = sup_norm(f)
		if norm > 0:
			evolved = ou_step(f, t_, truncation=cfg.truncation, require_decay=require_decay)
			best = max(best, sup_norm(spectral_multiply(evolved, high)) / norm)
	return best


def measure_diss(
	cfg: PropagatorConfig,
	lambdas: t.Sequence[float],
	times: t.Sequence[float],
	fns: t.Sequence[SampledField],
	*,
	held_out_lambdas: t.Sequence[float] = (),
	held_out_times: t.Sequence[float] = (),
	witnesses: bool = False,
	margin: float = DEFAULT_MARGIN,
	horizon: float | None = None,
	require_decay: bool = True,
	workers: int = 1,
	progress: bool = False,
) -> FitReport:
	"""Fit log(sup ||(I - P_lam) S_t f|| / ||f||) = log d2 - d3*lambda^2*t.

	Times must lie in (0, horizon/2] when a horizon is given. Cells below the
	double precision floor are excluded from the fit. The 10%-inflated
	one-sided bound is then checked on the held-out cells.
	"""
	g = cfg.grid
	if horizon is not None and not horizon > 0:
		raise DomainError(f"horizon must be positive, got {horizon}")
	train = [(float(lam), float(x)) for lam in sorted(lambdas) for x in sorted(times)]
	held = [(float(lam), float(x)) for lam in sorted(held_out_lambdas) for x in sorted(held_out_times)]
	for lam, x in train + held:
		check_nyquist(g, lam)
		if not x > 0:
			raise DomainError(f"dissipation times must be positive, got {x}")
		if horizon is not None and x > horizon / 2.0:
			raise DomainError(f"dissipation time {x} exceeds half the horizon {horizon}")

	def cell(pair: tuple[float, float]) -> float:
		return _diss_ratio(cfg, pair[0], pair[1], fns, witnesses, require_decay)

	ratios = parallel_map(cell, train + held, workers, "dissipation", progress)
	train_ratios = ratios[: len(train)]
	held_ratios = ratios[len(train):]

	kept = [i for i, v in enumerate(train_ratios) if v >= FLOOR]
	excluded = len(train) - len(kept)
	if excluded:
		logger.warning(f"{excluded} dissipation cells below {FLOOR:g} excluded from the fit")
	x_fit = [train[i][0] ** 2 * train[i][1] for i in kept]
	log_fit = [math.log(train_ratios[i]) for i in kept]
	a, b, r2 = fit_log_linear(x_fit, log_fit)
	d2, d3 = certify_one_sided(x_fit, log_fit, b, margin)

	cells = []
	violations = 0
	for (lam, x), ratio, is_held in [(c, v, False) for c, v in zip(train, train_ratios)] + [
		(c, v, True) for c, v in zip(held, held_ratios)
	]:
		bound = d2 * math.exp(-d3 * lam * lam * x)
		below_floor = ratio < FLOOR
		violated = bool(not below_floor and ratio > bound)
		if violated and is_held:
			violations += 1
		cells.append(
			{
				"lambda": lam,
				"t": x,
				"ratio": ratio,
				"bound": bound,
				"violated": violated,
				"excluded": bool(below_floor and not is_held),
				"held_out": is_held,
			}
		)
	logger.info(f"dissipation fit ({cfg.kind.value}): d2={d2:.4g} d3={d3:.4g} R2={r2:.4f} violations={violations}")
	return FitReport(
		params={
			"kind": cfg.kind.value,
			"lambdas": sorted(float(x) for x in lambdas),
			"times": sorted(float(x) for x in times),
			"held_out_lambdas": sorted(float(x) for x in held_out_lambdas),
			"held_out_times": sorted(float(x) for x in held_out_times),
			"margin": margin,
			"horizon": horizon,
			"witnesses": witnesses,
			"excluded": excluded,
		},
		cells=cells,
		fitted={"d2": d2, "d3": d3, "log_d2_ls": a, "slope_ls": b},
		r2=r2,
		violations=violations,
	)


# Lemma on (1 - chi_lam) h_s


def lemma_multiplier(lam: float, s: float) -> t.Callable[[np.ndarray], np.ndarray]:
	"""(1 - chi_lam) h_s with h_s(xi) = exp(-(1 - s^2)|xi|^2 / 4)."""
	if not 0 < s < 1:
		raise DomainError(f"s must lie in (0, 1), got {s}")
	return diss_multiplier(lam, (1.0 - s * s) / 4.0)


def lemma_value(g: GridSpec, lam: float, s: float) -> float:
	if lam > 0:
		check_nyquist(g, lam)
	return multiplier_l1(lemma_multiplier(lam, s), g)


def measure_lemma_l1(
	g: GridSpec,
	lambdas: t.Sequence[float],
	s_values: t.Sequence[float],
	*,
	held_out_lambdas: t.Sequence[float] = (),
	held_out_s: t.Sequence[float] = (),
	margin: float = DEFAULT_MARGIN,
	workers: int = 1,
	progress: bool = False,
) -> FitReport:
	"""Fit log ||F^-1((1 - chi_lam) h_s)||_L1 = log d2 - d3*lambda^2*(1 - s^2)."""
	train = [(float(lam), float(s)) for lam in sorted(lambdas) for s in sorted(s_values)]
	held = [(float(lam), float(s)) for lam in sorted(held_out_lambdas) for s in sorted(held_out_s)]
	values = parallel_map(lambda c: lemma_value(g, c[0], c[1]), train + held, workers, "lemma", progress)
	train_values = values[: len(train)]
	held_values = values[len(train):]

	kept = [i for i, v in enumerate(train_values) if v >= FLOOR]
	x_fit = [train[i][0] ** 2 * (1.0 - train[i][1] ** 2) for i in kept]
	log_fit = [math.log(train_values[i]) for i in kept]
	a, b, r2 = fit_log_linear(x_fit, log_fit)
	d2, d3 = certify_one_sided(x_fit, log_fit, b, margin)

	cells = []
	violations = 0
	rows = [(c, v, False) for c, v in zip(train, train_values)] + [(c, v, True) for c, v in zip(held, held_values)]
	for (lam, s), value, is_held in rows:
		bound = d2 * math.exp(-d3 * lam * lam * (1.0 - s * s))
		violated = bool(value >= FLOOR and value > bound)
		if violated and is_held:
			violations += 1
		cells.append({"lambda": lam, "s": s, "value": value, "bound": bound, "violated": violated, "held_out": is_held})
	logger.info(f"lemma fit: d2={d2:.4g} d3={d3:.4g} R2={r2:.4f} violations={violations}")
	return FitReport(
		params={
			"lambdas": sorted(float(x) for x in lambdas),
			"s_values": sorted(float(x) for x in s_values),
			"held_out_lambdas": sorted(float(x) for x in held_out_lambdas),
			"held_out_s": sorted(float(x) for x in held_out_s),
			"margin": margin,
		},
		cells=cells,
		fitted={
			"d2": d2,
			"d3": d3,
			"log_d2_ls": a,
			"slope_ls": b,
			"x_min": float(min(x_fit)),
			"x_max": float(max(x_fit)),
		},
		r2=r2,
		violations=violations,
	)


def ou_diss_transfer_bound(lemma_fit: FitReport, lam: float, t_: float) -> float:
	"""d2*exp(-d3*lam^2*(e^2t - 1)), the OU dissipation bound from the lemma constants.

	With s = e^-t, (I - P_lam) S_t f is the dilation by s of
	(I - P_{lam/s})(k_s * f), so the lemma applies at (lam/s, s).
	"""
	d2 = lemma_fit.fitted["d2"]
	d3 = lemma_fit.fitted["d3"]
	return d2 * math.exp(-d3 * lam * lam * math.expm1(2.0 * t_))


def ou_transfer_violations(diss: FitReport, lemma_fit: FitReport) -> tuple[int, int]:
	"""(violations, checked) of measured OU ratios against the transferred bound.

	Only cells whose lemma abscissa lam^2*(e^2t - 1) lies in the lemma's fitted
	range are checked.
	"""
	x_min = lemma_fit.fitted["x_min"]
	x_max = lemma_fit.fitted["x_max"]
	checked = 0
	violations = 0
	for cell in diss.cells:
		x = cell["lambda"] ** 2 * math.expm1(2.0 * cell["t"])
		if not x_min <= x <= x_max:
			continue
		checked += 1
		if cell["ratio"] > ou_diss_transfer_bound(lemma_fit, cell["lambda"], cell["t"]):
			violations += 1
	return violations, checked


# Final-state observability


def time_grid(T: float, n_steps: int) -> np.ndarray:
	if not T > 0:
		raise DomainError(f"horizon must be positive, got {T}")
	if n_steps < 32:
		raise DomainError(f"time grid needs at least 32 steps, got {n_steps}")
	return T * np.arange(n_steps) / n_steps


def observed_time_norm(observed: t.Sequence[float], dt: float, r: float) -> float:
	"""(dt * sum ||C S_ti f||^r)^(1/r), or the max for r = inf."""
	observed = np.asarray(observed, dtype=float)
	if math.isinf(r):
		return float(observed.max())
	return float((dt * np.sum(observed ** r)) ** (1.0 / r))


def cobs_ratios(
	cfg: PropagatorConfig,
	mask: ObservationMask,
	T: float,
	r: float,
	fns: t.Sequence[SampledField],
	*,
	n_steps: int = 32,
	witnesses: bool = False,
	require_decay: bool = True,
	workers: int = 1,
	progress: bool = False,
) -> list[float]:
	"""||S_T f|| / time-norm of the observed orbit, per test function."""
	if not r >= 1:
		raise DomainError(f"r must lie in [1, inf], got {r}")
	times = time_grid(T, n_steps)
	dt = T / n_steps
	corpus = list(fns)
	if witnesses and cfg.kind is SemigroupKind.GW:
		corpus += up_witnesses(mask)

	def ratio(f: SampledField) -> float:
		states = orbit(f, list(times) + [T], cfg, require_decay=require_decay)
		final = sup_norm(states[-1])
		observed = [sup_norm(restrict(s, mask)) for s in states[:-1]]
		denominator = observed_time_norm(observed, dt, r)
		if denominator == 0.0 or denominator <= FLOOR * final:
			raise ObservationAnnihilatesError(f"T={T}")
		return final / denominator

	return parallel_map(ratio, corpus, workers, f"observability T={T}", progress)


def estimate_cobs(
	cfg: PropagatorConfig,
	mask: ObservationMask,
	T: float,
	r: float,
	fns: t.Sequence[SampledField],
	**kwargs: t.Any,
) -> float:
	return max(cobs_ratios(cfg, mask, T, r, fns, **kwargs))


def cobs_form(T: float, shape: CobsShape, p: ObsParams) -> float:
	"""C1/T^(1/r) * exp(C2/T^kappa + C3*T), with T^(1/r) = 1 for r = inf."""
	if not T > 0:
		raise DomainError(f"horizon must be positive, got {T}")
	prefactor = shape.C1 if math.isinf(p.r) else shape.C1 / T ** (1.0 / p.r)
	return prefactor * math.exp(shape.C2 / T ** p.kappa + shape.C3 * T)


def fit_cobs_scaling(Ts: t.Sequence[float], measured: t.Sequence[float], p: ObsParams) -> CobsFit:
	"""Bounded least squares of log C + (1/r) log T on (1, T^-kappa, T)."""
	Ts = np.asarray(Ts, dtype=float)
	measured = np.asarray(measured, dtype=float)
	if Ts.shape != measured.shape:
		raise DomainError("Ts and measured must have the same length")
	if np.unique(Ts).size < 4:
		raise DegenerateFitError(f"need at least 4 distinct horizons, got {np.unique(Ts).size}")
	if np.any(Ts <= 0) or np.any(measured <= 0):
		raise DomainError("horizons and measured constants must be positive")
	inv_r = 0.0 if math.isinf(p.r) else 1.0 / p.r
	y = np.log(measured) + inv_r * np.log(Ts)
	design = np.column_stack([np.ones_like(Ts), Ts ** (-p.kappa), Ts])
	if np.linalg.matrix_rank(design) < 3:
		raise DegenerateFitError("design matrix is rank deficient")
	result = lsq_linear(design, y, bounds=([-np.inf, 0.0, 0.0], [np.inf, np.inf, np.inf]), method="bvls")
	log_c1, c2, c3 = (float(v) for v in result.x)
	shape = CobsShape(C1=math.exp(log_c1), C2=max(c2, 0.0), C3=max(c3, 0.0))
	return CobsFit(shape=shape, r2=r_squared(y, design @ result.x))
