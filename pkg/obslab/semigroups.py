"""Gauss-Weierstrass and Ornstein-Uhlenbeck propagators on a sampled grid.

GW:  S_t f = k_t * f, k_t(x) = (4 pi t)^(-d/2) exp(-|x|^2 / (4t)); applied as
     the exact Fourier multiplier exp(-t |xi|^2). Kernel quadrature is kept
     as an oracle.
OU:  S_t f(x) = integral M_t(x, y) f(y) dy with the Mehler kernel
     M_t(x, y) = (2 pi sigma^2)^(-d/2) exp(-|e^-t x - y|^2 / (2 sigma^2)),
     sigma^2 = (1 - e^-2t) / 2; evaluated by truncated left-endpoint
     quadrature. Equivalently S_t f(x) = (k_s * f)(s x) with s = e^-t.
"""

from __future__ import annotations

import enum
import functools
import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, QuadratureTruncationError
from .grid import GridSpec, SampledField, sup_norm
from .spectral import spectral_interpolate, spectral_multiply

logger = logging.getLogger(__name__)

DECAY_TOLERANCE = 1e-12
# kernel mass outside 7 standard deviations is far below 1e-10
SAFE_STDDEVS = 7.0
DECAY_STDDEVS = 6.0


class SemigroupKind(str, enum.Enum):
	GW = "GW"
	OU = "OU"


@dataclass(frozen=True)
class PropagatorConfig:
	kind: SemigroupKind
	grid: GridSpec
	ou_quadrature_truncation: float | None = None

	def __post_init__(self) -> None:
		object.__setattr__(self, "kind", SemigroupKind(self.kind))
		if self.ou_quadrature_truncation is not None and not self.ou_quadrature_truncation > 0:
			raise DomainError(f"OU truncation radius must be positive, got {self.ou_quadrature_truncation}")

	@property
	def truncation(self) -> float:
		if self.ou_quadrature_truncation is None:
			return self.grid.half_width - self.grid.spacing
		return min(self.ou_quadrature_truncation, self.grid.half_width)


def _check_time(t_: float) -> None:
	if t_ < 0 or np.isnan(t_):
		raise DomainError(f"time must be nonnegative, got {t_}")


def ou_stddev(t_: float) -> float:
	return float(np.sqrt(-np.expm1(-2.0 * t_) / 2.0))


# Kernels


def gw_kernel(g: GridSpec, t_: float) -> SampledField:
	if not t_ > 0:
		raise DomainError(f"GW kernel needs t > 0, got {t_}")
	r2 = g.radius() ** 2
	return SampledField(g, (4.0 * np.pi * t_) ** (-g.d / 2.0) * np.exp(-r2 / (4.0 * t_)))


def gaussian_ks(g: GridSpec, s: float) -> SampledField:
	"""k_s with F k_s = exp(-(1 - s^2)|xi|^2 / 4), i.e. the GW kernel at (1 - s^2)/4."""
	if not 0 < s < 1:
		raise DomainError(f"s must lie in (0, 1), got {s}")
	return gw_kernel(g, (1.0 - s * s) / 4.0)


def mehler_kernel(x: np.ndarray, y: np.ndarray, t_: float) -> np.ndarray:
	"""One-dimensional Mehler kernel matrix M_t(x_p, y_q)."""
	if not t_ > 0:
		raise DomainError(f"Mehler kernel needs t > 0, got {t_}")
	sigma2 = ou_stddev(t_) ** 2
	diff = np.exp(-t_) * np.asarray(x, dtype=float)[:, None] - np.asarray(y, dtype=float)[None, :]
	return np.exp(-diff * diff / (2.0 * sigma2)) / np.sqrt(2.0 * np.pi * sigma2)


def gw_multiplier(t_: float) -> t.Callable[[np.ndarray], np.ndarray]:
	return lambda xi: np.exp(-t_ * np.asarray(xi, dtype=float) ** 2)


# Gauss-Weierstrass


@functools.lru_cache(maxsize=256)
def _warn_unresolved(nyquist: float, t_: float) -> None:
	edge = float(np.exp(-t_ * nyquist ** 2))
	if edge > 1e-14:
		logger.warning(f"GW multiplier at Nyquist is {edge:.3e} for t={t_}; kernel not resolved by the grid")


def gw_step(f: SampledField, t_: float) -> SampledField:
	_check_time(t_)
	if t_ == 0:
		return f
	_warn_unresolved(f.grid.nyquist, t_)
	return spectral_multiply(f, gw_multiplier(t_))


def _periodic_gaussian_matrix(g: GridSpec, t_: float) -> np.ndarray:
	axis = g.axis()
	period = 2.0 * g.half_width
	diff = axis[:, None] - axis[None, :]
	diff = (diff + g.half_width) % period - g.half_width
	k = np.zeros_like(diff)
	for image in (-1, 0, 1):
		shifted = diff + image * period
		k += np.exp(-shifted * shifted / (4.0 * t_))
	return k / np.sqrt(4.0 * np.pi * t_)


def gw_step_quadrature(f: SampledField, t_: float) -> SampledField:
	"""Circular convolution with the periodised k_t by direct quadrature."""
	_check_time(t_)
	if t_ == 0:
		return f
	g = f.grid
	k = g.spacing * _periodic_gaussian_matrix(g, t_)
	if g.d == 1:
		return f.with_values(k @ f.values)
	return f.with_values(k @ f.values @ k.T)


# Ornstein-Uhlenbeck


def safe_region(g: GridSpec, t_: float, truncation: float | None = None) -> np.ndarray:
	"""Grid points where the truncated Mehler quadrature holds the kernel mass."""
	radius = g.half_width - g.spacing if truncation is None else truncation
	limit = min(radius, g.half_width - g.spacing)
	if t_ == 0:
		return np.ones(g.shape, dtype=bool)
	reach = np.exp(-t_) * np.abs(g.axis()) + SAFE_STDDEVS * ou_stddev(t_)
	ok = reach <= limit
	mask = ok
	for _ in range(g.d - 1):
		mask = np.logical_and.outer(mask, ok)
	return mask


def _check_decay(f: SampledField, truncation: float, sigma: float) -> None:
	g = f.grid
	inner = truncation - DECAY_STDDEVS * sigma
	if inner <= 0:
		raise QuadratureTruncationError(f"truncation radius {truncation} below {DECAY_STDDEVS} standard deviations ({sigma:.4f})")
	coords = g.coordinates()
	outside = np.zeros(g.shape, dtype=bool)
	for c in coords:
		outside |= np.abs(c) > inner
	if not outside.any():
		return
	tail = float(np.max(np.abs(f.values[outside])))
	if tail > DECAY_TOLERANCE * max(sup_norm(f), 1e-300):
		raise QuadratureTruncationError(f"field reaches {tail:.3e} beyond radius {inner:.4f}")


def ou_evaluate(
	f: SampledField,
	t_: float,
	axes: t.Sequence[np.ndarray],
	*,
	truncation: float | None = None,
	require_decay: bool = True,
) -> np.ndarray:
	"""Mehler quadrature of S_t f on the tensor grid of ``axes``."""
	_check_time(t_)
	g = f.grid
	if len(axes) != g.d:
		raise DomainError(f"expected {g.d} coordinate axes, got {len(axes)}")
	radius = g.half_width - g.spacing if truncation is None else min(truncation, g.half_width)
	sigma = ou_stddev(t_)
	if require_decay:
		_check_decay(f, radius, sigma)
	y = g.axis()
	keep = np.abs(y) <= radius
	mats = [g.spacing * mehler_kernel(np.asarray(a, dtype=float), y[keep], t_) for a in axes]
	values = f.values
	if g.d == 1:
		return mats[0] @ values[keep]
	return mats[0] @ values[np.ix_(keep, keep)] @ mats[1].T


def ou_step(
	f: SampledField,
	t_: float,
	*,
	truncation: float | None = None,
	require_decay: bool = True,
) -> SampledField:
	_check_time(t_)
	if t_ == 0:
		return f
	axes = [f.grid.axis()] * f.grid.d
	return f.with_values(ou_evaluate(f, t_, axes, truncation=truncation, require_decay=require_decay))


def ou_step_scaling(f: SampledField, t_: float) -> SampledField:
	"""S_t f(x) = (k_s * f)(s x), s = e^-t, with k_s * f computed spectrally."""
	_check_time(t_)
	if t_ == 0:
		return f
	s = float(np.exp(-t_))
	smoothed = spectral_multiply(f, gw_multiplier((1.0 - s * s) / 4.0))
	axes = [s * f.grid.axis()] * f.grid.d
	return f.with_values(spectral_interpolate(smoothed, axes))


# Dispatch


def propagate(cfg: PropagatorConfig, f: SampledField, t_: float, *, require_decay: bool = True) -> SampledField:
	if f.grid != cfg.grid:
		raise DomainError("field and propagator live on different grids")
	if cfg.kind is SemigroupKind.GW:
		return gw_step(f, t_)
	return ou_step(f, t_, truncation=cfg.truncation, require_decay=require_decay)


def orbit(
	f: SampledField,
	times: t.Sequence[float],
	cfg: PropagatorConfig,
	*,
	require_decay: bool = True,
) -> list[SampledField]:
	"""S_t f for each t in ``times``, each evaluated directly from f."""
	times = [float(x) for x in times]
	if any(x < 0 for x in times):
		raise DomainError("orbit times must be nonnegative")
	if any(b < a for a, b in zip(times, times[1:])):
		raise DomainError("orbit times must be sorted")
	if cfg.kind is SemigroupKind.OU and times:
		sigma = ou_stddev(times[-1])
		if cfg.truncation < DECAY_STDDEVS * sigma:
			raise QuadratureTruncationError(
				f"truncation {cfg.truncation} below {DECAY_STDDEVS} standard deviations at t={times[-1]}"
			)
	return [propagate(cfg, f, x, require_decay=require_decay) for x in times]
