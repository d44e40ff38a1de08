"""Smooth cutoff, discrete Fourier transform and spectral projections.

Fourier convention: F f(xi) = integral of f(x) exp(-i x.xi) dx, realised as
h^d * DFT of the samples with the origin moved to index 0. Frequencies are
angular, xi_k = pi*k/L, stored in FFT order (numpy.fft.fftfreq layout).
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, DomainError, NyquistError
from .grid import GridSpec, SampledField, l1_norm

logger = logging.getLogger(__name__)

ALIASING_THRESHOLD = 1e-14

Multiplier = t.Union[t.Callable[[np.ndarray], np.ndarray], np.ndarray]


def _glue(x: np.ndarray) -> np.ndarray:
	"""g(x) = exp(-1/x) for x > 0, else 0."""
	out = np.zeros_like(x, dtype=float)
	pos = x > 0
	out[pos] = np.exp(-1.0 / x[pos])
	return out


def eta(r: float | np.ndarray) -> float | np.ndarray:
	"""Cutoff profile: 1 on [0, 1/2], 0 on [1, inf), C-infinity in between."""
	arr = np.asarray(r, dtype=float)
	if np.any(arr < 0) or np.any(np.isnan(arr)):
		raise DomainError("cutoff profile is defined for r >= 0 only")
	x = 2.0 * (1.0 - arr)
	gx = _glue(x)
	g1x = _glue(1.0 - x)
	with np.errstate(invalid="ignore", divide="ignore"):
		psi = np.where(gx + g1x > 0, gx / np.where(gx + g1x > 0, gx + g1x, 1.0), 0.0)
	out = np.where(arr <= 0.5, 1.0, np.where(arr >= 1.0, 0.0, psi))
	if np.ndim(r) == 0:
		return float(out)
	return out


def chi(lam: float) -> t.Callable[[np.ndarray], np.ndarray]:
	"""Radial multiplier chi_lam(xi) = eta(|xi|/lam); chi_0 is identically 0."""
	if lam < 0:
		raise DomainError(f"cutoff must be nonnegative, got {lam}")
	if lam == 0:
		return lambda xi: np.zeros_like(np.asarray(xi, dtype=float))
	return lambda xi: eta(np.asarray(xi, dtype=float) / lam)


@dataclass(frozen=True, eq=False)
class SpectrumField:
	grid: GridSpec
	coefficients: np.ndarray

	def __post_init__(self) -> None:
		coeffs = np.array(self.coefficients, dtype=complex, copy=True)
		if coeffs.size != self.grid.size:
			raise DomainError(f"spectrum has {coeffs.size} coefficients, grid expects {self.grid.size}")
		coeffs = coeffs.reshape(self.grid.shape)
		coeffs.setflags(write=False)
		object.__setattr__(self, "coefficients", coeffs)


@dataclass(frozen=True)
class Projection:
	lam: float
	profile: t.Callable[[np.ndarray], np.ndarray] = eta

	def __post_init__(self) -> None:
		if not self.lam > 0:
			raise DomainError(f"projection cutoff must be positive, got {self.lam}")

	def multiplier(self, xi: np.ndarray) -> np.ndarray:
		return self.profile(np.asarray(xi, dtype=float) / self.lam)


def frequency_grid(g: GridSpec) -> tuple[np.ndarray, ...]:
	axis = 2.0 * np.pi * np.fft.fftfreq(g.n_per_axis, d=g.spacing)
	return tuple(np.meshgrid(*([axis] * g.d), indexing="ij"))


def frequency_magnitude(g: GridSpec) -> np.ndarray:
	return np.sqrt(sum(k * k for k in frequency_grid(g)))


def forward_transform(f: SampledField) -> SpectrumField:
	g = f.grid
	coeffs = g.cell_volume * np.fft.fftn(np.fft.ifftshift(f.values))
	return SpectrumField(g, coeffs)


def inverse_transform(spectrum: SpectrumField, real: bool = False) -> SampledField:
	g = spectrum.grid
	values = np.fft.fftshift(np.fft.ifftn(spectrum.coefficients)) / g.cell_volume
	if real:
		values = values.real
	return SampledField(g, values)


def _sample_multiplier(g: GridSpec, mult: Multiplier) -> np.ndarray:
	if callable(mult):
		return np.asarray(mult(frequency_magnitude(g)))
	arr = np.asarray(mult)
	if arr.shape != g.shape:
		raise DomainError(f"multiplier shape {arr.shape} does not match grid {g.shape}")
	return arr


def spectral_multiply(f: SampledField, mult: Multiplier) -> SampledField:
	"""Apply a Fourier multiplier, keeping real fields real for real multipliers."""
	sampled = _sample_multiplier(f.grid, mult)
	spectrum = forward_transform(f)
	out = SpectrumField(f.grid, sampled * spectrum.coefficients)
	return inverse_transform(out, real=f.is_real and not np.iscomplexobj(sampled))


def check_nyquist(g: GridSpec, lam: float) -> None:
	if lam >= g.nyquist:
		raise NyquistError(lam, g.nyquist)


def apply_projection(p: Projection, f: SampledField) -> SampledField:
	"""P_lam f = F^-1(chi_lam F f)."""
	check_nyquist(f.grid, p.lam)
	return spectral_multiply(f, p.multiplier)


def nyquist_edge(g: GridSpec) -> np.ndarray:
	"""Mask of frequencies with some |k_j| = n/2."""
	n = g.n_per_axis
	edge = np.zeros(g.shape, dtype=bool)
	for axis in range(g.d):
		index = [slice(None)] * g.d
		index[axis] = n // 2
		edge[tuple(index)] = True
	return edge


def multiplier_l1(mult: Multiplier, g: GridSpec) -> float:
	"""Discrete L1 norm of F^-1 mult, the convolution kernel of the multiplier."""
	sampled = _sample_multiplier(g, mult)
	if not np.all(np.isfinite(sampled)):
		raise DomainError("multiplier must be bounded")
	edge_value = float(np.max(np.abs(sampled[nyquist_edge(g)])))
	if edge_value > ALIASING_THRESHOLD:
		raise AliasingError(edge_value)
	return l1_norm(inverse_transform(SpectrumField(g, sampled)))


def projection_norm(g: GridSpec, lam: float) -> float:
	"""||F^-1 chi_lam||_L1, the Young bound for ||P_lam|| on this grid."""
	check_nyquist(g, lam)
	return multiplier_l1(chi(lam), g)


def spectral_interpolate(f: SampledField, axes: t.Sequence[np.ndarray]) -> np.ndarray:
	"""Evaluate the trigonometric interpolant of f on the tensor grid of ``axes``.

	The Nyquist mode is taken as a cosine so that real samples interpolate to
	real values. Returns an array of shape (len(axes[0]), ..., len(axes[d-1])).
	"""
	g = f.grid
	if len(axes) != g.d:
		raise DomainError(f"expected {g.d} coordinate axes, got {len(axes)}")
	coeffs = forward_transform(f).coefficients / (2.0 * g.half_width) ** g.d
	freqs = 2.0 * np.pi * np.fft.fftfreq(g.n_per_axis, d=g.spacing)
	nyq = g.n_per_axis // 2
	phases = []
	for points in axes:
		points = np.asarray(points, dtype=float)
		phase = np.exp(1j * np.outer(freqs, points))
		phase[nyq] = np.cos(freqs[nyq] * points)
		phases.append(phase)
	if g.d == 1:
		values = coeffs @ phases[0]
	else:
		values = phases[0].T @ coeffs @ phases[1]
	if f.is_real:
		return values.real
	return values
