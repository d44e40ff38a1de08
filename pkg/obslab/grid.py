"""Uniform periodic grids, sampled fields, norms and observation sets.

The continuum space of bounded continuous functions on R^d is represented by
samples on the torus [-L, L)^d with n points per axis (d in {1, 2}). The sup
norm becomes a grid maximum, the L1 norm a left-endpoint Riemann sum, and an
observation set Omega a boolean mask on which the restriction operator
C f = f|_Omega is realised.

Serialization:
 - CSV: one row per grid point, coordinate columns x0[, x1] then value
 - binary: little-endian int64 d, int64 n, float64 L, then float64 values
   in row-major order (real fields only)
"""

from __future__ import annotations

import csv
import logging
import struct
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DomainError, EmptyObservationSetError

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<qqd")


@dataclass(frozen=True)
class GridSpec:
	d: int
	half_width: float
	n_per_axis: int

	def __post_init__(self) -> None:
		if self.d not in (1, 2):
			raise DomainError(f"grid dimension must be 1 or 2, got {self.d}")
		if not self.half_width > 0:
			raise DomainError(f"half_width must be positive, got {self.half_width}")
		if self.n_per_axis < 8 or self.n_per_axis % 2:
			raise DomainError(f"n_per_axis must be an even integer >= 8, got {self.n_per_axis}")

	@property
	def spacing(self) -> float:
		return 2.0 * self.half_width / self.n_per_axis

	@property
	def shape(self) -> tuple[int, ...]:
		return (self.n_per_axis,) * self.d

	@property
	def size(self) -> int:
		return self.n_per_axis ** self.d

	@property
	def cell_volume(self) -> float:
		return self.spacing ** self.d

	@property
	def nyquist(self) -> float:
		"""Largest angular frequency resolved on the grid, pi/h."""
		return np.pi / self.spacing

	def axis(self) -> np.ndarray:
		"""Coordinates -L + k*h, k = 0..n-1; the origin sits at index n/2."""
		return -self.half_width + self.spacing * np.arange(self.n_per_axis)

	def coordinates(self) -> tuple[np.ndarray, ...]:
		axis = self.axis()
		return tuple(np.meshgrid(*([axis] * self.d), indexing="ij"))

	def radius(self) -> np.ndarray:
		return np.sqrt(sum(c * c for c in self.coordinates()))

	def origin_index(self) -> tuple[int, ...]:
		return (self.n_per_axis // 2,) * self.d


@dataclass(frozen=True, eq=False)
class SampledField:
	grid: GridSpec
	values: np.ndarray

	def __post_init__(self) -> None:
		values = np.array(self.values, copy=True)
		if values.size != self.grid.size:
			raise DomainError(f"field has {values.size} values, grid expects {self.grid.size}")
		values = values.reshape(self.grid.shape)
		if not np.all(np.isfinite(values)):
			raise DomainError("field values must be finite")
		values.setflags(write=False)
		object.__setattr__(self, "values", values)

	@classmethod
	def from_function(cls, grid: GridSpec, fn: t.Callable[..., np.ndarray]) -> "SampledField":
		"""Sample ``fn(*coordinates)`` on the grid."""
		return cls(grid, fn(*grid.coordinates()))

	@classmethod
	def zeros(cls, grid: GridSpec) -> "SampledField":
		return cls(grid, np.zeros(grid.shape))

	@property
	def is_real(self) -> bool:
		return not np.iscomplexobj(self.values)

	def with_values(self, values: np.ndarray) -> "SampledField":
		return SampledField(self.grid, values)

	def scaled(self, factor: complex) -> "SampledField":
		return SampledField(self.grid, factor * self.values)


@dataclass(frozen=True, eq=False)
class ObservationMask:
	grid: GridSpec
	indicator: np.ndarray

	def __post_init__(self) -> None:
		indicator = np.array(self.indicator, dtype=bool, copy=True)
		if indicator.size != self.grid.size:
			raise DomainError(f"mask has {indicator.size} entries, grid expects {self.grid.size}")
		indicator = indicator.reshape(self.grid.shape)
		if not indicator.any():
			raise EmptyObservationSetError()
		indicator.setflags(write=False)
		object.__setattr__(self, "indicator", indicator)

	@classmethod
	def full(cls, grid: GridSpec) -> "ObservationMask":
		return cls(grid, np.ones(grid.shape, dtype=bool))

	@property
	def covered_fraction(self) -> float:
		return float(self.indicator.mean())


@dataclass(frozen=True, eq=False)
class RestrictedField:
	"""A field viewed on Omega only; ``values`` holds the masked-in samples."""

	grid: GridSpec
	values: np.ndarray
	mask: ObservationMask


# Thick set geometries


@dataclass(frozen=True)
class FullSpace:
	"""Omega = R^d."""


@dataclass(frozen=True)
class PeriodicSlabs:
	"""Product of per-axis periodic slabs.

	On axis j a point is covered when ``(x_j - filled[j][0]) mod period[j]``
	is below ``filled[j][1] - filled[j][0]``.
	"""

	period: tuple[float, ...]
	filled: tuple[tuple[float, float], ...]

	def __post_init__(self) -> None:
		if len(self.period) != len(self.filled):
			raise DomainError("period and filled must have one entry per axis")
		for p, (a, b) in zip(self.period, self.filled):
			if not p > 0:
				raise DomainError(f"slab period must be positive, got {p}")
			if not 0 < b - a <= p:
				raise DomainError(f"filled interval [{a}, {b}) must be non-empty and fit in the period {p}")

	@property
	def density(self) -> float:
		return float(np.prod([(b - a) / p for p, (a, b) in zip(self.period, self.filled)]))


@dataclass(frozen=True, eq=False)
class ExplicitMask:
	indicator: np.ndarray


Geometry = t.Union[FullSpace, PeriodicSlabs, ExplicitMask]


@dataclass(frozen=True, eq=False)
class ThickSetSpec:
	windows: tuple[float, ...]
	density: float
	geometry: Geometry = field(default_factory=FullSpace)

	def __post_init__(self) -> None:
		if not 0 < self.density <= 1:
			raise DomainError(f"density must lie in (0, 1], got {self.density}")
		if not self.windows or any(not w > 0 for w in self.windows):
			raise DomainError(f"window lengths must be positive, got {self.windows}")


@dataclass(frozen=True)
class ThicknessReport:
	thick: bool
	min_density: float
	slack: float
	window_points: tuple[int, ...]


# Norms


def sup_norm(f: SampledField | RestrictedField) -> float:
	if f.values.size == 0:
		return 0.0
	return float(np.max(np.abs(f.values)))


def l1_norm(f: SampledField | RestrictedField) -> float:
	return float(f.grid.cell_volume * np.sum(np.abs(f.values)))


def restrict(f: SampledField, m: ObservationMask) -> RestrictedField:
	"""Restriction operator C f = f|_Omega."""
	if f.grid != m.grid:
		raise DomainError("field and mask live on different grids")
	if not m.indicator.any():
		raise EmptyObservationSetError()
	return RestrictedField(f.grid, f.values[m.indicator], m)


# Observation sets


def make_mask(spec: ThickSetSpec, g: GridSpec) -> ObservationMask:
	if len(spec.windows) != g.d:
		raise DomainError(f"thick set has {len(spec.windows)} window lengths for a {g.d}-d grid")
	geometry = spec.geometry
	if isinstance(geometry, FullSpace):
		indicator = np.ones(g.shape, dtype=bool)
	elif isinstance(geometry, PeriodicSlabs):
		if len(geometry.period) != g.d:
			raise DomainError(f"slab geometry has {len(geometry.period)} axes for a {g.d}-d grid")
		indicator = np.ones(g.shape, dtype=bool)
		# nudge by a fraction of a cell so points on a slab edge land on the closed side
		nudge = 1e-9 * g.spacing
		for coord, p, (a, b) in zip(g.coordinates(), geometry.period, geometry.filled):
			indicator &= np.mod(coord - a + nudge, p) < (b - a)
	elif isinstance(geometry, ExplicitMask):
		indicator = np.asarray(geometry.indicator, dtype=bool)
		if indicator.shape != g.shape:
			raise DomainError(f"explicit mask shape {indicator.shape} does not match grid {g.shape}")
	else:
		raise DomainError(f"unknown thick set geometry {type(geometry).__name__}")
	if not indicator.any():
		raise DomainError("observation set does not intersect the grid")
	return ObservationMask(g, indicator)


def _window_points(g: GridSpec, windows: t.Sequence[float]) -> tuple[int, ...]:
	if len(windows) != g.d:
		raise DomainError(f"expected {g.d} window lengths, got {len(windows)}")
	points = []
	for w in windows:
		if not w > 0:
			raise DomainError(f"window lengths must be positive, got {w}")
		if w > 2.0 * g.half_width:
			raise DomainError(f"window {w} larger than the domain {2.0 * g.half_width}")
		points.append(max(1, int(round(w / g.spacing))))
	return tuple(points)


def _periodic_window_sums(indicator: np.ndarray, widths: t.Sequence[int]) -> np.ndarray:
	"""Covered point count of every grid-aligned window, with wraparound."""
	counts = indicator.astype(np.int64)
	for axis, w in enumerate(widths):
		n = counts.shape[axis]
		head = np.take(counts, np.arange(w - 1), axis=axis)
		padded = np.concatenate([counts, head], axis=axis)
		cums = np.cumsum(padded, axis=axis)
		zero = np.zeros_like(np.take(cums, [0], axis=axis))
		cums = np.concatenate([zero, cums], axis=axis)
		counts = np.take(cums, np.arange(w, w + n), axis=axis) - np.take(cums, np.arange(n), axis=axis)
	return counts


def check_thickness(m: ObservationMask, windows: t.Sequence[float], rho: float) -> ThicknessReport:
	"""Minimum covered fraction over all grid-aligned windows (periodic).

	A window of length L spans round(L/h) points per axis; the verdict allows
	one cell of slack per axis for the continuum-to-grid approximation.
	"""
	widths = _window_points(m.grid, windows)
	counts = _periodic_window_sums(m.indicator, widths)
	volume = float(np.prod(widths))
	min_density = float(counts.min()) / volume
	slack = float(sum(1.0 / w for w in widths))
	return ThicknessReport(
		thick=min_density >= rho - slack,
		min_density=min_density,
		slack=slack,
		window_points=widths,
	)


def measured_density(m: ObservationMask, windows: t.Sequence[float]) -> float:
	return check_thickness(m, windows, 1.0).min_density


def deepest_points(m: ObservationMask, limit: int = 16) -> np.ndarray:
	"""Flat indices of the complement points farthest from Omega.

	Distances are periodic Euclidean distances in units of h. Ties are kept
	in flat-index order and thinned evenly down to ``limit``.
	"""
	complement = ~m.indicator
	if not complement.any():
		return np.empty(0, dtype=np.int64)
	tiled = np.tile(complement, (3,) * m.grid.d)
	distance = ndimage.distance_transform_edt(tiled)
	n = m.grid.n_per_axis
	centre = tuple(slice(n, 2 * n) for _ in range(m.grid.d))
	distance = distance[centre]
	flat = distance.ravel()
	candidates = np.flatnonzero(flat >= flat.max() - 1e-12)
	if candidates.size > limit:
		picks = np.linspace(0, candidates.size - 1, limit).round().astype(np.int64)
		candidates = candidates[picks]
	return candidates


def impulse(g: GridSpec, flat_index: int) -> SampledField:
	values = np.zeros(g.size)
	values[flat_index] = 1.0
	return SampledField(g, values)


# Serialization


def field_to_csv(f: SampledField, path: str | Path) -> None:
	if not f.is_real:
		raise DomainError("CSV export supports real fields only")
	coords = [c.ravel() for c in f.grid.coordinates()]
	values = f.values.ravel()
	with open(path, "w", encoding="utf-8", newline="") as fp:
		writer = csv.writer(fp)
		writer.writerow([f"x{j}" for j in range(f.grid.d)] + ["value"])
		for k in range(values.size):
			writer.writerow([repr(float(c[k])) for c in coords] + [repr(float(values[k]))])


def field_from_csv(path: str | Path, grid: GridSpec) -> SampledField:
	with open(path, "r", encoding="utf-8", newline="") as fp:
		reader = csv.reader(fp)
		header = next(reader)
		if len(header) != grid.d + 1:
			raise DomainError(f"CSV has {len(header)} columns, expected {grid.d + 1}")
		values = [float(row[-1]) for row in reader if row]
	return SampledField(grid, np.asarray(values))


def field_to_bytes(f: SampledField) -> bytes:
	if not f.is_real:
		raise DomainError("binary export supports real fields only")
	header = _HEADER.pack(f.grid.d, f.grid.n_per_axis, f.grid.half_width)
	return header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def field_from_bytes(payload: bytes) -> SampledField:
	if len(payload) < _HEADER.size:
		raise DomainError("binary field payload shorter than its header")
	d, n, half_width = _HEADER.unpack_from(payload)
	grid = GridSpec(d=int(d), half_width=float(half_width), n_per_axis=int(n))
	values = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size)
	if values.size != grid.size:
		raise DomainError(f"binary payload has {values.size} values, header implies {grid.size}")
	return SampledField(grid, values.astype(np.float64))
