"""Experiment configuration schema.

A config file is JSON. Every block has complete defaults, so an empty object
(or no file at all) reproduces the reference experiments. Unknown keys are
rejected.
"""

from __future__ import annotations

import json
import math
import typing as t
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .grid import ExplicitMask, FullSpace, GridSpec, PeriodicSlabs, ThickSetSpec
from .semigroups import PropagatorConfig, SemigroupKind


class _Block(BaseModel):
	model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Block):
	d: t.Literal[1, 2] = 1
	half_width: float = Field(16.0, gt=0)
	n_per_axis: int = Field(512, ge=8)

	@field_validator("n_per_axis")
	@classmethod
	def _even(cls, v: int) -> int:
		if v % 2:
			raise ValueError("n_per_axis must be even")
		return v

	def to_spec(self) -> GridSpec:
		return GridSpec(d=self.d, half_width=self.half_width, n_per_axis=self.n_per_axis)


class ThickSetConfig(_Block):
	geometry: t.Literal["full", "slabs", "explicit"] = "slabs"
	windows: list[float] = Field(default_factory=lambda: [2.0])
	density: float = Field(0.5, gt=0, le=1)
	period: list[float] | None = Field(default_factory=lambda: [2.0])
	filled: list[tuple[float, float]] | None = Field(default_factory=lambda: [(0.0, 1.0)])
	indicator: list[int] | None = None

	@model_validator(mode="after")
	def _geometry_fields(self) -> "ThickSetConfig":
		if self.geometry == "slabs" and (not self.period or not self.filled):
			raise ValueError("slab geometry needs period and filled")
		if self.geometry == "explicit" and not self.indicator:
			raise ValueError("explicit geometry needs indicator")
		return self

	def to_spec(self, g: GridSpec) -> ThickSetSpec:
		if self.geometry == "full":
			geometry = FullSpace()
		elif self.geometry == "slabs":
			geometry = PeriodicSlabs(tuple(self.period), tuple(tuple(f) for f in self.filled))
		else:
			geometry = ExplicitMask(np.asarray(self.indicator, dtype=bool).reshape(g.shape))
		return ThickSetSpec(windows=tuple(self.windows), density=self.density, geometry=geometry)


class CorpusConfig(_Block):
	kind: t.Literal["band_limited", "gaussian_bumps", "mixed"] = "band_limited"
	count: int = Field(16, ge=1)
	lam_max: float | None = 24.0
	decay_radius: float | None = None
	widths: tuple[float, float] = (0.25, 0.6)


class KernelsConfig(_Block):
	grid: GridConfig = GridConfig(half_width=12.0, n_per_axis=512)
	gw_times: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
	l1_tolerance: float = 1e-6
	composition_times: tuple[float, float] = (0.1, 0.2)
	composition_tolerance: float = 1e-10
	ou_grid: GridConfig = GridConfig(half_width=8.0, n_per_axis=256)
	ou_times: list[float] = Field(default_factory=lambda: [0.25, 1.0])
	ou_constancy_tolerance: float = 1e-8
	ou_cross_times: list[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0])
	ou_cross_tolerance: float = 1e-6
	ou_bump_centre: float = 0.3
	ou_bump_width: float = 0.4
	matrix: list[list[float]] = Field(default_factory=lambda: [[1.0, 0.5, 0.0, 0.0], [0.0, 2.0, 0.3, 0.0], [0.0, 0.0, 1.5, 0.2], [0.1, 0.0, 0.0, 0.8]])
	matrix_tolerance: float = 1e-10


class UPConfig(_Block):
	grid: GridConfig = GridConfig()
	thick_set: ThickSetConfig = ThickSetConfig()
	lambdas: list[float] = Field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
	corpus: CorpusConfig = CorpusConfig()
	witnesses: bool = True
	r2_min: float = 0.9
	full_mask_d1_tolerance: float = 1e-3


# OU quadrature needs test functions that vanish near the box edge
OU_DISS_DEFAULTS: dict[str, t.Any] = {
	"grid": {"half_width": 8.0, "n_per_axis": 256},
	"corpus": {"kind": "gaussian_bumps", "lam_max": None},
	"r2_min": 0.9,
}


class DissConfig(_Block):
	kind: SemigroupKind = SemigroupKind.GW
	grid: GridConfig = GridConfig()
	ou_truncation: float | None = None
	horizon: float = Field(1.0, gt=0)
	lambdas: list[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0])
	times: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.3, 0.4, 0.5])
	held_out_lambdas: list[float] = Field(default_factory=lambda: [6.0, 12.0])
	held_out_times: list[float] = Field(default_factory=lambda: [0.075, 0.15, 0.25])
	corpus: CorpusConfig = CorpusConfig()
	witnesses: bool = True
	margin: float = Field(0.1, ge=0)
	r2_min: float = 0.99

	@model_validator(mode="before")
	@classmethod
	def _kind_defaults(cls, data: t.Any) -> t.Any:
		if isinstance(data, dict) and SemigroupKind(data.get("kind", SemigroupKind.GW)) is SemigroupKind.OU:
			return {**OU_DISS_DEFAULTS, **data}
		return data

	@model_validator(mode="after")
	def _times_within_half_horizon(self) -> "DissConfig":
		if any(not 0 < x <= self.horizon / 2.0 for x in self.times + self.held_out_times):
			raise ValueError("dissipation times must lie in (0, horizon/2]")
		return self

	def propagator(self) -> PropagatorConfig:
		return PropagatorConfig(self.kind, self.grid.to_spec(), self.ou_truncation)


class LemmaConfig(_Block):
	grid: GridConfig = GridConfig()
	lambdas: list[float] = Field(default_factory=lambda: [2.0, 4.0, 6.0, 8.0, 10.0])
	s_values: list[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9])
	held_out_lambdas: list[float] = Field(default_factory=lambda: [3.0, 5.0, 7.0, 9.0, 9.5])
	held_out_s: list[float] = Field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 0.85])
	margin: float = Field(0.1, ge=0)
	zero_limit_tolerance: float = 1e-4

	@field_validator("s_values", "held_out_s")
	@classmethod
	def _unit_interval(cls, v: list[float]) -> list[float]:
		if any(not 0 < s < 1 for s in v):
			raise ValueError("s values must lie in (0, 1)")
		return v


def _parse_r(v: t.Any) -> float:
	if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
		return math.inf
	return float(v)


class CobsConfig(_Block):
	kind: SemigroupKind = SemigroupKind.GW
	grid: GridConfig = GridConfig(half_width=16.0, n_per_axis=256)
	ou_truncation: float | None = None
	thick_set: ThickSetConfig = ThickSetConfig(windows=[4.0], density=0.25, period=[4.0], filled=[(0.0, 1.0)])
	horizons: list[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0])
	r: float = math.inf
	n_steps: int = Field(32, ge=32)
	corpus: CorpusConfig = CorpusConfig(lam_max=12.0)
	witnesses: bool = True

	@field_validator("r", mode="before")
	@classmethod
	def _r(cls, v: t.Any) -> float:
		r = _parse_r(v)
		if not r >= 1:
			raise ValueError("r must lie in [1, inf]")
		return r

	def propagator(self) -> PropagatorConfig:
		return PropagatorConfig(self.kind, self.grid.to_spec(), self.ou_truncation)


class FitCobsConfig(_Block):
	horizons: list[float] | None = None
	measured: list[float] | None = None
	gamma1: float = 1.0
	gamma2: float = 2.0
	gamma3: float = 1.0
	r2_min: float = 0.9
	require_blowup: bool = True

	@model_validator(mode="after")
	def _pairs(self) -> "FitCobsConfig":
		if (self.horizons is None) != (self.measured is None):
			raise ValueError("horizons and measured must be given together")
		if self.horizons is not None and len(self.horizons) != len(self.measured):
			raise ValueError("horizons and measured must have the same length")
		if not self.gamma1 < self.gamma2:
			raise ValueError("gamma1 must be below gamma2")
		return self


class SystemSpec(_Block):
	name: str
	A: list[list[float]]
	B: list[list[float]]
	T: float = Field(1.0, gt=0)
	n_steps: int = Field(64, ge=1)
	reference: float | None = None

	@model_validator(mode="after")
	def _shapes(self) -> "SystemSpec":
		n = len(self.A)
		if any(len(row) != n for row in self.A):
			raise ValueError("A must be square")
		if len(self.B) != n or len({len(row) for row in self.B}) != 1:
			raise ValueError("B must have one row per state and a fixed column count")
		return self


def _scalar_benchmark() -> list[SystemSpec]:
	return [
		SystemSpec(
			name="scalar",
			A=[[1.0]],
			B=[[1.0]],
			T=1.0,
			n_steps=64,
			reference=math.exp(-1.0) / (1.0 - math.exp(-1.0)),
		)
	]


class RandomSystemsConfig(_Block):
	count: int = Field(10, ge=0)
	n_max: int = Field(3, ge=1, le=5)
	m_max: int = Field(2, ge=1, le=3)
	T: float = Field(1.0, gt=0)
	n_steps: int = Field(64, ge=1, le=64)
	tolerance: float = 0.05


class DualityConfig(_Block):
	systems: list[SystemSpec] = Field(default_factory=_scalar_benchmark)
	random: RandomSystemsConfig = RandomSystemsConfig()
	eps_sequence: list[float] = Field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
	tolerance: float = 0.02
	sample_count: int = Field(8, ge=0)

	@field_validator("eps_sequence")
	@classmethod
	def _positive(cls, v: list[float]) -> list[float]:
		if not v or any(e <= 0 for e in v):
			raise ValueError("eps_sequence must hold positive radii")
		return v


class ExperimentConfig(_Block):
	schema_version: t.Literal[1] = 1
	seed: int = Field(0, ge=0, le=2**64 - 1)
	kernels: KernelsConfig = KernelsConfig()
	up: UPConfig = UPConfig()
	diss: DissConfig = DissConfig()
	lemma: LemmaConfig = LemmaConfig()
	cobs: CobsConfig = CobsConfig()
	fit_cobs: FitCobsConfig = FitCobsConfig()
	duality: DualityConfig = DualityConfig()


def validation_messages(exc: ValidationError) -> list[str]:
	return [f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()]


def load_config(path: str | Path | None = None) -> ExperimentConfig:
	"""Read and validate a JSON config; None gives the defaults."""
	if path is None:
		return ExperimentConfig()
	try:
		raw = Path(path).read_text(encoding="utf-8")
	except OSError as e:
		raise ConfigError(f"cannot read config {path}: {e}") from e
	try:
		data = json.loads(raw)
	except json.JSONDecodeError as e:
		raise ConfigError(f"config {path} is not valid JSON: {e}") from e
	if not isinstance(data, dict):
		raise ConfigError(f"config {path} must hold a JSON object")
	try:
		return ExperimentConfig.model_validate(data)
	except ValidationError as e:
		raise ConfigError("; ".join(validation_messages(e))) from e
