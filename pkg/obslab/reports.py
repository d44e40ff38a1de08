"""Deterministic JSON and CSV artifacts.

Non-finite floats are written as the strings "inf", "-inf" and "nan" so the
JSON stays strict. Keys are sorted and nothing time dependent is recorded.
"""

from __future__ import annotations

import csv
import json
import math
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Check:
	name: str
	value: float
	tolerance: float
	passed: bool

	def to_json(self) -> dict[str, t.Any]:
		return {"name": self.name, "value": self.value, "tolerance": self.tolerance, "passed": self.passed}


def check_at_most(name: str, value: float, limit: float) -> Check:
	return Check(name, float(value), float(limit), bool(value <= limit))


def check_at_least(name: str, value: float, limit: float) -> Check:
	return Check(name, float(value), float(limit), bool(value >= limit))


def check_close(name: str, value: float, target: float, tolerance: float) -> Check:
	"""Passes when |value - target| <= tolerance; the recorded value is the deviation."""
	deviation = abs(float(value) - float(target))
	return Check(name, deviation, float(tolerance), bool(deviation <= tolerance))


@dataclass
class CommandReport:
	command: str
	version: str
	seed: int
	config: dict[str, t.Any]
	checks: list[Check] = field(default_factory=list)
	results: dict[str, t.Any] = field(default_factory=dict)

	@property
	def passed(self) -> bool:
		return all(c.passed for c in self.checks)

	def failures(self) -> list[Check]:
		return [c for c in self.checks if not c.passed]

	def to_json(self) -> dict[str, t.Any]:
		return {
			"command": self.command,
			"version": self.version,
			"seed": self.seed,
			"config": self.config,
			"checks": [c.to_json() for c in self.checks],
			"passed": self.passed,
			"results": self.results,
		}


def encode(obj: t.Any) -> t.Any:
	"""Convert to plain JSON types; non-finite floats become strings."""
	if hasattr(obj, "to_json"):
		return encode(obj.to_json())
	if isinstance(obj, dict):
		return {str(k): encode(v) for k, v in obj.items()}
	if isinstance(obj, (list, tuple)):
		return [encode(v) for v in obj]
	if isinstance(obj, np.ndarray):
		return [encode(v) for v in obj.tolist()]
	if isinstance(obj, (bool, np.bool_)):
		return bool(obj)
	if isinstance(obj, (int, np.integer)):
		return int(obj)
	if isinstance(obj, (float, np.floating)):
		value = float(obj)
		if math.isnan(value):
			return "nan"
		if math.isinf(value):
			return "inf" if value > 0 else "-inf"
		return value
	return obj


def dumps_json(obj: t.Any) -> str:
	return json.dumps(encode(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: t.Any) -> None:
	with open(path, "w", encoding="utf-8", newline="\n") as fp:
		fp.write(dumps_json(obj))


def _cell(value: t.Any) -> str:
	if isinstance(value, (bool, np.bool_)):
		return "true" if value else "false"
	if isinstance(value, (float, np.floating)):
		return repr(float(value))
	return str(value)


def write_csv(path: str | Path, columns: t.Sequence[str], rows: t.Iterable[t.Mapping[str, t.Any]]) -> None:
	with open(path, "w", encoding="utf-8", newline="") as fp:
		writer = csv.writer(fp, lineterminator="\n")
		writer.writerow(columns)
		for row in rows:
			writer.writerow([_cell(row[c]) for c in columns])
