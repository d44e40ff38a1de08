"""Batch experiment driver.

Usage examples:
  python -m obslab verify-kernels
  python -m obslab verify-diss --config diss.json --out runs/diss
  python -m obslab duality-check --seed 7 --quiet

Each command writes <command>.json and <command>.csv into --out, plus
failures.json when a check fails or the run aborts.

Exit codes:
  0  every check passed
  1  at least one check failed
  2  invalid configuration
  3  numerical guard or domain error during the run
  4  unexpected internal error
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from . import __version__
from .config import CobsConfig, ExperimentConfig, load_config, validation_messages
from .duality import ControlSystem, check_duality, matrix_exponential, random_system
from .errors import ConfigError, ObsLabError
from .estimates import (
	ObsParams,
	cobs_form,
	estimate_cobs,
	fit_cobs_scaling,
	generate_test_functions,
	lemma_value,
	measure_diss,
	measure_lemma_l1,
	measure_up,
	ou_transfer_violations,
)
from .grid import ObservationMask, SampledField, check_thickness, l1_norm, make_mask, sup_norm
from .parallel import thread_count
from .reports import Check, CommandReport, check_at_least, check_at_most, check_close, write_csv, write_json
from .semigroups import (
	SemigroupKind,
	gw_kernel,
	gw_multiplier,
	gw_step,
	ou_step,
	ou_step_scaling,
	safe_region,
)
from .spectral import multiplier_l1

logger = logging.getLogger("obslab")

DEFAULT_OUT = "./obslab-out"


@dataclass
class Outcome:
	block: str
	checks: list[Check]
	results: dict[str, t.Any]
	columns: list[str]
	rows: list[dict[str, t.Any]] = field(default_factory=list)


def _check_positive(name: str, value: float) -> Check:
	return Check(name, float(value), 0.0, bool(value > 0))


def _check_finite(name: str, value: float) -> Check:
	return Check(name, float(value), math.inf, math.isfinite(value))


def _corpus(block: t.Any, g, seed: int):
	c = block.corpus
	return generate_test_functions(
		c.kind,
		c.count,
		seed,
		g,
		lam_max=c.lam_max,
		decay_radius=c.decay_radius,
		widths=tuple(c.widths),
	)


def _mask(block: t.Any, g) -> ObservationMask:
	return make_mask(block.thick_set.to_spec(g), g)


# Commands


def run_verify_kernels(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	k = cfg.kernels
	g = k.grid.to_spec()
	checks: list[Check] = []
	rows: list[dict[str, t.Any]] = []

	def record(quantity: str, t_: float, value: float, target: float, tolerance: float) -> None:
		check = check_close(f"{quantity}[t={t_!r}]", value, target, tolerance)
		checks.append(check)
		rows.append({"quantity": quantity, "t": t_, "value": value, "target": target, "tolerance": tolerance, "passed": check.passed})

	for t_ in k.gw_times:
		record("l1_gw_kernel", t_, l1_norm(gw_kernel(g, t_)), 1.0, k.l1_tolerance)
		record("multiplier_l1_gw", t_, multiplier_l1(gw_multiplier(t_), g), 1.0, k.l1_tolerance)

	t1, t2 = k.composition_times
	base = gw_kernel(g, 0.3)
	base = base.scaled(1.0 / sup_norm(base))
	composed = gw_step(gw_step(base, t1), t2)
	direct = gw_step(base, t1 + t2)
	record("gw_composition", t1 + t2, float(np.max(np.abs(composed.values - direct.values))), 0.0, k.composition_tolerance)
	oracle = gw_step(gw_kernel(g, 0.3), 0.2)
	record("gw_gaussian_oracle", 0.5, float(np.max(np.abs(oracle.values - gw_kernel(g, 0.5).values))), 0.0, 1e-8)

	A = np.asarray(k.matrix, dtype=float)
	ta, tb = 0.3, 0.45
	deviation = np.max(np.abs(matrix_exponential(A, ta + tb) - matrix_exponential(A, ta) @ matrix_exponential(A, tb)))
	record("matrix_composition", ta + tb, float(deviation), 0.0, k.matrix_tolerance)

	og = k.ou_grid.to_spec()
	ones = SampledField(og, np.ones(og.shape))
	for t_ in k.ou_times:
		out = ou_step(ones, t_, require_decay=False)
		safe = safe_region(og, t_)
		record("ou_constancy", t_, float(np.max(np.abs(out.values[safe] - 1.0))), 0.0, k.ou_constancy_tolerance)

	bump = SampledField.from_function(
		og, lambda *xs: np.exp(-sum((x - k.ou_bump_centre) ** 2 for x in xs) / (2.0 * k.ou_bump_width ** 2))
	)
	for t_ in k.ou_cross_times:
		quadrature = ou_step(bump, t_)
		scaling = ou_step_scaling(bump, t_)
		safe = safe_region(og, t_)
		deviation = float(np.max(np.abs(quadrature.values[safe] - scaling.values[safe])))
		record("ou_cross_validation", t_, deviation, 0.0, k.ou_cross_tolerance)

	return Outcome(
		block="kernels",
		checks=checks,
		results={},
		columns=["quantity", "t", "value", "target", "tolerance", "passed"],
		rows=rows,
	)


def run_verify_up(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	u = cfg.up
	g = u.grid.to_spec()
	mask = _mask(u, g)
	thickness = check_thickness(mask, u.thick_set.windows, u.thick_set.density)
	corpus = _corpus(u, g, cfg.seed)
	fit = measure_up(
		mask,
		u.lambdas,
		corpus,
		windows=u.thick_set.windows,
		rho=u.thick_set.density,
		witnesses=u.witnesses,
		workers=workers,
		progress=progress,
	)
	control = measure_up(ObservationMask.full(g), u.lambdas, corpus, workers=workers, progress=progress)
	checks = [
		check_at_least("thickness_min_density", thickness.min_density, u.thick_set.density - thickness.slack),
		check_at_least("r2", fit.r2, u.r2_min),
		_check_positive("d1", fit.fitted["d1"]),
		_check_finite("affine_d0", fit.fitted["affine_d0"]),
		_check_finite("affine_d1", fit.fitted["affine_d1"]),
		check_at_most("full_mask_abs_d1", abs(control.fitted["d1"]), u.full_mask_d1_tolerance),
	]
	return Outcome(
		block="up",
		checks=checks,
		results={
			"fit": fit,
			"full_mask_fit": control,
			"thickness": {"min_density": thickness.min_density, "slack": thickness.slack, "thick": thickness.thick},
		},
		columns=["lambda", "ratio", "log_ratio", "fitted_log_ratio"],
		rows=fit.cells,
	)


def run_verify_diss(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	d = cfg.diss
	pc = d.propagator()
	corpus = _corpus(d, pc.grid, cfg.seed)
	fit = measure_diss(
		pc,
		d.lambdas,
		d.times,
		corpus,
		held_out_lambdas=d.held_out_lambdas,
		held_out_times=d.held_out_times,
		witnesses=d.witnesses,
		margin=d.margin,
		horizon=d.horizon,
		workers=workers,
		progress=progress,
	)
	checks = [
		check_at_least("r2", fit.r2, d.r2_min),
		_check_positive("d3", fit.fitted["d3"]),
		_check_finite("d2", fit.fitted["d2"]),
		check_at_most("held_out_violations", fit.violations, 0),
	]
	results: dict[str, t.Any] = {"fit": fit}
	if pc.kind is SemigroupKind.OU:
		lemma = _lemma_fit(cfg, workers, progress)
		violations, checked = ou_transfer_violations(fit, lemma)
		checks.append(check_at_most("ou_transfer_violations", violations, 0))
		results["lemma_fit"] = lemma
		results["ou_transfer"] = {"violations": violations, "checked": checked}
	return Outcome(
		block="diss",
		checks=checks,
		results=results,
		columns=["lambda", "t", "ratio", "bound", "violated", "excluded", "held_out"],
		rows=fit.cells,
	)


def _lemma_fit(cfg: ExperimentConfig, workers: int, progress: bool):
	lm = cfg.lemma
	return measure_lemma_l1(
		lm.grid.to_spec(),
		lm.lambdas,
		lm.s_values,
		held_out_lambdas=lm.held_out_lambdas,
		held_out_s=lm.held_out_s,
		margin=lm.margin,
		workers=workers,
		progress=progress,
	)


def run_verify_lemma(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	lm = cfg.lemma
	g = lm.grid.to_spec()
	fit = _lemma_fit(cfg, workers, progress)
	zero_values = {repr(s): lemma_value(g, 0.0, s) for s in lm.s_values}
	worst = max(abs(v - 1.0) for v in zero_values.values())
	checks = [
		_check_positive("d3", fit.fitted["d3"]),
		_check_finite("d2", fit.fitted["d2"]),
		check_at_most("held_out_violations", fit.violations, 0),
		check_at_most("lambda_zero_deviation", worst, lm.zero_limit_tolerance),
	]
	return Outcome(
		block="lemma",
		checks=checks,
		results={"fit": fit, "lambda_zero_values": zero_values},
		columns=["lambda", "s", "value", "bound", "violated", "held_out"],
		rows=fit.cells,
	)


def _measure_cobs(cb: CobsConfig, seed: int, horizons: t.Sequence[float], workers: int, progress: bool) -> list[float]:
	pc = cb.propagator()
	mask = _mask(cb, pc.grid)
	corpus = _corpus(cb, pc.grid, seed)
	return [
		estimate_cobs(
			pc,
			mask,
			T,
			cb.r,
			corpus,
			n_steps=cb.n_steps,
			witnesses=cb.witnesses,
			workers=workers,
			progress=progress,
		)
		for T in horizons
	]


def run_estimate_cobs(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	cb = cfg.cobs
	horizons = sorted(cb.horizons)
	values = _measure_cobs(cb, cfg.seed, horizons, workers, progress)
	checks = [_check_finite(f"c_obs[T={T!r}]", v) for T, v in zip(horizons, values)]
	if cb.kind is SemigroupKind.GW:
		increases = sum(b > a for a, b in zip(values, values[1:]))
		checks.append(check_at_most("increases_in_T", increases, 0))
	return Outcome(
		block="cobs",
		checks=checks,
		results={"horizons": horizons, "c_obs": values},
		columns=["T", "c_obs"],
		rows=[{"T": T, "c_obs": v} for T, v in zip(horizons, values)],
	)


def run_fit_cobs(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	fc = cfg.fit_cobs
	if fc.measured is not None:
		horizons, measured = list(fc.horizons), list(fc.measured)
	else:
		horizons = sorted(cfg.cobs.horizons)
		measured = _measure_cobs(cfg.cobs, cfg.seed, horizons, workers, progress)
	p = ObsParams(gamma1=fc.gamma1, gamma2=fc.gamma2, gamma3=fc.gamma3, r=cfg.cobs.r)
	fit = fit_cobs_scaling(horizons, measured, p)
	checks = [
		check_at_least("r2", fit.r2, fc.r2_min),
		_check_finite("C1", fit.shape.C1),
		_check_finite("C3", fit.shape.C3),
	]
	if fc.require_blowup:
		checks.append(_check_positive("C2", fit.shape.C2))
	else:
		checks.append(_check_finite("C2", fit.shape.C2))
	rows = [{"T": T, "measured": m, "fitted": cobs_form(T, fit.shape, p)} for T, m in zip(horizons, measured)]
	return Outcome(
		block="fit_cobs",
		checks=checks,
		results={
			"shape": {"C1": fit.shape.C1, "C2": fit.shape.C2, "C3": fit.shape.C3},
			"r2": fit.r2,
			"kappa": p.kappa,
			"r": p.r,
		},
		columns=["T", "measured", "fitted"],
		rows=rows,
	)


def _duality_systems(cfg: ExperimentConfig) -> list[tuple[str, ControlSystem, float, float | None]]:
	dc = cfg.duality
	systems = [
		(s.name, ControlSystem(np.asarray(s.A), np.asarray(s.B), s.T, s.n_steps), dc.tolerance, s.reference)
		for s in dc.systems
	]
	rnd = dc.random
	for i in range(rnd.count):
		n = 1 + (i % rnd.n_max) if rnd.n_max < 2 else 2 + (i % (rnd.n_max - 1))
		m = 1 + (i // 2) % rnd.m_max
		seed = cfg.seed + i
		systems.append((f"random-{i}", random_system(n, m, seed, rnd.T, rnd.n_steps), rnd.tolerance, None))
	return systems


def run_duality_check(cfg: ExperimentConfig, workers: int, progress: bool) -> Outcome:
	dc = cfg.duality
	checks: list[Check] = []
	rows: list[dict[str, t.Any]] = []
	reports: dict[str, t.Any] = {}
	for index, (name, sys_, tol, reference) in enumerate(_duality_systems(cfg)):
		report = check_duality(sys_, dc.eps_sequence, tol, sample_count=dc.sample_count, seed=cfg.seed + index, workers=workers)
		reports[name] = report
		checks.append(_check_finite(f"{name}.c_control", report.c_control))
		checks.append(_check_finite(f"{name}.c_obs", report.c_obs))
		checks.append(check_at_most(f"{name}.gap", report.gap, tol))
		checks.append(check_at_most(f"{name}.weak_duality_violations", report.weak_duality_violations, 0))
		if reference is not None:
			relative = abs(report.c_obs - reference) / reference
			checks.append(check_at_most(f"{name}.reference_gap", relative, tol))
		rows.append({"system": name, "c_control": report.c_control, "c_obs": report.c_obs, "gap": report.gap, "passed": report.passed})
	return Outcome(
		block="duality",
		checks=checks,
		results={"systems": reports},
		columns=["system", "c_control", "c_obs", "gap", "passed"],
		rows=rows,
	)


COMMANDS: dict[str, t.Callable[[ExperimentConfig, int, bool], Outcome]] = {
	"verify-kernels": run_verify_kernels,
	"verify-up": run_verify_up,
	"verify-diss": run_verify_diss,
	"verify-lemma-l1": run_verify_lemma,
	"estimate-cobs": run_estimate_cobs,
	"fit-cobs": run_fit_cobs,
	"duality-check": run_duality_check,
}


def parse_args(argv: list[str]) -> argparse.Namespace:
	p = argparse.ArgumentParser(prog="obslab", description="Observability laboratory experiments.")
	p.add_argument("command", choices=sorted(COMMANDS), help="Experiment to run.")
	p.add_argument("--config", help="JSON experiment config (defaults are used when omitted).")
	p.add_argument("--seed", type=int, help="Override the config seed.")
	p.add_argument("--out", default=DEFAULT_OUT, help=f"Artifact directory (default: {DEFAULT_OUT}).")
	p.add_argument("--quiet", action="store_true", help="Only warnings and errors; no progress or summary.")
	return p.parse_args(argv)


def _with_seed(cfg: ExperimentConfig, seed: int | None) -> ExperimentConfig:
	if seed is None:
		return cfg
	data = cfg.model_dump()
	data["seed"] = seed
	return ExperimentConfig.model_validate(data)


def _fail(out: Path, command: str, kind: str, messages: list[str]) -> None:
	for message in messages:
		print(f"Error: {message}", file=sys.stderr)
	write_json(out / "failures.json", {"command": command, "kind": kind, "failures": messages})


def main(argv: list[str] | None = None) -> int:
	args = parse_args(sys.argv[1:] if argv is None else argv)
	load_dotenv(override=False)
	logging.basicConfig(
		level=logging.WARNING if args.quiet else logging.INFO,
		format="%(levelname)s %(name)s: %(message)s",
	)
	out = Path(args.out)
	out.mkdir(parents=True, exist_ok=True)
	failures_path = out / "failures.json"
	if failures_path.exists():
		failures_path.unlink()

	try:
		cfg = load_config(args.config)
		cfg = _with_seed(cfg, args.seed)
		workers = thread_count()
	except ConfigError as e:
		_fail(out, args.command, "config", [str(e)])
		return 2
	except ValidationError as e:
		_fail(out, args.command, "config", validation_messages(e))
		return 2

	try:
		outcome = COMMANDS[args.command](cfg, workers, not args.quiet)
	except (ObsLabError, np.linalg.LinAlgError, FloatingPointError) as e:
		_fail(out, args.command, type(e).__name__, [str(e)])
		return 3
	except Exception as e:
		logger.exception(f"{args.command} aborted")
		_fail(out, args.command, "internal", [f"{type(e).__name__}: {e}"])
		return 4

	report = CommandReport(
		command=args.command,
		version=__version__,
		seed=cfg.seed,
		config=getattr(cfg, outcome.block).model_dump(),
		checks=outcome.checks,
		results=outcome.results,
	)
	write_json(out / f"{args.command}.json", report)
	write_csv(out / f"{args.command}.csv", outcome.columns, outcome.rows)

	if not args.quiet:
		print(f"command={args.command} seed={cfg.seed} checks={len(report.checks)} failed={len(report.failures())}")
		for check in report.checks:
			print(f"  {check.name}={check.value:.6g} tolerance={check.tolerance:.3g} passed={check.passed}")
		print(f"Wrote {out / (args.command + '.json')}")

	if not report.passed:
		write_json(
			failures_path,
			{"command": args.command, "kind": "checks", "failures": [c.to_json() for c in report.failures()]},
		)
		return 1
	return 0
