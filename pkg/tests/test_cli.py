import json

import numpy as np
import pytest

from obslab import __version__
from obslab.cli import COMMANDS, main, parse_args
from obslab.parallel import THREADS_ENV

RISING = {"fit_cobs": {"horizons": [0.5, 1.0, 2.0, 4.0], "measured": [1.1052, 1.3499, 1.8221, 3.3201]}}
BLOW_UP = {"fit_cobs": {"horizons": [0.25, 0.5, 1.0, 2.0], "measured": [9.5, 3.1, 1.75, 1.24]}}


def write_config(tmp_path, data) -> str:
	path = tmp_path / "config.json"
	path.write_text(json.dumps(data))
	return str(path)


def run(tmp_path, command, config=None, *extra):
	argv = [command, "--out", str(tmp_path / "out"), "--quiet", *extra]
	if config is not None:
		argv += ["--config", write_config(tmp_path, config)]
	return main(argv)


def artifact(tmp_path, name):
	return json.loads((tmp_path / "out" / name).read_text())


def test_parse_args_defaults():
	args = parse_args(["verify-kernels"])
	assert args.out == "./obslab-out"
	assert args.seed is None
	assert not args.quiet


def test_unknown_command():
	with pytest.raises(SystemExit):
		parse_args(["verify-everything"])


def test_verify_kernels(tmp_path):
	assert run(tmp_path, "verify-kernels") == 0
	report = artifact(tmp_path, "verify-kernels.json")
	assert report["passed"]
	assert report["version"] == __version__
	names = {c["name"] for c in report["checks"]}
	assert "l1_gw_kernel[t=0.5]" in names
	assert (tmp_path / "out" / "verify-kernels.csv").read_text().startswith("quantity,t,value,target,tolerance,passed\n")


def test_fit_cobs_passes_on_blow_up(tmp_path):
	assert run(tmp_path, "fit-cobs", BLOW_UP) == 0
	report = artifact(tmp_path, "fit-cobs.json")
	assert report["results"]["shape"]["C2"] > 0
	assert report["results"]["r"] == "inf"


def test_failed_check_exits_one(tmp_path):
	assert run(tmp_path, "fit-cobs", RISING) == 1
	failures = artifact(tmp_path, "failures.json")
	assert failures["kind"] == "checks"
	assert [f["name"] for f in failures["failures"]] == ["C2"]


def test_stale_failures_are_removed(tmp_path):
	assert run(tmp_path, "fit-cobs", RISING) == 1
	assert run(tmp_path, "fit-cobs", BLOW_UP) == 0
	assert not (tmp_path / "out" / "failures.json").exists()


def test_invalid_config_exits_two(tmp_path):
	assert run(tmp_path, "verify-up", {"up": {"lambdas": [2.0], "bogus": True}}) == 2
	assert artifact(tmp_path, "failures.json")["kind"] == "config"


def test_invalid_thread_count_exits_two(tmp_path, monkeypatch):
	monkeypatch.setenv(THREADS_ENV, "many")
	assert run(tmp_path, "fit-cobs", BLOW_UP) == 2


def test_numerical_guard_exits_three(tmp_path):
	assert run(tmp_path, "verify-up", {"up": {"lambdas": [2.0, 100.0]}}) == 3
	failures = artifact(tmp_path, "failures.json")
	assert failures["kind"] == "NyquistError"
	assert "cutoff exceeds Nyquist" in failures["failures"][0]


def test_unexpected_error_exits_four(tmp_path, monkeypatch):
	def broken(cfg, workers, progress):
		raise RuntimeError("disk on fire")

	monkeypatch.setitem(COMMANDS, "fit-cobs", broken)
	assert run(tmp_path, "fit-cobs", BLOW_UP) == 4
	failures = artifact(tmp_path, "failures.json")
	assert failures["kind"] == "internal"
	assert failures["failures"] == ["RuntimeError: disk on fire"]


def test_linear_algebra_failure_exits_three(tmp_path, monkeypatch):
	def singular(cfg, workers, progress):
		raise np.linalg.LinAlgError("Singular matrix")

	monkeypatch.setitem(COMMANDS, "duality-check", singular)
	assert run(tmp_path, "duality-check") == 3
	assert artifact(tmp_path, "failures.json")["kind"] == "LinAlgError"


def test_verify_up(tmp_path):
	assert run(tmp_path, "verify-up") == 0
	report = artifact(tmp_path, "verify-up.json")
	checks = {c["name"]: c for c in report["checks"]}
	assert checks["r2"]["value"] >= 0.9
	assert checks["r2"]["tolerance"] == 0.9
	assert checks["full_mask_abs_d1"]["value"] <= 1e-3
	assert report["results"]["fit"]["fitted"]["d1"] > 0
	csv = (tmp_path / "out" / "verify-up.csv").read_text().splitlines()
	assert csv[0] == "lambda,ratio,log_ratio,fitted_log_ratio"
	assert len(csv) == 5


def test_reported_numbers_carry_checks(tmp_path):
	assert run(tmp_path, "fit-cobs", BLOW_UP) == 0
	report = artifact(tmp_path, "fit-cobs.json")
	names = {c["name"] for c in report["checks"]}
	assert set(report["results"]["shape"]) <= names
	assert all({"value", "tolerance", "passed"} <= set(c) for c in report["checks"])


def test_seed_override(tmp_path):
	assert run(tmp_path, "fit-cobs", BLOW_UP, "--seed", "5") == 0
	assert artifact(tmp_path, "fit-cobs.json")["seed"] == 5


def test_quiet_prints_nothing(tmp_path, capsys):
	run(tmp_path, "fit-cobs", BLOW_UP)
	assert capsys.readouterr().out == ""


def test_summary_lines(tmp_path, capsys):
	assert main(["fit-cobs", "--out", str(tmp_path / "out"), "--config", write_config(tmp_path, BLOW_UP)]) == 0
	out = capsys.readouterr().out
	assert out.startswith("command=fit-cobs seed=0 checks=4 failed=0")


def test_scalar_duality(tmp_path):
	assert run(tmp_path, "duality-check", {"duality": {"random": {"count": 0}}}) == 0
	report = artifact(tmp_path, "duality-check.json")
	assert report["results"]["systems"]["scalar"]["gap"] <= 0.02
	csv = (tmp_path / "out" / "duality-check.csv").read_text().splitlines()
	assert csv[0] == "system,c_control,c_obs,gap,passed"
	assert csv[1].startswith("scalar,")


def test_runs_are_byte_identical(tmp_path):
	first, second = tmp_path / "a", tmp_path / "b"
	assert main(["verify-lemma-l1", "--out", str(first), "--quiet"]) == 0
	assert main(["verify-lemma-l1", "--out", str(second), "--quiet"]) == 0
	assert (first / "verify-lemma-l1.json").read_bytes() == (second / "verify-lemma-l1.json").read_bytes()
	assert (first / "verify-lemma-l1.csv").read_bytes() == (second / "verify-lemma-l1.csv").read_bytes()


@pytest.mark.slow
def test_verify_diss(tmp_path):
	assert run(tmp_path, "verify-diss") == 0
	report = artifact(tmp_path, "verify-diss.json")
	assert report["results"]["fit"]["violations"] == 0


@pytest.mark.slow
def test_verify_diss_ou_defaults(tmp_path):
	assert run(tmp_path, "verify-diss", {"diss": {"kind": "OU"}}) == 0
	report = artifact(tmp_path, "verify-diss.json")
	assert report["config"]["corpus"]["kind"] == "gaussian_bumps"
	assert report["results"]["fit"]["fitted"]["d3"] > 0
	assert report["results"]["fit"]["violations"] == 0
