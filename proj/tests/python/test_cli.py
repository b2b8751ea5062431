import json
import os
import pathlib
import shutil
import subprocess

import pytest

CLI = os.environ.get("MFMC_CLI") or shutil.which("mfmc")

pytestmark = pytest.mark.skipif(not CLI, reason="mfmc executable not available")


def run(*args, check=True):
    proc = subprocess.run([CLI, *args], capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(proc.stderr)
    return proc


def test_unknown_statistic_is_rejected(tmp_path):
    proc = run("estimate", "--set", "statistics=[\"kurtosis\"]", "--set", "budgets=[10]",
               "--out-dir", str(tmp_path), check=False)
    assert proc.returncode != 0
    assert "unknown statistic" in proc.stderr


def test_infeasible_budget_exits_nonzero(tmp_path):
    proc = run("estimate", "--set", "budgets=[0.5]", "--set", "replicates=2",
               "--out-dir", str(tmp_path), check=False)
    assert proc.returncode != 0
    assert proc.stderr.startswith("error:")


def test_estimate_is_reproducible(tmp_path):
    config = {"hierarchy": "ishigami", "statistics": ["expectation", "variance"], "budgets": [40],
              "replicates": 4, "pilot_size": 40}
    cfg = tmp_path / "study.json"
    cfg.write_text(json.dumps(config))
    a, b = tmp_path / "a", tmp_path / "b"
    run("estimate", "--config", str(cfg), "--out-dir", str(a), "--seed", "5")
    run("estimate", "--config", str(cfg), "--out-dir", str(b), "--seed", "5", "--jobs", "2")
    for name in ("allocation.csv", "estimates_linear.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["config"]["seed"] == 5
    assert {c["statistic"] for c in summary["cells"]} == {"expectation", "variance"}


def test_sweep_and_reference(tmp_path):
    base = ["--set", "hierarchy=\"synthetic-field\"", "--set", "field_points=3",
            "--set", "statistics=[\"sobol-total\"]", "--set", "budgets=[300, 600]",
            "--set", "replicates=3", "--out-dir", str(tmp_path)]
    missing = run("sweep", *base, check=False)
    assert missing.returncode != 0
    assert "make-reference" in missing.stderr

    ref = tmp_path / "ref.json"
    run("make-reference", *base, "--samples", "5000", "--output", str(ref))
    assert json.loads(ref.read_text())["hierarchy"] == "synthetic-field"
    run("sweep", *base, "--set", f"reference_file=\"{ref}\"")
    lines = pathlib.Path(tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "budget,statistic,mode,empirical_mse,relative_mse,predicted_mse,replicates"
    assert len(lines) == 3


def test_pilot_then_allocate(tmp_path):
    run("pilot", "--set", "budgets=[40]", "--out-dir", str(tmp_path))
    pilot = tmp_path / "pilot_expectation_linear.json"
    assert pilot.exists()
    run("allocate", "--pilot", str(pilot), "--set", "budgets=[40]", "--out-dir", str(tmp_path))
    plans = list(tmp_path.glob("plan_expectation_linear_p*.json"))
    assert len(plans) == 1
    plan = json.loads(plans[0].read_text())
    assert plan["m"][0] >= 1
    assert plan["budget_used"] <= 40.0 + 1e-9
