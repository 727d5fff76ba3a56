"""Integration tests for the command line interface.

Exit codes and byte-level determinism are asserted through real
subprocesses; schema and flag-precedence checks call main() in process
to keep the suite fast.
"""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from sphericalsk.cli import main
from sphericalsk.simulator import read_overlap_dump

Q_HEADLINE = 0.08143543952394208
R_HEADLINE = 0.27556936814281737
B_HEADLINE = 0.08865510713992397
F_HEADLINE = 0.06305878029270827
LIMITS_HEADLINE = {
    "N_var_R12": 1.0523784180920709,
    "N_cov_R12_R13": 0.07504306770961874,
    "N_cov_R12_R34": 0.002545934259856398,
    "N_cov_R12_R1": 0.23276214638574600,
    "N_cov_R12_R3": 0.01374189503763781,
    "N_var_R1": 0.7895842611362522,
    "N_cov_R1_R2": 0.007583722577513122,
}


def run_cli(*args, expect=0):
    proc = subprocess.run(
        [sys.executable, "-m", "sphericalsk.cli", *args],
        capture_output=True, text=True,
    )
    assert proc.returncode == expect, f"exit {proc.returncode}: {proc.stderr}\n{proc.stdout}"
    return proc


def main_json(capsys, *args, expect=0):
    assert main(list(args)) == expect
    return json.loads(capsys.readouterr().out)


def write_config(tmp_path, **overrides):
    cfg = {
        "mixture": [{"p": 2, "w": 1.0}], "beta": 0.2, "h": 0.3, "N": 24,
        "n_disorder": 2, "n_chains": 4, "sweeps": 300, "burnin": 100,
        "seed": 11, "thin": 10, "workers": 1,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# theory and oracle1d


def test_theory_report_schema_and_values(capsys):
    report = main_json(capsys, "theory", "--mixture", "p2:1", "--beta", "0.2", "--h", "0.3")
    assert report["q"] == pytest.approx(Q_HEADLINE, abs=2e-12)
    assert report["r"] == pytest.approx(R_HEADLINE, abs=2e-12)
    assert report["b"] == pytest.approx(B_HEADLINE, abs=2e-12)
    assert report["free_energy"] == pytest.approx(F_HEADLINE, abs=2e-12)
    for name, value in LIMITS_HEADLINE.items():
        assert report["fluctuation"]["limits"][name] == pytest.approx(value, abs=1e-10)
    assert report["config"]["mixture"] == [{"p": 2, "w": 1.0}]
    assert len(report["fluctuation"]["M"]) == 7
    assert len(report["fluctuation"]["v"]) == 7
    assert len(report["relations"]) == 10


def test_theory_zero_point_is_exact(capsys):
    report = main_json(capsys, "theory", "--mixture", "p2:1", "--beta", "0", "--h", "0")
    assert report["q"] == 0.0 and report["r"] == 0.0
    assert report["W"] == 0.0 and report["U"] == 0.0
    expected = {
        "N_var_R12": 1.0, "N_cov_R12_R13": 0.0, "N_cov_R12_R34": 0.0,
        "N_cov_R12_R1": 0.0, "N_cov_R12_R3": 0.0, "N_var_R1": 1.0,
        "N_cov_R1_R2": 0.0,
    }
    assert report["fluctuation"]["limits"] == expected


def test_theory_csv_lands_next_to_out(tmp_path, capsys):
    out = tmp_path / "theory.json"
    assert main(["theory", "--out", str(out), "--csv"]) == 0
    report = json.loads(out.read_text())
    rows = dict(
        line.split(",", 1)
        for line in (tmp_path / "theory.csv").read_text().splitlines()[1:]
    )
    assert float(rows["q"]) == report["q"]
    assert float(rows["N_var_R12"]) == report["fluctuation"]["limits"]["N_var_R12"]
    assert "M_1_1" in rows and "v_7" in rows


def test_oracle1d_extrapolation_reaches_engine(capsys):
    report = main_json(
        capsys, "oracle1d", "--monomials", "1,1", "--sizes", "1000,10000,100000"
    )
    row = report["rows"][0]
    assert row["exponents"] == [1, 1]
    assert row["engine"] == pytest.approx(Q_HEADLINE, abs=2e-12)
    assert row["delta"] < 1e-6
    gaps = row["scaled_gaps"]
    assert max(gaps) / min(gaps) < 3.0


# ---------------------------------------------------------------------------
# exit codes


def test_region_error_exits_2_with_structured_object():
    proc = run_cli("theory", "--beta", "10", "--h", "0.3", expect=2)
    error = json.loads(proc.stdout)["error"]
    assert error["type"] == "RegionError"
    assert "outside validated high-temperature region" in error["message"]


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mixture": [{"p": 2, "w": 1.0}], "betta": 0.1}))
    proc = run_cli("simulate", "--config", str(bad), expect=2)
    assert json.loads(proc.stdout)["error"]["type"] == "ValidationError"
    proc = run_cli("theory", "--mixture", "x2:1", expect=2)
    assert json.loads(proc.stdout)["error"]["type"] == "MixtureError"


def test_missing_subcommand_is_a_usage_error():
    proc = subprocess.run(
        [sys.executable, "-m", "sphericalsk.cli"], capture_output=True, text=True
    )
    assert proc.returncode == 2


def test_verify_exits_1_when_finite_size_bias_resolves(tmp_path):
    # at N=5 the asymptotic limits are off by more than the Monte Carlo
    # error of this run, so the z-gate must trip (pinned seed)
    cfg = write_config(
        tmp_path, N=5, n_disorder=12, sweeps=8000, burnin=1000, seed=7
    )
    proc = run_cli("verify", "--config", str(cfg), expect=1)
    report = json.loads(proc.stdout)
    assert report["passed"] is False
    assert any(not row["passed"] for row in report["z_table"])
    assert all(row["passed"] for row in report["oracle_checks"])


# ---------------------------------------------------------------------------
# determinism and round trips


def test_simulate_report_feeds_back_as_config(tmp_path):
    cfg = write_config(tmp_path)
    first = tmp_path / "first.json"
    second = tmp_path / "second.json"
    run_cli("simulate", "--config", str(cfg), "--out", str(first))
    run_cli("simulate", "--config", str(first), "--out", str(second))
    assert first.read_bytes() == second.read_bytes()


def test_verify_is_deterministic_and_passes(tmp_path):
    cfg = write_config(tmp_path, N=32, n_disorder=4, sweeps=2000, burnin=500)
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    run_cli("verify", "--config", str(cfg), "--out", str(a))
    run_cli("verify", "--config", str(cfg), "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["passed"] is True
    assert {row["name"] for row in report["z_table"]} >= set(LIMITS_HEADLINE)


def test_seed_flag_overrides_config_file(tmp_path, capsys):
    cfg = write_config(tmp_path, seed=1)
    report = main_json(capsys, "simulate", "--config", str(cfg), "--seed", "99")
    assert report["config"]["seed"] == 99
    again = main_json(capsys, "simulate", "--config", str(cfg))
    assert again["config"]["seed"] == 1
    assert report["observables"]["f1"]["mean"] != again["observables"]["f1"]["mean"]


def test_dump_flag_writes_readable_samples(tmp_path, capsys):
    cfg = write_config(tmp_path)
    dump = tmp_path / "overlaps.bin"
    report = main_json(capsys, "simulate", "--config", str(cfg), "--dump", str(dump))
    n, samples = read_overlap_dump(dump)
    assert n == 24
    assert samples.shape == (2 * (300 // 10),)
    assert report["observables"]["overlap_mean"]["mean"] == pytest.approx(
        float(samples.mean()), abs=1e-12
    )


def test_simulate_csv_matches_json(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "sim.json"
    run_cli("simulate", "--config", str(cfg), "--out", str(out), "--csv")
    report = json.loads(out.read_text())
    lines = (tmp_path / "sim.csv").read_text().splitlines()
    assert lines[0] == "name,mean,stderr,n_effective"
    rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
    assert float(rows["N_var_R12"][1]) == report["scaled_limits_mc"]["N_var_R12"]["mean"]
    assert float(rows["tail_frequency"][1]) == report["observables"]["tail_frequency"]["mean"]
