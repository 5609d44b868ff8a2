import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from membrane_tree import cli, extremes, greens
from membrane_tree.operators import read_matrix_binary, read_matrix_csv


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- greens --------------------------------------------------------------------


def test_greens_table_m3(tmp_path):
    assert run(tmp_path, "greens", "--m", "3") == 0
    rows = _rows(tmp_path / "greens_m3.csv")
    assert [int(r["d"]) for r in rows] == list(range(11))
    assert float(rows[0]["G_proof"]) == 10.0
    for r in rows:
        assert float(r["abs_proof_minus_series"]) <= 1e-8
        assert abs(float(r["G_proof"]) - float(r["series"])) <= 1e-8
    # the two printed variants of the closed form part ways at d = 1
    assert float(rows[1]["G_statement"]) != float(rows[1]["G_proof"])


def test_greens_m4_json(tmp_path):
    assert run(tmp_path, "greens", "--m", "4", "--max-d", "3", "--format", "json") == 0
    rows = json.loads((tmp_path / "greens_m4.json").read_text())
    assert rows[0]["d"] == 0 and rows[0]["G_proof"] == 3.75
    assert len(rows) == 4


@pytest.mark.parametrize("args", [
    ("greens", "--m", "2"),
    ("greens", "--m", "3", "--max-d", "-1"),
    ("extremes", "--samples", "10"),
    ("extremes", "--law", "nowhere"),
    ("bogus",),
    ("covariance", "--n", "-1"),
])
def test_invalid_arguments_exit_2(tmp_path, args):
    assert run(tmp_path, *args) == 2


# --- covariance ------------------------------------------------------------------


def test_covariance_n0(tmp_path):
    assert run(tmp_path, "covariance", "--m", "3", "--n", "0") == 0
    G = read_matrix_csv(tmp_path / "G_n_m3_n0.csv")
    Gb = read_matrix_csv(tmp_path / "Gbar_n_m3_n0.csv")
    E = read_matrix_csv(tmp_path / "E_n_m3_n0.csv")
    assert G[0, 0] == pytest.approx(0.75) and Gb[0, 0] == pytest.approx(1.0) and E[0, 0] == pytest.approx(0.25)
    s = json.loads((tmp_path / "covariance_m3_n0.json").read_text())
    assert s["finer_bound_violations"] == "skipped: regime"


def test_covariance_binary_matches_dense(tmp_path):
    assert run(tmp_path, "covariance", "--m", "3", "--n", "4", "--format", "binary") == 0
    G = read_matrix_binary(tmp_path / "G_n_m3_n4.bin")
    assert G.shape == (46, 46)
    s = json.loads((tmp_path / "covariance_m3_n4.json").read_text())
    assert s["max_diag_G_n"] == pytest.approx(np.diag(G).max(), rel=1e-12)
    assert s["max_diag_G_n"] <= 10.0
    assert max(s["residual_G_n"], s["residual_Gbar_n"]) <= 1e-8


def test_covariance_dense_and_orbit_summaries_agree(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "covariance", "--m", "4", "--n", "3") == 0
    assert run(b, "covariance", "--m", "4", "--n", "3", "--format", "json") == 0
    sa = json.loads((a / "covariance_m4_n3.json").read_text())
    sb = json.loads((b / "covariance_m4_n3.json").read_text())
    for key in ("variance_floor", "max_diag_G_n", "max_abs_E_n", "crude_fitted_constant"):
        assert sa[key] == pytest.approx(sb[key], rel=1e-9)


def test_covariance_large_m(tmp_path):
    assert run(tmp_path, "covariance", "--m", "25", "--n", "3", "--format", "json") == 0
    s = json.loads((tmp_path / "covariance_m25_n3.json").read_text())
    assert s["finer_bound_violations"] == 0
    assert s["variance_floor"] >= s["variance_floor_bound"] > 0


def test_covariance_cap_exit_3(tmp_path):
    assert run(tmp_path, "covariance", "--m", "25", "--n", "3") == 3


def test_covariance_assertions_off(tmp_path):
    assert run(tmp_path, "covariance", "--m", "25", "--n", "1", "--large-m-assertions", "off") == 0
    s = json.loads((tmp_path / "covariance_m25_n1.json").read_text())
    assert s["finer_bound_violations"] == "skipped: disabled"


# --- extremes ----------------------------------------------------------------------


def test_extremes_byte_identical(tmp_path):
    args = ("extremes", "--m", "3", "--n", "4", "--samples", "2000", "--seed", "7")
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    for name in ("extremes_infinite_m3_n4.json", "extremes_infinite_m3_n4_rescaled_max.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads((tmp_path / "a" / "extremes_infinite_m3_n4.json").read_text())
    assert rep["theta"] == [-1.0, 0.0, 1.0, 2.0]
    for th, lam in zip(rep["theta"], rep["lambda_n"]):
        assert lam == pytest.approx(float(extremes.lambda_n(3, 4, th)), abs=1e-12)
    assert len(_rows(tmp_path / "a" / "extremes_infinite_m3_n4_rescaled_max.csv")) == 2000


def test_extremes_seed_changes_output(tmp_path):
    assert run(tmp_path / "a", "extremes", "--n", "3", "--samples", "500", "--seed", "1") == 0
    assert run(tmp_path / "b", "extremes", "--n", "3", "--samples", "500", "--seed", "2") == 0
    name = "extremes_infinite_m3_n3.json"
    assert (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes()


def test_extremes_finite_law(tmp_path):
    assert run(tmp_path, "extremes", "--n", "3", "--samples", "500", "--law", "finite") == 0
    rep = json.loads((tmp_path / "extremes_finite_m3_n3.json").read_text())
    assert rep["ks"] is None and rep["law"] == "finite_volume"
    assert rep["expected_max_ratio"]["lo"] <= rep["expected_max_ratio"]["est"] <= rep["expected_max_ratio"]["hi"]


def test_extremes_normalized_binary(tmp_path):
    args = ("extremes", "--n", "3", "--samples", "300", "--law", "finite-normalized", "--format", "binary")
    assert run(tmp_path, *args) == 0
    z = read_matrix_binary(tmp_path / "extremes_finite-normalized_m3_n3_rescaled_max.bin")
    assert z.shape == (300, 1)
    rep = json.loads((tmp_path / "extremes_finite-normalized_m3_n3.json").read_text())
    assert len(rep["stein_chen_bound"]) == 4


# --- verify --------------------------------------------------------------------------


@pytest.mark.slow
def test_verify_default_passes(tmp_path):
    assert run(tmp_path, "verify") == 0
    manifest = json.loads((tmp_path / "verify.json").read_text())
    assert manifest["ok"]
    names = [c["name"] for c in manifest["checks"]]
    assert any("m=25" in n for n in names)


def test_verify_m3_skips_large_m(tmp_path, capsys):
    assert run(tmp_path, "verify", "--m", "3", "--n", "4", "--samples", "2000") == 0
    manifest = json.loads((tmp_path / "verify.json").read_text())
    statuses = {c["status"] for c in manifest["checks"]}
    assert "skipped: regime" in statuses and "fail" not in statuses
    assert "skipped: regime" in capsys.readouterr().out


def test_verify_detects_tampered_formula(tmp_path, monkeypatch):
    real = greens.greens_infinite
    monkeypatch.setattr(greens, "greens_infinite", lambda m, d: real(m, d) * (1 + 1e-6))
    assert run(tmp_path, "verify", "--m", "3", "--n", "3", "--samples", "1000") == 1
    manifest = json.loads((tmp_path / "verify.json").read_text())
    assert not manifest["ok"]


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "membrane_tree.cli", "greens", "--m", "5", "--max-d", "2",
                          "--out", str(tmp_path)], capture_output=True)
    assert out.returncode == 0
    assert (tmp_path / "greens_m5.csv").exists()
