import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from kppqsd import io
from kppqsd.cli import main

MODELS = Path(__file__).resolve().parents[1] / "models"


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def summary(tmp_path):
    return io.read_json(tmp_path / "summary.json")


def test_seed_is_mandatory(tmp_path, capsys):
    assert run(tmp_path, "gamma") == 2
    assert "--seed" in capsys.readouterr().err


def test_unknown_command_and_bad_args(tmp_path):
    assert run(tmp_path, "nope", "--seed", "1") == 2
    assert run(tmp_path, "gamma", "--seed", "1", "--threads", "0") == 2
    assert run(tmp_path, "gamma", "--seed", "1", "--model", str(tmp_path / "missing.json")) == 2


def test_invalid_model_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"b": 0.0}))
    assert run(tmp_path, "gamma", "--seed", "1", "--model", str(bad)) == 2


def test_gamma_brownian_values(tmp_path):
    assert run(tmp_path, "gamma", "--seed", "1", "--alpha", "0,0.5,1,2", "--r", "0.5,2") == 0
    cols, meta = io.read_table(tmp_path / "gamma.csv")
    assert cols["alpha"].tolist() == [0.0, 0.5, 1.0, 2.0]
    assert np.allclose(cols["gamma"], [0.0, 0.125, 0.5, 2.0], atol=1e-10)
    assert np.allclose(cols["gamma"], cols["gamma_dual"], atol=1e-10)
    inv, _ = io.read_table(tmp_path / "gamma_inverse.csv")
    assert np.allclose(inv["c"], [1.0, 2.0], atol=1e-8)
    assert meta["seed"] == 1 and len(meta["config_hash"]) == 16
    s = summary(tmp_path)
    assert s["passed"] and s["items"]["symmetric_columns_equal"]["passed"]


def test_gamma_jump_model(tmp_path):
    assert run(tmp_path, "gamma", "--seed", "1", "--model", str(MODELS / "discrete_jumps.json")) == 0
    cols, _ = io.read_table(tmp_path / "gamma.csv")
    assert np.all(cols["gamma"] >= 0) and cols["gamma"][0] == pytest.approx(0.0, abs=1e-10)
    assert "symmetric_columns_equal" not in summary(tmp_path)["items"]


def test_refuses_to_overwrite_without_force(tmp_path):
    assert run(tmp_path, "gamma", "--seed", "1") == 0
    before = (tmp_path / "gamma.csv").read_text()
    assert run(tmp_path, "gamma", "--seed", "2") == 2
    assert (tmp_path / "gamma.csv").read_text() == before
    assert run(tmp_path, "gamma", "--seed", "2", "--force") == 0
    assert summary(tmp_path)["seed"] == 2


def test_config_hash_tracks_arguments(tmp_path):
    run(tmp_path / "a", "gamma", "--seed", "1")
    run(tmp_path / "b", "gamma", "--seed", "1")
    run(tmp_path / "c", "gamma", "--seed", "1", "--r", "0.7")
    h = [summary(tmp_path / k)["config_hash"] for k in "abc"]
    assert h[0] == h[1] != h[2]


def test_qsd_non_existence_is_a_classification(tmp_path, capsys):
    assert run(tmp_path, "qsd", "--seed", "1", "--c", "1", "--r", "0.8") == 0
    assert "non-existence" in capsys.readouterr().out
    s = summary(tmp_path)
    assert s["items"]["existence_classification"]["regime"] == "non-existence"
    assert not (tmp_path / "qsd.csv").exists()


def test_qsd_existence(tmp_path):
    code = run(tmp_path, "qsd", "--seed", "3", "--c", "1", "--r", "0.5", "--points", "400",
               "--ladder-paths", "2000", "--verify-paths", "20000", "--dt", "0.02")
    s = summary(tmp_path)
    assert code == 0, s
    cols, meta = io.read_table(tmp_path / "qsd.csv")
    assert cols["x"].size == 400 and meta["seed"] == 3
    assert s["items"]["closed_form_ks"]["passed"]


def test_phase_small_grid(tmp_path):
    assert run(tmp_path, "phase", "--seed", "4", "--c", "1", "--r", "0.2,0.9", "--runs", "40",
               "--cap", "5000") == 0
    cols, meta = io.read_table(tmp_path / "phase.csv")
    assert cols["classification"].tolist() == ["extinct", "survives"]
    assert meta["boundary"]["1.0"] == pytest.approx(0.5)


def test_yaglom_small(tmp_path):
    assert run(tmp_path, "yaglom", "--seed", "5", "--c", "1", "--t", "1,3", "--paths", "5000",
               "--dt", "0.05") in (0, 1)
    for t in ("1", "3"):
        cols, meta = io.read_table(tmp_path / f"yaglom_t{t}.csv")
        assert np.all(np.diff(cols["cdf"]) >= 0) and meta["t"] == float(t)
    assert "ks_trend_nonincreasing" in summary(tmp_path)["items"]


def test_front_small(tmp_path):
    assert run(tmp_path, "front", "--seed", "6", "--r", "2", "--T", "20", "--dx", "0.1",
               "--domain=-20,80") == 0
    cols, _ = io.read_table(tmp_path / "front_trace.csv")
    assert np.all(np.diff(cols["front"]) > 0)
    assert summary(tmp_path)["items"]["speed_vs_gamma_inverse"]["target"] == pytest.approx(2.0)


def test_front_bad_domain(tmp_path):
    assert run(tmp_path, "front", "--seed", "6", "--r", "1", "--domain=5,1") == 2


def test_tw_small(tmp_path):
    assert run(tmp_path, "tw", "--seed", "7", "--c", str(math.sqrt(2)), "--r", "1", "--top", "2",
               "--dx", "0.25", "--runs", "300", "--mckean-runs", "0") == 0
    cols, meta = io.read_table(tmp_path / "wave.csv")
    assert np.all(np.diff(cols["w"]) >= 0) and meta["seed"] == 7


def test_check_quick_only(tmp_path, capsys):
    assert run(tmp_path, "check", "--seed", "0", "--quick", "--only", "1,6") == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2
    doc = io.read_json(tmp_path / "check_summary.json")
    assert doc["profile"] == "quick" and [i["id"] for i in doc["items"]] == [1, 6]
    assert run(tmp_path, "check", "--seed", "0", "--quick", "--only", "1", "--force") == 0
    assert run(tmp_path, "check", "--seed", "0", "--only", "99", "--force") == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kppqsd", "gamma", "--seed", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "gamma.csv").exists()
    proc = subprocess.run([sys.executable, "-m", "kppqsd", "gamma"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_check_results_are_plain_and_digestible():
    from kppqsd import checks
    res = [checks.run_check(i, checks.QUICK, 0) for i in (1, 6)]
    assert all(type(r.passed) is bool for r in res)
    assert checks.summary_digest(res) == checks.summary_digest([checks.run_check(i, checks.QUICK, 0) for i in (1, 6)])
