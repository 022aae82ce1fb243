import csv
import json
import shutil

import numpy as np
import pytest

from censored_areal import cli
from censored_areal.errors import NumericalFailure

SHORT = ["--iters", "80", "--burnin", "20", "--thin", "2", "--seed", "5", "--threads", "1"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_toy_writes_chain_files(tmp_path, capsys):
    out = tmp_path / "fit"
    assert cli.main(["fit", "--bundled", "toy", "--out", str(out), *SHORT]) == 0
    for c in (1, 2, 3):
        assert (out / f"chain_{c}.csv").exists()
        assert (out / f"imputations_{c}.csv").exists()
    meta = json.loads((out / "fit.json").read_text())
    assert meta["config"]["run"]["chains"] == 3
    params = [r["param"] for r in _rows(out / "summary.csv")]
    assert params[:2] == ["beta_0", "beta_1"] and "tau2" in params
    assert "beta_0" in capsys.readouterr().out


def test_fit_predict_diagnose_round(tmp_path):
    fit = tmp_path / "fit"
    assert cli.main(["fit", "--bundled", "toy", "--holdout-last", "2", "--center-covariates",
                     "--out", str(fit), *SHORT]) == 0
    before = {p.name: p.read_bytes() for p in fit.iterdir()}
    pred = tmp_path / "pred.csv"
    assert cli.main(["predict", "--fit", str(fit), "--out", str(pred)]) == 0
    rows = _rows(pred)
    assert len(rows) == 2 * 2 and rows[0]["observed"] != ""
    side = json.loads(pred.with_suffix(".csv.json").read_text())
    assert "sqrt_mspe" in side and 0 <= side["coverage"] <= 1
    diag = tmp_path / "diag"
    assert cli.main(["diagnose", "--fit", str(fit), "--out", str(diag), "--max-lag", "5",
                     "--permutations", "49"]) == 0
    report = json.loads((diag / "diagnostics.json").read_text())
    assert {"dic", "eaic", "ebic"} <= set(report["criteria"])
    # two sites: too few regions for Moran's I
    assert (diag / "response_acf.csv").exists() and not (diag / "morans_i.csv").exists()
    assert {p.name: p.read_bytes() for p in fit.iterdir()} == before


def test_beijing_holdout_shape(tmp_path):
    out = tmp_path / "bj"
    args = ["fit", "--bundled", "beijing", "--covariates", "TEMP,WSPM,PRES", "--log-response",
            "--center-covariates", "--holdout-last", "6", "--chains", "1", "--iters", "30",
            "--burnin", "10", "--thin", "1", "--out", str(out)]
    assert cli.main(args) == 0
    shape = json.loads((out / "fit.json").read_text())["shape"]
    assert (shape["train_cells"], shape["test_cells"]) == (2208, 72)


def test_study_preset_single_replicate(tmp_path):
    out = tmp_path / "study"
    assert cli.main(["study", "--preset", "table4.1-desk", "--replicates", "1", "--threads", "1",
                     "--out", str(out)]) == 0
    rows = _rows(out / "coverage.csv")
    assert list(rows[0]) == ["parameter", "NST-CLG", "LOD", "LOD2"]
    assert {r["parameter"] for r in rows} >= {"beta_1", "beta_2", "rho", "tau2", "sigma2"}


def test_simulate_writes_panel(tmp_path):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--preset", "table4.1-desk", "--replicate", "2", "--out", str(out)]) == 0
    side = json.loads((out / "simulate.json").read_text())
    assert side["censored"] == 12 and side["missing"] == 3
    assert len(side["y_true"]) == 81


def test_exit_codes(tmp_path, monkeypatch):
    # 2: configuration problems
    assert cli.main(["fit", "--out", str(tmp_path / "a")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"colour": 1}}')
    assert cli.main(["fit", "--bundled", "toy", "--config", str(bad), "--out", str(tmp_path / "b")]) == 2
    assert cli.main(["fit", "--data", str(tmp_path / "none.csv"), "--graph", str(tmp_path / "none.txt"),
                     "--out", str(tmp_path / "c")]) == 2
    # 3: data problems
    data = tmp_path / "d.csv"
    data.write_text("site,time,value,status\nnorth,1,oops,observed\n")
    graph = tmp_path / "g.txt"
    graph.write_text("north south\n")
    assert cli.main(["fit", "--data", str(data), "--graph", str(graph), "--out", str(tmp_path / "d")]) == 3

    # 4: numerical failure
    def boom(*a, **k):
        raise NumericalFailure("matrix not positive definite")
    monkeypatch.setattr(cli, "gibbs_fit", boom)
    assert cli.main(["fit", "--bundled", "toy", "--out", str(tmp_path / "e"), *SHORT]) == 4


def test_fit_is_repeatable(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert cli.main(["fit", "--bundled", "toy", "--out", str(out), *SHORT]) == 0
    assert sorted(p.name for p in a.iterdir()) == sorted(p.name for p in b.iterdir())
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name
