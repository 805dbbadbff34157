import csv
import subprocess
import sys

import numpy as np
import pytest

from propml.cli import main
from propml.gbdt import load_model

GEN = ["gen", "--seed", "3", "--area", "200", "--sites", "1", "--ue-density", "40000"]


def _run(*argv):
    assert main([str(a) for a in argv]) == 0


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    _run(*GEN, "--out", d / "city")
    city = d / "city"
    _run("features", "--geo", city, "--sites", city / "sites.csv", "--traces", city / "traces.csv",
         "--out", d / "f.csv")
    _run("train", "--features", d / "f.csv", "--n-estimators", 40, "--out-model", d / "m.json",
         "--report", d / "cv.csv")
    return d


def test_gen_is_byte_reproducible(workdir, tmp_path):
    _run(*GEN, "--out", tmp_path / "again")
    for name in ("dtm.asc", "dhm.asc", "dlu.asc", "geo.json", "sites.csv", "traces.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (workdir / "city" / name).read_bytes()


def test_manifest_lists_outputs_and_seed(workdir):
    text = (workdir / "city.manifest.txt").read_text()
    assert "command: gen" in text and "seed: 3" in text
    assert "traces.csv" in text and "time total:" in text
    text = (workdir / "m.json.manifest.txt").read_text()
    assert f"input: {workdir / 'f.csv'}" in text and f"output: {workdir / 'm.json'}" in text


def test_train_outputs(workdir):
    model = load_model(workdir / "m.json")
    assert len(model.trees) == 40
    rows = list(csv.DictReader(open(workdir / "cv.csv")))
    assert [r["fold"] for r in rows] == ["0", "1", "2", "3", "4", "mean", "std"]


def test_train_is_seed_reproducible(workdir, tmp_path):
    _run("train", "--features", workdir / "f.csv", "--n-estimators", 40, "--out-model", tmp_path / "m.json")
    assert (tmp_path / "m.json").read_bytes() == (workdir / "m.json").read_bytes()


def test_predict_grid_map(workdir, tmp_path):
    city = workdir / "city"
    _run("predict", "--model", workdir / "m.json", "--geo", city, "--sites", city / "sites.csv", "--grid",
         "--bin-width", 2, "--out-csv", tmp_path / "g.csv", "--out-pgm", tmp_path / "g.pgm")
    rows = list(csv.DictReader(open(tmp_path / "g.csv")))
    assert len(rows) == 100 * 100
    assert len({(r["bin_ix"], r["bin_iy"]) for r in rows}) == 10_000
    tokens = (tmp_path / "g.pgm").read_text().split()
    assert tokens[:4] == ["P2", "100", "100", "255"] and len(tokens) == 4 + 10_000


def test_predict_points_and_empirical(workdir, tmp_path):
    city = workdir / "city"
    (tmp_path / "p.csv").write_text("x,y,cell_id\n50.5,60.2,s0c0\n150.1,20.3,s0c1\n")
    _run("predict", "--model", workdir / "m.json", "--geo", city, "--sites", city / "sites.csv",
         "--points", tmp_path / "p.csv", "--out-csv", tmp_path / "out.csv")
    rows = list(csv.DictReader(open(tmp_path / "out.csv")))
    assert len(rows) == 2 and all(-200 < float(r["rss_dbm"]) < 0 for r in rows)
    _run("empirical", "--model-name", "cost-hata", "--geo", city, "--sites", city / "sites.csv",
         "--points", tmp_path / "p.csv", "--out", tmp_path / "e.csv")
    assert len(list(csv.DictReader(open(tmp_path / "e.csv")))) == 2


def test_compare_gbdt_beats_empirical(workdir, tmp_path, capsys):
    city = workdir / "city"
    _run("compare", "--geo", city, "--sites", city / "sites.csv", "--traces", city / "traces.csv",
         "--report", tmp_path / "c.csv")
    rows = list(csv.DictReader(open(tmp_path / "c.csv")))
    gbdt = [float(r["rmse"]) for r in rows if r["model"] == "gbdt"]
    emp = [float(r["rmse"]) for r in rows if r["model"] in ("cost-hata", "sui", "spm")]
    assert gbdt and emp and gbdt[0] < min(emp)
    assert "gbdt rmse" in capsys.readouterr().out


def test_tune_explain_bench(workdir, tmp_path):
    f = workdir / "f.csv"
    _run("tune", "--features", f, "--strategy", "random", "--budget", 2, "--folds", 3, "--report", tmp_path / "t.csv")
    assert len(list(csv.DictReader(open(tmp_path / "t.csv")))) == 2
    _run("explain", "--model", workdir / "m.json", "--features", f, "--top-k", 3, "--folds", 3,
         "--out-dir", tmp_path / "x")
    for name in ("shap.csv", "shap_summary.csv", "dependence.csv", "lighter_model.csv"):
        assert (tmp_path / "x" / name).stat().st_size > 0
    (tmp_path / "cfg.json").write_text('{"n_estimators": 20}')
    _run("bench", "--features", f, "--config", tmp_path / "cfg.json", "--folds", 3, "--report", tmp_path / "b.csv")
    assert [r["model"] for r in csv.DictReader(open(tmp_path / "b.csv"))] == ["gbdt", "linear", "knn"]


def test_module_error_exit_one(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    code = main(["train", "--features", str(tmp_path / "bad.csv"), "--out-model", str(tmp_path / "m.json")])
    err = capsys.readouterr().err
    assert code == 1 and err.startswith("propml train: error:") and err.count("\n") == 1


def test_missing_file_exit_one(tmp_path, capsys):
    assert main(["train", "--features", str(tmp_path / "none.csv"), "--out-model", str(tmp_path / "m")]) == 1


def test_unknown_flag_exit_two():
    proc = subprocess.run([sys.executable, "-m", "propml.cli", "gen", "--out", "x", "--bogus"],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "--bogus" in proc.stderr
