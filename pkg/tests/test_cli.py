import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from lcarsc.cli import main
from lcarsc.dataio import AtomicWriter, DataError, load_response, matrix_csv
from lcarsc.harness import toy_instance
from lcarsc.metrics import clustering_error
from lcarsc.model import Labeling, sample_synthetic
from lcarsc.schemas import DIAGNOSE, EXPERIMENT, FIT, SELECT_K, TOY


@pytest.fixture
def toy_file(tmp_path):
    model, r = toy_instance(0)
    path = tmp_path / "toy.csv"
    path.write_text(matrix_csv(r.entries))
    return model, path


class TestLoading:
    def test_dense(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("1,2\n0,3\n")
        assert load_response(p, "dense-csv", 3).entries.tolist() == [[1, 2], [0, 3]]

    def test_sparse(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("i,j,value\n1,2,5\n")
        r = load_response(p, "sparse-triplet-csv", 5, n_rows=2, n_cols=3)
        assert r.entries.tolist() == [[0, 5, 0], [0, 0, 0]]
        assert load_response(p, "sparse-triplet-csv", 5).shape == (1, 2)

    @pytest.mark.parametrize("fmt,text,match", [
        ("dense-csv", "1,2\n0,6\n", r"\(2,2\)"),
        ("dense-csv", "1,2\n0\n", "line 2"),
        ("dense-csv", "1,x\n", "line 1"),
        ("dense-csv", "", "no data"),
        ("sparse-triplet-csv", "i,j,value\n2,3,6\n", r"\(2,3\)"),
        ("sparse-triplet-csv", "i,j,value\n1,1,2\n1,1,3\n", "duplicate"),
        ("sparse-triplet-csv", "1,1,2\n", "header"),
        ("sparse-triplet-csv", "i,j,value\n0,1,2\n", "1-based"),
        ("sparse-triplet-csv", "i,j,value\n1,1\n", "line 2"),
    ])
    def test_errors(self, tmp_path, fmt, text, match):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(DataError, match=match):
            load_response(p, fmt, 5)

    def test_declared_dims_too_small(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("i,j,value\n3,1,1\n")
        with pytest.raises(DataError, match="exceeds"):
            load_response(p, "sparse-triplet-csv", 5, n_rows=2, n_cols=2)

    def test_memory_budget(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("i,j,value\n1,1,1\n")
        with pytest.raises(DataError, match="budget"):
            load_response(p, "sparse-triplet-csv", 5, n_rows=10**6, n_cols=10**6)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DataError):
            load_response(tmp_path / "x", "parquet", 5)


class TestAtomicWriter:
    def test_failure_leaves_nothing(self, tmp_path):
        with pytest.raises(RuntimeError):
            with AtomicWriter() as w:
                w.add(tmp_path / "a.txt", "x")
                raise RuntimeError
        assert list(tmp_path.iterdir()) == []

    def test_commit(self, tmp_path):
        with AtomicWriter() as w:
            w.add(tmp_path / "sub" / "a.txt", "x")
            assert not (tmp_path / "sub" / "a.txt").exists()
        assert (tmp_path / "sub" / "a.txt").read_text() == "x"
        assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.txt"]


class TestFit:
    @pytest.mark.parametrize("method", ["rsc", "rscn", "rscors", "pca", "rmk", "rlmk"])
    def test_recovers_labels(self, toy_file, tmp_path, method):
        model, path = toy_file
        out = tmp_path / "fit.json"
        code = main(["fit", "--input", str(path), "--m-levels", "3", "--k", "2", "--method", method,
                     "--output", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, FIT)
        est = Labeling.from_one_based(doc["labels"], 2)
        assert clustering_error(model.labeling, est) == 0
        assert doc["tau"] == (48.0 if method not in ("pca", "rmk") else None)

    def test_stdout_and_tau(self, toy_file, capsys):
        _, path = toy_file
        assert main(["fit", "--input", str(path), "--m-levels", "3", "--k", "2", "--tau", "10"]) == 0
        assert json.loads(capsys.readouterr().out)["tau"] == 10.0

    def test_missing_k(self, toy_file, capsys):
        _, path = toy_file
        assert main(["fit", "--input", str(path), "--m-levels", "3"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_bad_method(self, toy_file):
        _, path = toy_file
        assert main(["fit", "--input", str(path), "--m-levels", "3", "--k", "2", "--method", "em"]) == 2

    def test_k_too_large(self, toy_file):
        _, path = toy_file
        assert main(["fit", "--input", str(path), "--m-levels", "3", "--k", "11"]) == 2

    def test_data_errors(self, tmp_path, toy_file):
        _, path = toy_file
        out = tmp_path / "fit.json"
        assert main(["fit", "--input", str(path), "--m-levels", "2", "--k", "2", "--output", str(out)]) == 3
        assert main(["fit", "--input", str(tmp_path / "missing.csv"), "--m-levels", "3", "--k", "2"]) == 3
        assert not out.exists()

    def test_estimation_error(self, toy_file, tmp_path):
        _, path = toy_file
        out = tmp_path / "fit.json"
        assert main(["fit", "--input", str(path), "--m-levels", "3", "--k", "1", "--method", "rscors",
                     "--output", str(out)]) == 4
        assert not out.exists()


class TestSelectK:
    def test_recovers_k(self, toy_file, tmp_path):
        _, path = toy_file
        out, table = tmp_path / "k.json", tmp_path / "k.csv"
        assert main(["select-k", "--input", str(path), "--m-levels", "3", "--k-max", "5",
                     "--output", str(out), "--csv", str(table)]) == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, SELECT_K)
        assert doc["k_hat"] == 2
        lines = table.read_text().splitlines()
        assert lines[0] == "k,Q" and lines[1] == "1,0.0" and len(lines) == 6

    def test_all_zero(self, tmp_path):
        p = tmp_path / "z.csv"
        p.write_text("0,0\n0,0\n")
        assert main(["select-k", "--input", str(p), "--m-levels", "1"]) == 3


class TestSimulate:
    def test_round_trip(self, tmp_path):
        prefix = tmp_path / "sim"
        assert main(["simulate", "--n", "50", "--j", "10", "--k", "3", "--m-levels", "4", "--rho", "2",
                     "--seed", "7", "--output-prefix", str(prefix)]) == 0
        labeling, items, r = sample_synthetic(50, 10, 3, 4, 2.0, 7)
        assert np.array_equal(load_response(f"{prefix}_R.csv", "dense-csv", 4).entries, r.entries)
        labels = [int(x) for x in (tmp_path / "sim_labels.csv").read_text().split()]
        assert labels == labeling.one_based()
        theta = np.loadtxt(tmp_path / "sim_theta.csv", delimiter=",")
        assert np.array_equal(theta, items.theta)

    @pytest.mark.parametrize("rho", ["0", "5"])
    def test_invalid(self, tmp_path, rho):
        assert main(["simulate", "--n", "50", "--j", "10", "--k", "3", "--m-levels", "4", "--rho", rho,
                     "--output-prefix", str(tmp_path / "s")]) == 2
        assert list(tmp_path.iterdir()) == []


class TestExperiment:
    def test_toy(self, tmp_path):
        assert main(["experiment", "--experiment", "4", "--output-dir", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "toy_report.json").read_text())
        jsonschema.validate(doc, TOY)
        assert all(row["k_hat"] == 2 and row["clustering_error"] == 0 for row in doc["table"])
        assert (tmp_path / "toy_Z.csv").read_text().count("\n") == 16
        assert len(list(tmp_path.glob("toy_theta_hat_*.csv"))) == 6

    def test_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"n_values": [60], "rho_values": [1.0], "k": 2, "m_levels": 3,
                                   "methods": ["rsc", "rmk"], "k_max": 3}))
        out = tmp_path / "out"
        assert main(["experiment", "--config", str(cfg), "--reps", "2", "--seed", "3",
                     "--output-dir", str(out)]) == 0
        doc = json.loads((out / "report.json").read_text())
        jsonschema.validate(doc, EXPERIMENT)
        assert doc["config"]["repetitions"] == 2 and doc["config"]["seed"] == 3
        assert (out / "report.csv").read_text().count("\n") == 3

    @pytest.mark.parametrize("body", ['{"n_values": [61]}', '{"oops": 1}', "not json"])
    def test_bad_config(self, tmp_path, body):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(body)
        assert main(["experiment", "--config", str(cfg), "--output-dir", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()


class TestDiagnose:
    def test_explicit_model(self, tmp_path):
        prefix = tmp_path / "d"
        assert main(["diagnose", "--n", "100", "--j", "20", "--k", "2", "--m-levels", "3", "--rho", "1",
                     "--tau-grid", "0.5,1,2", "--output-prefix", str(prefix)]) == 0
        doc = json.loads((tmp_path / "d_diagnostics.json").read_text())
        jsonschema.validate(doc, DIAGNOSE)
        assert [p["tau"] for p in doc["curve"]] == [150.0, 300.0, 600.0]
        assert (tmp_path / "d_ratio.csv").read_text().splitlines()[0] == "tau,ratio,epsilon_tau"

    def test_absolute_grid(self, tmp_path):
        prefix = tmp_path / "d"
        assert main(["diagnose", "--n", "100", "--j", "20", "--k", "2", "--m-levels", "3", "--rho", "1",
                     "--tau-grid", "0,10", "--absolute-tau", "--output-prefix", str(prefix)]) == 0

    @pytest.mark.parametrize("grid", ["", "a,b", "-1,2", "0,1"])
    def test_bad_grid(self, tmp_path, grid):
        assert main(["diagnose", "--figure1", "--tau-grid", grid, "--output-prefix", str(tmp_path / "d")]) == 2

    def test_missing_model_params(self, tmp_path):
        assert main(["diagnose", "--n", "100", "--output-prefix", str(tmp_path / "d")]) == 2


def test_module_entry_point(toy_file):
    _, path = toy_file
    proc = subprocess.run([sys.executable, "-m", "lcarsc", "fit", "--input", str(path), "--m-levels", "3",
                           "--k", "2"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["kind"] == "fit"
    proc = subprocess.run([sys.executable, "-m", "lcarsc", "fit"], capture_output=True, text=True)
    assert proc.returncode == 2
