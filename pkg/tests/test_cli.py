import csv
import json
import os

import numpy as np
import pytest

from debias_bench import cli, harness
from debias_bench.core import read_dataset, read_matrix
from debias_bench.recommenders import TrainingDiverged

SMALL = ["--num-users", "30", "--num-items", "25"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestGen:
    def test_truth_and_observed(self, tmp_path, capsys):
        code, _ = run(capsys, "gen", *SMALL, "--seed", 7, "--beta", 1, "--quantization", 3, "--out", tmp_path)
        assert code == 0
        R = read_matrix(tmp_path / "truth.csv")
        assert R.shape == (30, 25)
        D = read_dataset(tmp_path / "observed.csv")
        assert D.shape == (30, 25)
        assert set(np.unique(D.values)) <= {0.0, 0.5, 1.0}

    def test_default_dims(self, tmp_path, capsys):
        code, out = run(capsys, "gen", "--dataset", "latent-factors", "--seed", 7, "--out", tmp_path)
        assert code == 0
        assert read_matrix(tmp_path / "truth.csv").shape == (1000, 1000)
        assert not (tmp_path / "observed.csv").exists()

    def test_ml100k_dims(self, tmp_path, capsys, ml100k_file):
        code, _ = run(capsys, "gen", "--dataset", "ml100k", "--input", ml100k_file, "--out", tmp_path)
        assert code == 0
        assert read_matrix(tmp_path / "truth.csv").shape == (944, 1683)

    def test_ml100k_without_input(self, tmp_path, capsys):
        code, out = run(capsys, "gen", "--dataset", "ml100k", "--out", tmp_path)
        assert code == 2
        assert "--input" in out.err

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code, out = run(capsys, "gen", *SMALL, "--out", blocker / "sub")
        assert code == 2
        assert "not writable" in out.err


class TestSweep:
    def test_single_beta_rows(self, tmp_path, capsys):
        code, _ = run(capsys, "sweep", *SMALL, "--trials", 1, "--betas", 0, "--out", tmp_path, "--jobs", 1)
        assert code == 0
        rows = read_rows(tmp_path / "sweep.csv")
        assert len(rows) == 9
        assert list(rows[0]) == list(harness.CSV_HEADER)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert len(summary["groups"]) == 9

    def test_rerun_byte_identical(self, tmp_path, capsys):
        args = ["sweep", *SMALL, "--trials", 2, "--betas", "0,2", "--quantizations", "2",
                "--algorithms", "user-knn,svd-mf", "--seed", 11, "--jobs", 1]
        assert run(capsys, *args, "--out", tmp_path / "a")[0] == 0
        assert run(capsys, *args, "--out", tmp_path / "b")[0] == 0
        for name in ("sweep.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_plot_data(self, tmp_path, capsys):
        code, _ = run(capsys, "sweep", *SMALL, "--trials", 1, "--betas", 0, "--quantizations", 2,
                      "--algorithms", "item-knn", "--emit-plot-data", "--out", tmp_path)
        assert code == 0
        rows = read_rows(tmp_path / "figure1.csv")
        assert len(rows) == 2 * 4
        assert {r["stat"] for r in rows} == {"q25", "median", "q75", "mean"}

    def test_failure_exit_code_leaves_no_summary(self, tmp_path, capsys, monkeypatch):
        def boom(*a, **k):
            raise TrainingDiverged(3, float("nan"))
        monkeypatch.setattr(harness, "train_ips_mf", boom)
        code, out = run(capsys, "sweep", *SMALL, "--trials", 1, "--betas", 0, "--algorithms", "svd-mf",
                        "--out", tmp_path)
        assert code == 1
        assert "algorithm=svd-mf" in out.err
        assert not (tmp_path / "summary.json").exists()
        assert not (tmp_path / "sweep.csv").exists()


class TestCompare:
    def test_default_models(self, tmp_path, capsys):
        code, out = run(capsys, "compare", *SMALL, "--out", tmp_path, "--jobs", 1)
        assert code == 0
        rows = read_rows(tmp_path / "compare.csv")
        assert len(rows) == 20
        assert "NBPE-MF" in out.out

    def test_single_model(self, tmp_path, capsys):
        code, _ = run(capsys, "compare", *SMALL, "--models", "MF", "--out", tmp_path, "--jobs", 1)
        assert code == 0
        rows = read_rows(tmp_path / "compare.csv")
        assert len(rows) == 5 and {r["model"] for r in rows} == {"MF"}

    def test_plot_data(self, tmp_path, capsys):
        code, _ = run(capsys, "compare", *SMALL, "--trials", 1, "--models", "MF,NBPE-MF",
                      "--marginal", "literal", "--mix-scheme", "cond-mean", "--emit-plot-data",
                      "--out", tmp_path)
        assert code == 0
        assert len(read_rows(tmp_path / "table1.csv")) == 2 * 2 * 4

    def test_bad_model_is_usage_error(self, tmp_path, capsys):
        code, out = run(capsys, "compare", *SMALL, "--models", "XYZ", "--out", tmp_path)
        assert code == 2
        assert "XYZ" in out.err


class TestSettings:
    def test_key_value_file(self, tmp_path, capsys):
        cfg = tmp_path / "run.conf"
        cfg.write_text("# small run\nnum-users = 30\nnum_items = 25\ntrials = 1\nmodels = MF, NPE-MF\nseed = 5\n")
        code, _ = run(capsys, "compare", "--config", cfg, "--out", tmp_path)
        assert code == 0
        rows = read_rows(tmp_path / "compare.csv")
        assert [r["model"] for r in rows] == ["MF", "NPE-MF"]
        assert json.loads((tmp_path / "summary.json").read_text())["seed"] == 5

    def test_json_file_and_flag_override(self, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"num_users": 30, "num_items": 25, "trials": 3, "models": ["MF"]}))
        code, _ = run(capsys, "compare", "--config", cfg, "--trials", 1, "--out", tmp_path)
        assert code == 0
        assert len(read_rows(tmp_path / "compare.csv")) == 1

    def test_env_seed_fallback(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.SEED_ENV, "42")
        s = cli.resolve(cli.build_parser().parse_args(["gen"]))
        assert s["seed"] == 42
        s = cli.resolve(cli.build_parser().parse_args(["gen", "--seed", "3"]))
        assert s["seed"] == 3

    def test_bad_config_line(self, tmp_path, capsys):
        cfg = tmp_path / "bad.conf"
        cfg.write_text("trials 3\n")
        code, out = run(capsys, "compare", "--config", cfg, "--out", tmp_path)
        assert code == 2 and "bad.conf:1" in out.err

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["sweep", "--no-such-flag"])
        assert exc.value.code == 2

    @pytest.mark.parametrize("command, flags", [
        ("gen", ["--dataset", "--input", "--seed", "--beta", "--quantization", "--rho", "--noise-std",
                 "--out", "--jobs", "--config"]),
        ("sweep", ["--dataset", "--input", "--seed", "--betas", "--quantizations", "--rho", "--trials",
                   "--noise-std", "--out", "--jobs", "--emit-plot-data", "--algorithms"]),
        ("compare", ["--dataset", "--input", "--seed", "--beta", "--quantization", "--rho", "--trials",
                     "--noise-std", "--models", "--mix-scheme", "--marginal", "--out", "--jobs",
                     "--emit-plot-data"]),
    ])
    def test_help_documents_flags(self, capsys, command, flags):
        with pytest.raises(SystemExit):
            cli.main([command, "--help"])
        text = capsys.readouterr().out
        for flag in flags:
            assert flag in text
