import json

import numpy as np
import pytest

from splinecop.cli import main, read_config_file, read_csv_columns, write_csv
from splinecop.copula import save_model
from splinecop.sample import SamplerConfig, rejection_sample
from splinecop.studies import fixture_models


@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.json"
    save_model(fixture_models()["sparse"], path)
    return str(path)


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    draws, _ = rejection_sample(fixture_models()["sparse"], 300, SamplerConfig(seed=51))
    path = tmp_path_factory.mktemp("data") / "draws.csv"
    write_csv(path, ["u1", "u2"], draws)
    return str(path)


class TestCsvIo:
    def test_missing_header_detected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("")
        from splinecop.cli import UsageError

        with pytest.raises(UsageError):
            read_csv_columns(str(path), None)

    def test_non_numeric_cell_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1.0,2.0\n3.0,oops\n")
        from splinecop.cli import UsageError

        with pytest.raises(UsageError, match=":3:"):
            read_csv_columns(str(path), ["x", "y"])

    def test_missing_cell_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1.0,2.0\n3.0\n")
        from splinecop.cli import UsageError

        with pytest.raises(UsageError, match=":3:"):
            read_csv_columns(str(path), ["x", "y"])

    def test_column_selection(self, tmp_path):
        path = tmp_path / "ok.csv"
        path.write_text("a,b,c\n1,2,3\n4,5,6\n")
        out = read_csv_columns(str(path), ["c", "a"])
        assert np.array_equal(out, [[3.0, 1.0], [6.0, 4.0]])

    def test_seventeen_digit_round_trip(self, tmp_path):
        path = tmp_path / "vals.csv"
        vals = np.random.default_rng(1).uniform(size=(50, 2))
        write_csv(path, ["u1", "u2"], vals)
        back = read_csv_columns(str(path), ["u1", "u2"])
        assert np.array_equal(back, vals)


class TestConfigFile:
    def test_parse_and_override(self, tmp_path, data_file):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nalpha = 0.1\nbeta = 3.0\nseed = 7\n")
        parsed = read_config_file(str(cfg))
        assert parsed == {"alpha": "0.1", "beta": "3.0", "seed": "7"}
        out = tmp_path / "out"
        rc = main(["fit", data_file, "--size", "4,5", "--pseudo", "identity",
                   "--config", str(cfg), "--alpha", "0.2", "--out", str(out)])
        assert rc == 0
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["alpha"] == 0.2  # flag wins
        assert resolved["seed"] == 7  # file value applied

    def test_bad_config_line(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("alpha 0.1\n")
        from splinecop.cli import UsageError

        with pytest.raises(UsageError):
            read_config_file(str(cfg))


class TestFitCommand:
    def test_fit_writes_model_and_report(self, tmp_path, data_file):
        out = tmp_path / "fit"
        rc = main(["fit", data_file, "--cols", "u1,u2", "--size", "4,5",
                   "--alpha", "0.1", "--beta", "3", "--pseudo", "identity",
                   "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "fit_report.json").read_text())
        assert report["converged"] is True
        assert len(report["params"]) == 20
        assert (out / "model.json").exists()

    def test_alpha_zero_trajectories_match(self, tmp_path, data_file):
        out = tmp_path / "fit0"
        rc = main(["fit", data_file, "--size", "4,5", "--alpha", "0",
                   "--pseudo", "identity", "--out", str(out)])
        assert rc == 0
        report = json.loads((out / "fit_report.json").read_text())
        assert report["lp_trajectory"] == report["lpstar_trajectory"]

    def test_tiny_input_is_usage_error(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("x,y\n0.1,0.2\n")
        rc = main(["fit", str(path), "--size", "4,5", "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_nonconvergence_exit_code(self, tmp_path, data_file):
        out = tmp_path / "fitshort"
        rc = main(["fit", data_file, "--size", "4,5", "--alpha", "0",
                   "--pseudo", "identity", "--max-iters", "3", "--out", str(out)])
        assert rc == 3

    def test_round_trip_model_density(self, tmp_path, data_file, model_file):
        out = tmp_path / "fit2"
        main(["fit", data_file, "--size", "4,5", "--alpha", "0.1",
              "--pseudo", "identity", "--out", str(out)])
        from splinecop.copula import density, load_model

        reloaded = load_model(out / "model.json")
        pts = np.random.default_rng(2).uniform(size=(100, 2))
        first = density(reloaded, pts)
        again = density(load_model(out / "model.json"), pts)
        assert np.array_equal(first, again)


class TestSampleCommand:
    def test_sample_and_stats(self, tmp_path, model_file):
        out = tmp_path / "s"
        rc = main(["sample", model_file, "--n", "400", "--seed", "3",
                   "--out", str(out)])
        assert rc == 0
        rows = (out / "draws.csv").read_text().splitlines()
        assert rows[0] == "u1,u2"
        assert len(rows) == 401
        stats = json.loads((out / "sampler_stats.json").read_text())
        assert stats["accepted"] == 400

    def test_seeded_rerun_is_byte_identical(self, tmp_path, model_file):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["sample", model_file, "--n", "200", "--seed", "5", "--out", str(out1)])
        main(["sample", model_file, "--n", "200", "--seed", "5", "--out", str(out2)])
        assert (out1 / "draws.csv").read_bytes() == (out2 / "draws.csv").read_bytes()


class TestDensityGridCommand:
    def test_copula_grid_shape_and_values(self, tmp_path, model_file):
        out = tmp_path / "g"
        rc = main(["density-grid", model_file, "--resolution", "21", "--out", str(out)])
        assert rc == 0
        rows = (out / "copula_density_grid.csv").read_text().splitlines()
        assert rows[0] == "u,v,density"
        assert len(rows) == 1 + 21 * 21
        vals = np.array([float(r.split(",")[2]) for r in rows[1:]])
        assert vals.min() >= 0.0

    def test_independence_grid_is_flat(self, tmp_path):
        from splinecop.basis import build_uniform_basis
        from splinecop.copula import independence_model

        path = tmp_path / "ind.json"
        save_model(independence_model(build_uniform_basis(3, 4),
                                      build_uniform_basis(3, 5)), path)
        out = tmp_path / "g2"
        main(["density-grid", str(path), "--resolution", "11", "--out", str(out)])
        rows = (out / "copula_density_grid.csv").read_text().splitlines()[1:]
        vals = np.array([float(r.split(",")[2]) for r in rows])
        assert np.max(np.abs(vals - 1.0)) < 1e-10

    def test_joint_grid_with_margins(self, tmp_path, model_file):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((200, 2))
        data_path = tmp_path / "raw.csv"
        write_csv(data_path, ["x", "y"], data)
        out = tmp_path / "g3"
        rc = main(["density-grid", model_file, "--resolution", "15",
                   "--margins-data", str(data_path), "--out", str(out)])
        assert rc == 0
        rows = (out / "joint_density_grid.csv").read_text().splitlines()
        assert rows[0] == "x,y,h"
        vals = np.array([float(r.split(",")[2]) for r in rows[1:]])
        assert vals.min() >= 0.0


class TestSelectCommand:
    def test_select_writes_tables(self, tmp_path, data_file):
        out = tmp_path / "sel"
        rc = main(["select", data_file, "--sizes", "4x4;4x5", "--alpha", "0",
                   "--folds", "3", "--pseudo", "identity", "--out", str(out)])
        assert rc == 0
        summary = json.loads((out / "selection_summary.json").read_text())
        assert summary["sizes"]["best_aic"] in ("4,4", "4,5")
        assert (out / "cv_sizes.csv").exists()
        assert (out / "aic_sizes.csv").exists()

    def test_seeded_rerun_identical(self, tmp_path, data_file):
        out1, out2 = tmp_path / "x", tmp_path / "y"
        args = ["select", data_file, "--sizes", "4x5", "--alpha", "0",
                "--folds", "3", "--seed", "5", "--pseudo", "identity"]
        main(args + ["--out", str(out1)])
        main(args + ["--out", str(out2)])
        assert (out1 / "cv_sizes.csv").read_bytes() == (out2 / "cv_sizes.csv").read_bytes()


def test_unknown_grid_key_is_usage_error(tmp_path, data_file):
    rc = main(["select", data_file, "--grid", "gamma=1", "--out", str(tmp_path / "z")])
    assert rc == 2
