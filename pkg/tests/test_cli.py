"""Tests for the experiment command line."""

import json

import numpy as np
import pytest

from lowrank_recovery import __version__, cli, csvio
from lowrank_recovery.rng import RngStream

SMALL = {
    "caratheodory": ["--dim", "3", "--n-points", "10", "--trials", "20"],
    "montecarlo": ["--function", "sine", "--n", "50", "--trials", "10"],
    "chi2-tails": ["--m", "5", "--eps", "0.5", "--trials", "500"],
    "jl": ["--n-points", "5", "--dim", "30", "--eps", "0.5"],
    "nets": ["--kind", "stiefel", "--n", "2", "--k", "1", "--coverage-samples", "100"],
    "rip-sparse": ["--rows", "20", "--cols", "6", "--trials", "3"],
    "rip-matrix": ["--m", "20", "--n", "2", "--N", "2", "--probes", "50"],
    "nsp": ["--rows", "3", "--cols", "6", "--budget", "100", "--trials", "2"],
    "rank-nsp": ["--m", "3", "--n", "2", "--N", "2", "--budget", "100", "--trials", "2"],
    "complete": ["--n", "6", "--m", "30"],
    "golf": ["--n", "5", "--batch-size", "200", "--trials", "2"],
    "tangent-conc": ["--n", "5", "--m", "60", "--trials", "20"],
    "lie": ["--n", "3", "--ns", "4,8", "--trials", "3"],
    "golden-thompson": ["--n", "3", "--trials", "10"],
    "lieb-probe": ["--n", "3", "--trials", "10"],
    "mat-bernstein": ["--n", "3", "--m", "10", "--ts", "2,4", "--trials", "200"],
}


def run_cli(sub, args, out):
    return cli.main([sub, *args, "--out", str(out)])


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix == ".csv"}


@pytest.mark.parametrize("sub", sorted(cli.PARAMS))
def test_every_subcommand_runs(sub, tmp_path):
    out = tmp_path / sub
    assert run_cli(sub, SMALL[sub], out) == cli.EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] == __version__
    assert manifest["config"]["subcommand"] == sub
    assert manifest["config"]["seed"] == 0
    assert "stream_layout" in manifest and "tolerances" in manifest
    assert manifest["wall_time_s"] >= 0
    for name in manifest["files"]:
        assert (out / name).exists()


def test_all_subcommands_have_small_configs():
    assert set(SMALL) == set(cli.PARAMS) == set(cli.DEFAULT_TRIALS)


class TestDeterminism:
    @pytest.mark.parametrize("sub", ["complete", "mat-bernstein", "golf"])
    def test_byte_identical(self, sub, tmp_path):
        run_cli(sub, SMALL[sub] + ["--seed", "3"], tmp_path / "a")
        run_cli(sub, SMALL[sub] + ["--seed", "3"], tmp_path / "b")
        assert csv_bytes(tmp_path / "a") == csv_bytes(tmp_path / "b")

    def test_threads_do_not_change_results(self, tmp_path):
        args = SMALL["golden-thompson"] + ["--seed", "5"]
        run_cli("golden-thompson", args + ["--threads", "1"], tmp_path / "a")
        run_cli("golden-thompson", args + ["--threads", "4"], tmp_path / "b")
        assert csv_bytes(tmp_path / "a") == csv_bytes(tmp_path / "b")

    def test_seed_changes_results(self, tmp_path):
        run_cli("complete", SMALL["complete"] + ["--seed", "1"], tmp_path / "a")
        run_cli("complete", SMALL["complete"] + ["--seed", "2"], tmp_path / "b")
        assert csv_bytes(tmp_path / "a") != csv_bytes(tmp_path / "b")


class TestArtifacts:
    def test_jl_with_points(self, tmp_path):
        pts = RngStream(0).normal((6, 40))
        path = tmp_path / "p.csv"
        path.write_text(csvio.matrix_to_csv(pts))
        out = tmp_path / "out"
        assert cli.main(["jl", "--points", str(path), "--eps", "0.5", "--seed", "7", "--out", str(out)]) == 0
        assert (out / "embedded.csv").exists() and (out / "report.json").exists()
        assert csvio.read_matrix(out / "embedded.csv").shape[0] == 6

    def test_complete_from_matrix(self, tmp_path):
        u = np.ones(20) / np.sqrt(20)
        path = tmp_path / "a.csv"
        path.write_text(csvio.matrix_to_csv(np.outer(u, u)))
        out = tmp_path / "out"
        assert cli.main(["complete", "--matrix", str(path), "--basis", "entry", "--m", "600",
                         "--seed", "3", "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report) >= {"iterations", "residual", "objective", "converged"}
        assert report["converged"] and report["relative_error"] <= 1e-6

    def test_complete_replays_saved_operator(self, tmp_path):
        first = tmp_path / "first"
        run_cli("complete", SMALL["complete"], first)
        a = tmp_path / "a.csv"
        a.write_text((first / "solution.csv").read_text())
        second = tmp_path / "second"
        code = cli.main(["complete", "--matrix", str(a), "--operator", str(first / "operator.json"),
                         "--y", str(first / "y.csv"), "--out", str(second)])
        assert code == 0
        assert (first / "y.csv").read_bytes() == (second / "y.csv").read_bytes()

    def test_mat_bernstein_columns(self, tmp_path):
        run_cli("mat-bernstein", SMALL["mat-bernstein"], tmp_path)
        header = (tmp_path / "tail.csv").read_text().splitlines()[0]
        assert header == "t,empirical,bound_theo_bern1,bound_lieb,trials,n,m,seed"

    def test_float_format_round_trips(self, tmp_path):
        run_cli("complete", SMALL["complete"], tmp_path)
        text = (tmp_path / "solution.csv").read_text()
        assert "\r" not in text
        sol = csvio.read_matrix(tmp_path / "solution.csv")
        assert csvio.matrix_to_csv(sol) == text


class TestConfig:
    def test_json_round_trip(self):
        cfg = cli.ExperimentConfig("lie", {"n": 3}, seed=2 ** 63, trials=4, threads=2, output_dir="x")
        back = cli.ExperimentConfig.from_json(cfg.to_json())
        assert back == cfg
        assert back.to_json() == cfg.to_json()

    def test_defaults_filled(self):
        cfg = cli.ExperimentConfig("lie")
        assert cfg.params == {"n": 4, "ns": [16, 32, 64, 128]}

    def test_unknown_param(self):
        with pytest.raises(cli.UsageError, match="unknown parameter"):
            cli.ExperimentConfig("lie", {"bogus": 1})

    def test_unknown_key(self):
        with pytest.raises(cli.UsageError, match="unknown config key"):
            cli.ExperimentConfig.from_json(json.dumps({"subcommand": "lie", "extra": 1}))

    @pytest.mark.parametrize("kw", [{"seed": -1}, {"seed": 2 ** 64}, {"trials": 0}, {"threads": 0}])
    def test_invalid_settings(self, kw):
        with pytest.raises(cli.UsageError):
            cli.ExperimentConfig("lie", **kw)

    def test_config_file_overrides_flags(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"seed": 11, "params": {"n": 2}}))
        cfg = cli.config_from_args(["lie", "--seed", "3", "--n", "5", "--ns", "4", "--config", str(conf)])
        assert cfg.seed == 11 and cfg.params["n"] == 2 and cfg.params["ns"] == [4]

    def test_config_subcommand_mismatch(self, tmp_path):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"subcommand": "jl"}))
        with pytest.raises(cli.UsageError):
            cli.config_from_args(["lie", "--config", str(conf)])


class TestExitCodes:
    def test_unknown_subcommand(self, tmp_path, capsys):
        assert cli.main(["nope", "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE
        assert "error" in capsys.readouterr().err

    def test_bad_value(self, tmp_path):
        assert cli.main(["lie", "--n", "abc", "--out", str(tmp_path / "o")]) == cli.EXIT_USAGE

    def test_invalid_params_leave_nothing(self, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["nets", "--eps", "1.5", "--out", str(out)]) == cli.EXIT_USAGE
        assert not out.exists()

    def test_missing_input_file(self, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["jl", "--points", str(tmp_path / "missing.csv"), "--out", str(out)]) == cli.EXIT_USAGE
        assert not out.exists()

    def test_numeric_failure_cleans_up(self, tmp_path, monkeypatch):
        def boom(cfg, rng):
            np.exp(np.array([1e6]))
            return {}, {}

        monkeypatch.setitem(cli.RUNNERS, "lie", boom)
        out = tmp_path / "o"
        assert cli.main(["lie", "--out", str(out)]) == cli.EXIT_NUMERIC
        assert not out.exists()

    def test_existing_dir_kept_on_failure(self, tmp_path):
        out = tmp_path / "o"
        out.mkdir()
        (out / "keep.txt").write_text("x")
        assert cli.main(["nets", "--eps", "1.5", "--out", str(out)]) == cli.EXIT_USAGE
        assert sorted(p.name for p in out.iterdir()) == ["keep.txt"]
