import json
import os

import numpy as np
import pytest

from activesub.cli import main
from activesub.config import (
    ExperimentConfig,
    RunManifest,
    fmt_float,
    load_custom_model,
    parse_distribution,
    subspace_to_json,
    write_matrix_csv,
    write_table,
)
from activesub.distributions import StandardNormal, UniformBall, UniformBox
from activesub.exceptions import ConfigError
from activesub.harness import MSE_HEADER, run_mse_experiment
from activesub.rng import substream

SMALL = {
    "seed": 321,
    "mse": {"n_values": [2, 5], "n_x": 200, "n_z": 40},
    "perturbation": {"epsilons": [0.1], "n_values": [5], "n_x": 200, "n_z": 20},
    "bayes": {
        "grid_points": 120,
        "realizations": 20,
        "n_values": [2, 8],
        "z_mc_samples": 20_000,
        "mcmc": {"steps": 4_000, "burn_in": 500},
    },
}


def write_small_config(tmp_path, **overrides):
    data = dict(SMALL)
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


class TestConfig:
    def test_default_roundtrip(self):
        cfg = ExperimentConfig()
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_json_file_roundtrip(self, tmp_path):
        path = write_small_config(tmp_path)
        cfg = ExperimentConfig.from_json_file(path)
        assert cfg.seed == 321
        assert cfg.mse.n_values == [2, 5]
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"sede": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mse": {"n_vals": [2]}})

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"mse": {"n_values": [5, 2]}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"perturbation": {"epsilons": [3.0]}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"problem": {"kind": "mystery"}})

    def test_spectrum_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"problem": {"n": 3, "spectrum_exponents": [1.0, 2.0, 0.0]}})


class TestWriters:
    def test_fmt_float_roundtrip(self):
        gen = substream(1, "fmt")
        for x in gen.standard_normal(50) * 10.0 ** gen.integers(-30, 30, size=50):
            assert float(fmt_float(float(x))) == float(x)

    def test_write_table_csv(self, tmp_path):
        path = write_table(str(tmp_path / "t.csv"), ["a", "b", "flag"],
                           [(1, 0.5, True), (2, 1.5e-20, False)], "csv")
        lines = open(path).read().strip().split("\n")
        assert lines[0] == "a,b,flag"
        assert lines[1].endswith("true")
        assert float(lines[2].split(",")[1]) == 1.5e-20

    def test_write_table_json(self, tmp_path):
        path = write_table(str(tmp_path / "t.csv"), ["a", "b"], [(1, 0.5)], "json")
        assert path.endswith(".json")
        assert json.load(open(path)) == [{"a": 1, "b": 0.5}]

    def test_matrix_csv_precision(self, tmp_path):
        m = substream(2, "mat").standard_normal((3, 4))
        path = write_matrix_csv(str(tmp_path / "m.csv"), m)
        rows = [list(map(float, line.split(","))) for line in open(path).read().strip().split("\n")]
        assert np.array_equal(np.array(rows), m)

    def test_subspace_json_schema(self, tmp_path, paper_problem):
        path = subspace_to_json(str(tmp_path / "s.json"), paper_problem.subspace, seed=1, m_samples=10)
        data = json.load(open(path))
        assert set(data) == {"n", "k", "eigenvalues", "W", "seed", "M"}
        assert data["n"] == 10 and data["k"] == 2
        assert np.allclose(np.array(data["W"]), paper_problem.subspace.w)


class TestDistributionParsing:
    def test_all_kinds(self):
        assert isinstance(parse_distribution({"kind": "standard_normal", "dim": 3}), StandardNormal)
        box = parse_distribution({"kind": "uniform_box", "lo": [0, 0], "hi": [1, 2]})
        assert isinstance(box, UniformBox) and box.volume == 2.0
        ball = parse_distribution({"kind": "uniform_ball", "center": [0, 0], "radius": 1.5})
        assert isinstance(ball, UniformBall)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            parse_distribution({"kind": "cauchy", "dim": 1})

    def test_custom_model_roundtrip(self, tmp_path):
        model = {
            "n": 2,
            "distribution": {"kind": "standard_normal", "dim": 2},
            "quadratic": {"h": [[2.0, 0.0], [0.0, 1.0]], "b": [0.0, 0.5], "c": 1.0},
        }
        path = tmp_path / "model.json"
        path.write_text(json.dumps(model))
        gf, dist = load_custom_model(str(path))
        assert gf.dim == 2 and dist.dim == 2
        x = np.array([[1.0, 1.0]])
        assert gf.f(x)[0] == pytest.approx(0.5 * 3.0 + 0.5 + 1.0)


class TestManifest:
    def test_source_date_epoch(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        m1 = RunManifest(config_hash="abc")
        m2 = RunManifest(config_hash="abc")
        assert m1.created_utc == m2.created_utc == "2023-11-14T22:13:20Z"
        p = tmp_path / "m.json"
        m1.write(str(p))
        assert json.load(open(p))["config_hash"] == "abc"


class TestCli:
    def test_missing_config_exits_one(self, capsys):
        assert main(["mse"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_command_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_bad_config_path_exits_one(self, capsys):
        assert main(["mse", "--config", "/nonexistent.json"]) == 1

    def test_small_mse_run(self, tmp_path, capsys):
        cfg = write_small_config(tmp_path)
        out = str(tmp_path / "out")
        assert main(["mse", "--config", cfg, "--out", out, "--threads", "1"]) == 0
        captured = capsys.readouterr().out
        assert "[PASS]" in captured
        assert os.path.exists(os.path.join(out, "mse_results.csv"))
        assert os.path.exists(os.path.join(out, "manifest.json"))
        manifest = json.load(open(os.path.join(out, "manifest.json")))
        assert "mse_results.csv" in manifest["outputs"]

    def test_byte_determinism_and_thread_independence(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        cfg = write_small_config(tmp_path)
        outs = []
        for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
            out = str(tmp_path / name)
            assert main(["mse", "--config", cfg, "--out", out, "--threads", threads]) == 0
            outs.append(out)
        for fname in ("mse_results.csv", "mse_verdicts.csv", "manifest.json"):
            ref = open(os.path.join(outs[0], fname), "rb").read()
            for other in outs[1:]:
                assert open(os.path.join(other, fname), "rb").read() == ref

    def test_seed_override_changes_hash(self, tmp_path):
        cfg = write_small_config(tmp_path)
        out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
        assert main(["mse", "--config", cfg, "--out", out1]) == 0
        assert main(["mse", "--config", cfg, "--seed", "999", "--out", out2]) == 0
        h1 = json.load(open(os.path.join(out1, "manifest.json")))["config_hash"]
        h2 = json.load(open(os.path.join(out2, "manifest.json")))["config_hash"]
        assert h1 != h2

    def test_json_format(self, tmp_path):
        cfg = write_small_config(tmp_path)
        out = str(tmp_path / "json-out")
        assert main(["mse", "--config", cfg, "--out", out, "--format", "json"]) == 0
        rows = json.load(open(os.path.join(out, "mse_results.json")))
        assert rows and set(rows[0]) == set(MSE_HEADER)

    def test_bound_violation_exit_two(self, tmp_path, monkeypatch):
        import activesub.cli as cli_mod

        def fake_runner(cfg, out_dir, threads=1, fmt="csv"):
            os.makedirs(out_dir, exist_ok=True)
            return [], [("doomed_check", False, "synthetic failure")]

        monkeypatch.setitem(cli_mod._RUNNERS, "mse", fake_runner)
        cfg = write_small_config(tmp_path)
        assert main(["mse", "--config", cfg, "--out", str(tmp_path / "v")]) == 2


class TestPlotScriptContract:
    def test_schema_matches_emitted_csv(self, tmp_path):
        cfg = ExperimentConfig.from_dict(SMALL)
        out = str(tmp_path / "plot")
        files, _ = run_mse_experiment(cfg, out, threads=1, fmt="csv")
        script = open(os.path.join(out, "plot_mse.py")).read()
        namespace = {}
        header_line = next(line for line in script.splitlines() if line.startswith("EXPECTED_HEADER"))
        exec(header_line, namespace)  # the script's own schema expectation
        csv_header = open(os.path.join(out, "mse_results.csv")).readline().strip().split(",")
        assert namespace["EXPECTED_HEADER"] == csv_header == MSE_HEADER
