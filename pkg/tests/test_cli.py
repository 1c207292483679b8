"""Batch front-end: config handling, artifacts, determinism, exit codes."""

import json
import subprocess
import sys

import pytest

from tauforge import cli

SMALL_KDV = ["--grid", "-0.4:0.4:11"]


def run_cli(args):
    return cli.main(list(args))


class TestConfigHandling:
    def test_grid_spec_parsing(self):
        cfg = cli.ExperimentConfig(pipeline="kdv", grid="-1:1:51")
        assert cfg.grid_spec() == [(-1.0, 1.0, 51), (-1.0, 1.0, 51)]
        cfg = cli.ExperimentConfig(pipeline="ernst", grid="0.5:2:9,-1:1:7")
        assert cfg.grid_spec() == [(0.5, 2.0, 9), (-1.0, 1.0, 7)]

    def test_preset_parsing(self):
        name, params = cli._parse_preset("one_pole:pole=0.3,strength=0.2")
        assert name == "one_pole"
        assert params == {"pole": 0.3, "strength": 0.2}

    @pytest.mark.parametrize("args", [
        ["kdv", "--grid", "-1:1:3"],
        ["kdv", "--samples", "50"],
        ["kdv", "--preset", "wrong_name"],
        ["kdv", "--preset", "one_pole:radius=2"],
        ["kdv", "--tol-residual", "-1"],
        ["kdv", "--threads", "0"],
        ["kdv", "--grid", "1:-1:9"],
        ["kdv", "--grid", "0:1:9,0:1:9,0:1:9"],
        ["ernst", "--grid", "-1:1:9"],
        ["kdv", "--seed-file", "/nonexistent/seeds.cfg"],
    ])
    def test_bad_configs_exit_3(self, args):
        assert run_cli(args) == cli.EXIT_CONFIG

    def test_seed_file_with_overrides(self, tmp_path):
        seed_file = tmp_path / "exp.cfg"
        seed_file.write_text(
            "# comment line\n"
            "preset = one_pole:pole=0.3,strength=0.2\n"
            "grid = -0.4:0.4:9\n"
            "tol-residual = 0.5   # spacing is coarse here\n")
        out = tmp_path / "run"
        code = run_cli(["kdv", "--seed-file", str(seed_file),
                        "--grid", "-0.3:0.3:9", "--out", str(out)])
        assert code == 0
        manifest = json.loads((out / "kdv_manifest.json").read_text())
        assert manifest["preset"] == "one_pole"
        assert manifest["preset_params"] == {"pole": 0.3, "strength": 0.2}
        # CLI flag wins over the seed-file grid
        assert manifest["grid"] == [[-0.3, 0.3, 9], [-0.3, 0.3, 9]]
        assert manifest["tolerances"]["residual"] == 0.5

    def test_seed_file_rejects_unknown_key(self, tmp_path):
        seed_file = tmp_path / "exp.cfg"
        seed_file.write_text("colour = blue\n")
        assert run_cli(["kdv", "--seed-file", str(seed_file)]) == cli.EXIT_CONFIG


class TestKdvPipeline:
    def test_vacuum_example(self, capsys):
        assert run_cli(["kdv", "--preset", "vacuum", "--grid", "-1:1:51"]) == 0
        out = capsys.readouterr().out
        assert "vacuum_max_q" in out
        assert "[FAIL]" not in out

    def test_artifacts_and_determinism(self, tmp_path):
        args = ["kdv"] + SMALL_KDV
        assert run_cli(args + ["--out", str(tmp_path / "a")]) == 0
        assert run_cli(args + ["--out", str(tmp_path / "b")]) == 0
        assert run_cli(args + ["--out", str(tmp_path / "c"),
                               "--threads", "3"]) == 0
        first = (tmp_path / "a" / "kdv.csv").read_bytes()
        assert first == (tmp_path / "b" / "kdv.csv").read_bytes()
        assert first == (tmp_path / "c" / "kdv.csv").read_bytes()

        header = first.decode().splitlines()[0]
        assert header == "x,t,re_log_tau,im_log_tau,re_q,re_u,bigcell"
        assert len(first.decode().splitlines()) == 1 + 11 * 11

        manifest = json.loads((tmp_path / "a" / "kdv_manifest.json").read_text())
        assert manifest["csv"] == "kdv.csv"
        assert manifest["exit_code"] == 0
        assert {c["name"] for c in manifest["checks"]} == {
            "bigcell_coverage", "logtau_q_consistency", "pde_residual"}
        assert all(c["pass"] for c in manifest["checks"])

    def test_manifest_key_set_is_fixed(self, tmp_path):
        assert run_cli(["kdv"] + SMALL_KDV + ["--out", str(tmp_path)]) == 0
        manifest = json.loads((tmp_path / "kdv_manifest.json").read_text())
        assert sorted(manifest) == [
            "checks", "count", "csv", "elapsed_seconds", "exit_code", "extra",
            "grid", "pipeline", "preset", "preset_params", "rng_seed",
            "samples", "seed_file", "strength", "threads", "tolerances",
            "trunc", "versions"]
        assert manifest["versions"]["tauforge"]

    def test_bad_cell_on_path_exits_4(self):
        code = run_cli(["kdv", "--preset", "one_pole:strength=1.0",
                        "--grid", "-0.3:-0.2:7,0.5:1.2:8"])
        assert code == cli.EXIT_BIG_CELL


class TestErnstPipeline:
    def test_kasner_run_and_artifacts(self, tmp_path, capsys):
        code = run_cli(["ernst", "--preset", "kasner:a=0.7",
                        "--out", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "ernst.csv").read_text().splitlines()
        assert lines[0] == ("r,z,log_tau,dlogtau_w_re,dlogtau_w_im,"
                            "field_residual,candidate1_const,candidate2_const")
        assert len(lines) == 1 + 16 * 11
        manifest = json.loads((tmp_path / "ernst_manifest.json").read_text())
        summary = manifest["extra"]["summary"]
        assert summary["constant_candidate"] == "log_tau - log(r Omega^2)"
        assert summary["candidate1_std"] < 1e-7
        assert summary["candidate2_std"] > 1e-2

    def test_non_solution_detected(self, capsys):
        assert run_cli(["ernst", "--preset", "non_solution"]) == cli.EXIT_CHECK_FAILED
        assert "[FAIL] field_equations" in capsys.readouterr().out


class TestBirkhoffPipeline:
    def test_round_trip_batch(self, tmp_path):
        code = run_cli(["birkhoff", "--count", "30", "--out", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "birkhoff.csv").read_text().splitlines()
        assert lines[0] == "index,residual"
        assert len(lines) == 31

    def test_twist_exits_4(self, capsys):
        assert run_cli(["birkhoff", "--preset", "twist"]) == cli.EXIT_BIG_CELL
        assert "big_cell_required_node" in capsys.readouterr().out


class TestSelftest:
    def test_selftest_passes(self, capsys):
        assert run_cli(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "[FAIL]" not in out
        assert "checks passed" in out

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "tauforge", "birkhoff", "--count", "5"],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert "round_trip_residual" in proc.stdout
