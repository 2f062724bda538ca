"""Tests for the command-line surface."""

import json
import os
import shutil
import tempfile

import pytest

from stochastic_burgers_lab.cli import build_parser, resolve_config, run
from stochastic_burgers_lab.workflows import EXIT_BLOWUP, EXIT_OK, EXIT_USAGE

SOLVER_FLAGS = ["--N", "4", "--T", "0.1", "--dt", "0.01"]


def ndjson(text: str):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


class TestParser:
    def test_usage_errors_exit_64(self, capsys):
        parser = build_parser()
        for argv in ([], ["bogus"], ["oracle"], ["simulate", "--dt", "fast"], ["oracle", "--kind", "spectral"]):
            with pytest.raises(SystemExit) as excinfo:
                parser.parse_args(argv)
            assert excinfo.value.code == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_solver_flags(self):
        args = build_parser().parse_args(["simulate", *SOLVER_FLAGS, "--b", "0.3", "--seed", "4", "--nu", "0.5"])
        config = resolve_config(args)
        assert config.solver.grid.N == 4
        assert config.solver.grid.M == 14
        assert config.solver.noise.b == 0.3
        assert config.solver.noise.seed == 4
        assert config.solver.nu == 0.5

    def test_ensemble_seed_is_base_seed(self):
        args = build_parser().parse_args(["ensemble", "--seed", "9", "--n-paths", "5"])
        config = resolve_config(args)
        assert config.ensemble.base_seed == 9
        assert config.ensemble.n_paths == 5
        assert config.solver.noise.seed == 0

    def test_verify_arguments(self):
        args = build_parser().parse_args(["verify", "a.csv", "b.csv", "--checks", "energy,max_principle"])
        assert args.files == ["a.csv", "b.csv"]
        assert args.checks == "energy,max_principle"


class TestRun:
    """``run`` prints NDJSON and returns the exit code."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_simulate_then_verify(self, capsys):
        code = run(["simulate", *SOLVER_FLAGS, "--out", self.temp_dir, "--log-level", "WARNING"])
        assert code == EXIT_OK
        (record,) = ndjson(capsys.readouterr().out)
        assert record["rows"] == 11
        assert record["status"] == "completed"

        code = run(["verify", record["trajectory"], "--checks", "max_principle, seminorm_chain", "--out", self.temp_dir])
        assert code == EXIT_OK
        reports = ndjson(capsys.readouterr().out)
        assert [r["check"] for r in reports] == ["max_principle", "seminorm_chain"]
        assert all(r["pass"] for r in reports)

    def test_blowup(self, capsys):
        code = run(["simulate", *SOLVER_FLAGS, "--blowup-threshold", "1e-6", "--out", self.temp_dir])
        assert code == EXIT_BLOWUP
        assert ndjson(capsys.readouterr().out)[0]["status"] == "aborted_blowup"

    def test_missing_config_file(self, capsys):
        code = run(["simulate", "--config", os.path.join(self.temp_dir, "absent.ini")])
        assert code == EXIT_USAGE
        (record,) = ndjson(capsys.readouterr().out)
        assert record["success"] is False
        assert record["error_type"] == "configuration_error"

    def test_config_file_and_flag_precedence(self, capsys):
        path = os.path.join(self.temp_dir, "run.ini")
        with open(path, "w") as f:
            f.write("[grid]\nN = 3\n[solver]\nT = 0.05\ndt = 0.01\n[noise]\nseed = 1\n")
        code = run(["simulate", "--config", path, "--seed", "8", "--out", self.temp_dir])
        assert code == EXIT_OK
        (record,) = ndjson(capsys.readouterr().out)
        assert record["seed"] == 8
        assert record["rows"] == 6

    def test_oracle_usage_error(self, capsys):
        code = run(["oracle", "--kind", "cole_hopf", *SOLVER_FLAGS, "--b", "0.5", "--out", self.temp_dir])
        assert code == EXIT_USAGE

    def test_simulate_replays_noise_path(self, capsys):
        assert run(["simulate", *SOLVER_FLAGS, "--out", self.temp_dir]) == EXIT_OK
        (first,) = ndjson(capsys.readouterr().out)
        stored = os.path.join(first["run_dir"], "noise_path.b3ds")
        code = run(["simulate", *SOLVER_FLAGS, "--seed", "123", "--noise-path", stored, "--out", self.temp_dir])
        assert code == EXIT_OK
        (replay,) = ndjson(capsys.readouterr().out)
        assert replay["seed"] == first["seed"]
        assert replay["replayed_path"] == stored
