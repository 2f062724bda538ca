"""End-to-end tests of the simulate / verify / oracle / ensemble workflows."""

import csv
import json
import os
import shutil
import tempfile

import numpy as np
import pytest

from stochastic_burgers_lab.config import apply_overrides, parse_run_config
from stochastic_burgers_lab.errors import DomainError
from stochastic_burgers_lab.galerkin_solver import CSV_COLUMNS, trajectory_from_csv
from stochastic_burgers_lab.inequality_verifier import CHECKS
from stochastic_burgers_lab.workflows import (
    EXIT_BLOWUP,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    failure,
    run_ensemble,
    run_oracle,
    run_simulate,
    run_verify,
    to_jsonable,
    to_ndjson,
)

SMALL = """
[grid]
N = 4

[solver]
T = 0.1
dt = 0.01

[noise]
b = {b}
seed = 5
"""


class WorkflowTestCase:
    """Temporary output root shared by the workflow tests."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def config(self, b: float = 0.5, **overrides):
        config = parse_run_config(SMALL.format(b=b))
        return apply_overrides(config, {"output.directory": self.temp_dir, **overrides})


class TestSimulate(WorkflowTestCase):
    def test_minimal_run(self):
        result = run_simulate(self.config(b=0.0))
        assert result.exit_code == EXIT_OK
        payload = result.payload
        assert payload["success"] is True
        assert payload["status"] == "completed"
        assert payload["rows"] == 11
        files = set(os.listdir(payload["run_dir"]))
        assert {"trajectory.csv", "noise_path.b3ds", "final_state.b3ds", "manifest.json", "config.ini"} <= files
        assert "trajectory_metadata.json" in files
        assert len(trajectory_from_csv(payload["trajectory"])) == 11

    def test_blowup_exit_code(self):
        result = run_simulate(self.config(**{"solver.blowup_threshold": 1e-6}))
        assert result.exit_code == EXIT_BLOWUP
        assert result.payload["success"] is True
        assert result.payload["status"] == "aborted_blowup"
        with open(os.path.join(result.payload["run_dir"], "manifest.json")) as f:
            assert json.load(f)["status"] == "aborted_blowup"

    def test_config_snapshot_round_trips(self):
        config = self.config()
        result = run_simulate(config)
        with open(os.path.join(result.payload["run_dir"], "config.ini")) as f:
            assert parse_run_config(f.read()) == config

    def test_replay_stored_path(self):
        first = run_simulate(self.config(b=0.5)).payload
        stored = os.path.join(first["run_dir"], "noise_path.b3ds")
        replay = run_simulate(self.config(b=0.0, **{"noise.seed": 99}), stored)
        assert replay.exit_code == EXIT_OK
        assert replay.payload["seed"] == 5
        assert replay.payload["replayed_path"] == stored
        assert "noise_path.csv" in os.listdir(replay.payload["run_dir"])
        original = trajectory_from_csv(first["trajectory"])
        replayed = trajectory_from_csv(replay.payload["trajectory"])
        assert np.array_equal(original.alpha, replayed.alpha)
        assert np.array_equal(original.semi_one, replayed.semi_one)

    def test_replay_needs_long_enough_path(self):
        stored = os.path.join(run_simulate(self.config()).payload["run_dir"], "noise_path.b3ds")
        result = run_simulate(self.config(**{"solver.T": 0.2}), stored)
        assert result.exit_code == EXIT_USAGE
        assert "before the horizon" in result.payload["error"]

    def test_replay_of_missing_file(self):
        result = run_simulate(self.config(), os.path.join(self.temp_dir, "missing.b3ds"))
        assert result.exit_code == EXIT_FAILURE
        assert result.payload["success"] is False


class TestVerify(WorkflowTestCase):
    def trajectory(self, b: float = 0.5, **overrides) -> str:
        return run_simulate(self.config(b=b, **overrides)).payload["trajectory"]

    def test_heat_trajectory_passes(self):
        path = self.trajectory(**{"solver.nonlinear": False})
        result = run_verify(self.config(), [path])
        assert result.exit_code == EXIT_OK
        assert len(result.records) == len(CHECKS)
        assert result.payload["exact_failures"] == 0
        assert os.path.exists(result.payload["report"])

    def test_selected_checks(self):
        result = run_verify(self.config(), [self.trajectory()], ["seminorm_chain", "mean_drift"])
        assert [r["check"] for r in result.records] == ["seminorm_chain", "mean_drift"]

    def test_corrupted_sup_norm_fails(self):
        path = self.trajectory(**{"solver.nonlinear": False})
        with open(path) as f:
            lines = f.read().splitlines()
        column = CSV_COLUMNS.index("linf_v")
        cells = lines[8].split(",")
        cells[column] = "100"
        lines[8] = ",".join(cells)
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
        result = run_verify(self.config(), [path], ["max_principle"])
        assert result.exit_code == EXIT_FAILURE
        assert result.records[0]["pass"] is False

    def test_check_errors_are_reported(self):
        path = self.trajectory()
        result = run_verify(self.config(), [path], ["energy", "seminorm_chain"], eps_time=0.055)
        energy = result.records[0]
        assert energy["pass"] is False
        assert energy["error_type"] == DomainError.error_type
        # energy is a fitted-constant check, so it does not set the exit code
        assert result.exit_code == EXIT_OK

    def test_usage_errors(self):
        assert run_verify(self.config(), []).exit_code == EXIT_USAGE
        assert run_verify(self.config(), [self.trajectory()], ["bogus"]).exit_code == EXIT_USAGE

    def test_unreadable_file(self):
        result = run_verify(self.config(), [os.path.join(self.temp_dir, "absent.csv")])
        assert result.exit_code == EXIT_FAILURE
        assert result.payload["error_type"] == "data_error"

    def test_without_report_file(self):
        result = run_verify(self.config(), [self.trajectory()], ["log_splitting"], write_report=False)
        assert "report" not in result.payload
        assert [name for name in os.listdir(self.temp_dir) if name.startswith("verify_")] == []


class TestOracle(WorkflowTestCase):
    def test_heat(self):
        result = run_oracle(self.config(**{"initial.family": "random_smooth"}), "heat")
        assert result.exit_code == EXIT_OK
        assert result.payload["max_error"] <= 1e-12
        assert len(result.records) == 11
        with open(result.payload["csv"]) as f:
            rows = list(csv.DictReader(f))
        assert list(rows[0]) == ["t", "max_coeff_error", "l2_exact"]

    def test_cole_hopf(self):
        config = self.config(b=0.0, **{"grid.N": 8, "grid.M": 26, "solver.nu": 0.5, "solver.T": 0.02, "solver.dt": 0.001})
        result = run_oracle(config, "cole_hopf")
        assert result.exit_code == EXIT_OK
        assert result.payload["max_relative_error"] <= 1e-4

    def test_cole_hopf_needs_deterministic_forcing(self):
        result = run_oracle(self.config(b=0.5), "cole_hopf")
        assert result.exit_code == EXIT_USAGE
        assert result.payload["error_type"] == "configuration_error"

    def test_cole_hopf_needs_one_dimensional_data(self):
        result = run_oracle(self.config(b=0.0, **{"initial.family": "random_smooth"}), "cole_hopf")
        assert result.exit_code == EXIT_USAGE

    def test_route_compare(self):
        result = run_oracle(self.config(b=0.5), "route_compare")
        assert result.exit_code == EXIT_OK
        rows = result.records
        assert [r["dt"] for r in rows] == pytest.approx([0.01, 0.005, 0.0025])
        assert rows[0]["ratio"] is None
        assert rows[2]["gap_l2"] < rows[0]["gap_l2"]
        assert len(result.payload["orders"]) == 2

    def test_route_compare_replays_stored_path(self):
        stored = os.path.join(run_simulate(self.config(b=0.5)).payload["run_dir"], "noise_path.b3ds")
        fresh = run_oracle(self.config(b=0.5), "route_compare").records
        replayed = run_oracle(self.config(b=0.0), "route_compare", stored).records
        assert [r["gap_l2"] for r in replayed] == [r["gap_l2"] for r in fresh]

    def test_unknown_kind(self):
        assert run_oracle(self.config(), "spectral").exit_code == EXIT_USAGE


class TestEnsemble(WorkflowTestCase):
    def ensemble_config(self, **overrides):
        return self.config(
            b=0.0,
            **{
                "grid.N": 2,
                "grid.M": 8,
                "solver.T": 0.05,
                "solver.nonlinear": False,
                "ensemble.n_paths": 4,
                "ensemble.horizons": (0.02, 0.05),
                **overrides,
            },
        )

    def test_serial_ensemble(self):
        result = run_ensemble(self.ensemble_config(), mapper=map, write_csv=True)
        assert result.exit_code == EXIT_OK
        payload = result.payload
        assert payload["n_paths"] == 4
        assert "log_h1" in payload["growth"]
        assert all(os.path.exists(path) for path in payload["files"])
        with open(payload["files"][1]) as f:
            header = next(csv.reader(f))
        assert header == ["functional", "horizon", "estimate", "stderr", "n", "median", "bound", "semantics", "pass"]

    def test_thread_pool_matches_serial(self):
        serial = run_ensemble(self.ensemble_config(**{"ensemble.base_seed": 2}), mapper=map)
        pooled = run_ensemble(self.ensemble_config(**{"ensemble.base_seed": 2, "output.threads": 2}))
        assert [r["estimate"] for r in serial.records] == [r["estimate"] for r in pooled.records]

    def test_invalid_horizon(self):
        result = run_ensemble(self.ensemble_config(**{"ensemble.horizons": (0.5,)}), mapper=map)
        assert result.exit_code == EXIT_USAGE


class TestResponses:
    """Failure payloads and JSON rendering."""

    def test_failure_of_plain_exception(self):
        result = failure(OSError("disk full"))
        assert result.exit_code == EXIT_FAILURE
        assert result.payload == {"success": False, "error": "disk full", "error_type": "OSError"}

    def test_ndjson_is_sorted_and_plain(self):
        text = to_ndjson([{"b": np.float64(1.5), "a": np.arange(2)}])
        assert text == '{"a": [0, 1], "b": 1.5}\n'

    def test_to_jsonable(self):
        assert to_jsonable({"x": np.int64(3)}) == {"x": 3}
