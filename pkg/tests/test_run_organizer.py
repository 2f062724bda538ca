"""Tests for RunOrganizer functionality."""

import json
import os
import shutil
import tempfile

import pytest

from stochastic_burgers_lab import __version__
from stochastic_burgers_lab.run_organizer import CONFIG_NAME, MANIFEST_NAME, RunOrganizer, host_float_info


class TestRunOrganizer:
    """Test cases for the RunOrganizer class."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()
        self.organizer = RunOrganizer(output_root=self.temp_dir)

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_init(self):
        assert self.organizer.output_root == os.path.abspath(self.temp_dir)
        assert self.organizer.run_dir is None

    def test_create_run_dir(self):
        path = self.organizer.create_run_dir("simulate", seed=7)
        assert os.path.isdir(path)
        assert os.path.basename(path).startswith("simulate_")
        assert path.endswith("_seed7")

    def test_run_dirs_are_unique(self):
        first = self.organizer.create_run_dir("verify")
        second = self.organizer.create_run_dir("verify")
        assert first != second

    def test_save_path_requires_run_dir(self):
        with pytest.raises(RuntimeError):
            self.organizer.get_save_path("trajectory.csv")

    def test_save_path_is_sanitized(self):
        run_dir = self.organizer.create_run_dir("oracle")
        path = self.organizer.get_save_path("bad:name?.csv")
        assert os.path.dirname(path) == run_dir
        assert os.path.basename(path) == "bad_name_.csv"

    def test_config_and_manifest(self):
        self.organizer.create_run_dir("simulate", seed=3)
        self.organizer.write_config("[noise]\nseed = 3\n")
        result = self.organizer.get_save_path("trajectory.csv")
        with open(result, "w") as f:
            f.write("t\n")
        sidecar = self.organizer.save_metadata(result, {"rows": 1})
        manifest_path = self.organizer.write_manifest("simulate", 3, {"status": "completed"})

        with open(sidecar) as f:
            assert json.load(f) == {"result_path": result, "rows": 1}
        with open(manifest_path) as f:
            manifest = json.load(f)
        assert manifest["code_version"] == __version__
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 3
        assert manifest["status"] == "completed"
        assert manifest["files"] == sorted([CONFIG_NAME, "trajectory.csv", "trajectory_metadata.json"])
        assert os.path.basename(manifest_path) == MANIFEST_NAME
        assert manifest["host"]["float64_eps"] == pytest.approx(2.220446049250313e-16)

    def test_metadata_failure_returns_none(self):
        assert self.organizer.save_metadata(os.path.join(self.temp_dir, "missing", "x.csv"), {}) is None

    def test_recent_runs(self):
        self.organizer.create_run_dir("simulate", seed=1)
        self.organizer.write_manifest("simulate", 1)
        self.organizer.create_run_dir("ensemble")
        runs = self.organizer.get_recent_runs()
        assert len(runs) == 2
        simulate_runs = self.organizer.get_recent_runs("simulate")
        assert len(simulate_runs) == 1
        assert simulate_runs[0]["manifest"]["seed"] == 1
        assert len(self.organizer.get_recent_runs(limit=1)) == 1

    def test_recent_runs_of_missing_root(self):
        assert RunOrganizer(os.path.join(self.temp_dir, "nowhere")).get_recent_runs() == []

    def test_host_float_info(self):
        info = host_float_info()
        assert {"float64_eps", "byteorder", "numpy", "scipy"} <= set(info)
