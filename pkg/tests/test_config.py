"""Tests for the run configuration file format and overrides."""

import os
import shutil
import tempfile

import pytest

from stochastic_burgers_lab.config import (
    DEFAULT_DT,
    DEFAULT_N,
    DEFAULT_T,
    apply_overrides,
    default_run_config,
    load_run_config,
    parse_run_config,
    render_run_config,
)
from stochastic_burgers_lab.errors import ConfigurationError

SAMPLE = """
[grid]
N = 6

[solver]
nu = 0.5
T = 0.2
dt = 0.005
record_lp = 2, 4

[noise]
b = 0.25
seed = 99

[initial]
family = single_mode
mode = 1, 1, 0
component = 1

[ensemble]
n_paths = 32
horizons = 0.1, 0.2

[tolerance]
fit_window = 0.05, 0.2

[output]
threads = 3
"""


class TestParse:
    """Parsing and validation of configuration text."""

    def test_defaults(self):
        config = default_run_config()
        assert config.solver.grid.N == DEFAULT_N
        assert config.solver.T == DEFAULT_T
        assert config.solver.dt == DEFAULT_DT
        assert config.solver.noise.b == 0.0
        assert config.output.directory == "runs"

    def test_sample_file(self):
        config = parse_run_config(SAMPLE)
        assert config.solver.grid.N == 6
        assert config.solver.nu == 0.5
        assert config.solver.n_steps == 40
        assert config.solver.record_lp == (2.0, 4.0)
        assert config.solver.noise.seed == 99
        assert config.initial.mode == (1, 1, 0)
        assert config.ensemble.horizons == (0.1, 0.2)
        assert config.tolerance.fit_window == (0.05, 0.2)
        assert config.output.threads == 3

    def test_empty_text_gives_defaults(self):
        assert parse_run_config("") == default_run_config()

    def test_round_trip(self):
        config = parse_run_config(SAMPLE)
        assert parse_run_config(render_run_config(config)) == config
        assert parse_run_config(render_run_config(default_run_config())) == default_run_config()

    def test_round_trip_preserves_floats(self):
        config = parse_run_config("[solver]\nnu = 0.1\nT = 0.3\ndt = 0.1\n[noise]\nb = 0.30000000000000004\n")
        again = parse_run_config(render_run_config(config))
        assert again.solver.noise.b == 0.30000000000000004

    @pytest.mark.parametrize(
        "text,message",
        [
            ("[physics]\nnu = 1\n", "Unknown section"),
            ("[solver]\nviscosity = 1\n", "Unknown key"),
            ("[solver]\nT = 0.1\ndt = 0.03\n", "Invalid configuration"),
            ("[noise]\nb = -1\n", "Invalid configuration"),
            ("[solver]\nrecord_lp = two\n", "cannot parse"),
            ("no section header\n", "<string>"),
            ("[ensemble]\nn_paths = 1\n", "Invalid configuration"),
        ],
    )
    def test_invalid_text(self, text, message):
        with pytest.raises(ConfigurationError, match=message):
            parse_run_config(text)

    def test_ensemble_config_combines_solver(self):
        config = parse_run_config(SAMPLE)
        ensemble = config.ensemble_config()
        assert ensemble.n_paths == 32
        assert ensemble.solver == config.solver
        assert ensemble.initial.family == "single_mode"

    def test_ensemble_horizon_beyond_solver(self):
        config = parse_run_config("[ensemble]\nhorizons = 0.5\n")
        with pytest.raises(ConfigurationError, match="ensemble"):
            config.ensemble_config()


class TestFilesAndOverrides:
    """Loading from disk and command-line overrides."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_load_file(self):
        path = os.path.join(self.temp_dir, "run.ini")
        with open(path, "w") as f:
            f.write(SAMPLE)
        assert load_run_config(path) == parse_run_config(SAMPLE)

    def test_load_none_gives_defaults(self):
        assert load_run_config(None) == default_run_config()

    def test_missing_file(self):
        with pytest.raises(ConfigurationError, match="not found"):
            load_run_config(os.path.join(self.temp_dir, "absent.ini"))

    def test_overrides_win(self):
        config = apply_overrides(parse_run_config(SAMPLE), {"noise.seed": 5, "solver.nu": 2.0, "output.directory": "x"})
        assert config.solver.noise.seed == 5
        assert config.solver.nu == 2.0
        assert config.output.directory == "x"
        assert config.solver.grid.N == 6

    def test_none_overrides_are_skipped(self):
        config = parse_run_config(SAMPLE)
        assert apply_overrides(config, {"noise.seed": None, "solver.T": None}) == config

    def test_unknown_override(self):
        with pytest.raises(ConfigurationError, match="Unknown override"):
            apply_overrides(default_run_config(), {"solver.viscosity": 1.0})

    def test_invalid_override_value(self):
        with pytest.raises(ConfigurationError):
            apply_overrides(default_run_config(), {"solver.dt": 0.03})
