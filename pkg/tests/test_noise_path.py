"""Tests for driving-path sampling, bridge refinement and the α moment bounds."""

import csv
import math
import os
import shutil
import tempfile

import numpy as np
import pytest
from pydantic import ValidationError

from stochastic_burgers_lab.errors import DataError, DomainError
from stochastic_burgers_lab.noise_path import (
    NoiseConfig,
    align_path,
    doob_sup_moment_bound,
    doob_sup_moment_bound_sharp,
    exp_moment_exact,
    member_seeds,
    path_to_csv,
    read_path_binary,
    refine_path,
    restrict_path,
    sample_path,
    truncate_path,
    write_path_binary,
)

# Statistical gates in this file use four standard errors on fixed seeds.
GATE = 4.0


class TestSamplePath:
    """Sampling, determinism and grid bookkeeping."""

    def test_zero_intensity_is_deterministic(self):
        path = sample_path(NoiseConfig(b=0.0, seed=5), 0.01, 0.1)
        assert np.all(path.w == 0.0)
        assert np.all(path.alpha == 1.0)
        assert path.n_steps == 10

    def test_same_seed_same_path(self):
        config = NoiseConfig(b=0.7, seed=123)
        first = sample_path(config, 0.01, 1.0)
        second = sample_path(config, 0.01, 1.0)
        assert np.array_equal(first.w, second.w)
        assert np.array_equal(first.alpha, second.alpha)

    def test_seed_override(self):
        config = NoiseConfig(b=1.0, seed=1)
        assert not np.array_equal(sample_path(config, 0.1, 1.0).w, sample_path(config, 0.1, 1.0, seed=2).w)
        assert sample_path(config, 0.1, 1.0, seed=2).seed == 2

    def test_path_invariants(self):
        path = sample_path(NoiseConfig(b=2.0, seed=9), 0.001, 0.5)
        assert path.w[0] == 0.0
        assert path.alpha[0] == 1.0
        assert np.array_equal(path.alpha, np.exp(-path.w))
        assert np.all(path.alpha > 0)
        assert np.allclose(path.alpha * path.inverse_alpha(), 1.0)
        assert path.T == pytest.approx(0.5)

    @pytest.mark.parametrize("dt,T", [(0.0, 1.0), (0.1, -1.0), (0.3, 1.0)])
    def test_invalid_grids(self, dt, T):
        with pytest.raises(DomainError):
            sample_path(NoiseConfig(b=1.0), dt, T)

    def test_negative_intensity_rejected(self):
        with pytest.raises(ValidationError):
            NoiseConfig(b=-0.1)

    def test_index_of(self):
        path = sample_path(NoiseConfig(b=1.0), 0.25, 1.0)
        assert path.index_of(0.5) == 2
        assert path.alpha_at(0.0) == 1.0
        with pytest.raises(DomainError):
            path.index_of(0.3)

    def test_variance_of_terminal_value(self):
        b, T = 0.8, 1.0
        seeds = member_seeds(42, 20000)
        samples = np.array([sample_path(NoiseConfig(b=b), T, T, seed=s).w[-1] for s in seeds])
        variance = samples.var(ddof=1)
        stderr = math.sqrt(2.0 / samples.size) * b * T
        assert abs(samples.mean()) <= GATE * math.sqrt(b * T / samples.size)
        assert abs(variance - b * T) <= GATE * stderr

    def test_exponential_martingale(self):
        b, t = 1.0, 1.0
        seeds = member_seeds(7, 20000)
        samples = np.array([math.exp(sample_path(NoiseConfig(b=b), t, t, seed=s).w[-1] - b * t / 2) for s in seeds])
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - 1.0) <= GATE * stderr


class TestRefinement:
    """Brownian-bridge refinement, restriction and alignment."""

    def setup_method(self):
        self.path = sample_path(NoiseConfig(b=1.5, seed=11), 0.1, 1.0)

    def test_refine_keeps_coarse_points(self):
        fine = refine_path(self.path, 4)
        assert fine.n_steps == 40
        assert np.array_equal(fine.w[::4], self.path.w)

    def test_refine_then_restrict_is_identity(self):
        back = restrict_path(refine_path(self.path, 3), 3)
        assert np.array_equal(back.w, self.path.w)
        assert np.array_equal(back.alpha, self.path.alpha)
        assert np.allclose(back.times, self.path.times)

    def test_refinement_is_reproducible(self):
        assert np.array_equal(refine_path(self.path, 2).w, refine_path(self.path, 2).w)

    def test_zero_intensity_refines_to_zero(self):
        flat = sample_path(NoiseConfig(b=0.0), 0.1, 1.0)
        assert np.all(refine_path(flat, 5).w == 0.0)

    def test_bridge_midpoint_variance(self):
        b, dt = 1.0, 0.01
        coarse = sample_path(NoiseConfig(b=b, seed=3), dt, 100.0)
        fine = refine_path(coarse, 2)
        residual = fine.w[1::2] - 0.5 * (coarse.w[:-1] + coarse.w[1:])
        expected = b * dt / 4.0
        assert abs(residual.mean()) <= GATE * math.sqrt(expected / residual.size)
        assert abs(residual.var(ddof=1) - expected) <= GATE * math.sqrt(2.0 / residual.size) * expected

    def test_factor_validation(self):
        with pytest.raises(DomainError):
            refine_path(self.path, 1)
        with pytest.raises(DomainError):
            restrict_path(self.path, 3)

    def test_align(self):
        assert align_path(self.path, 0.1) is self.path
        assert align_path(self.path, 0.05).n_steps == 20
        assert align_path(self.path, 0.2).n_steps == 5
        with pytest.raises(DomainError, match="commensurate"):
            align_path(self.path, 0.03)

    def test_truncate(self):
        short = truncate_path(self.path, 0.5)
        assert short.n_steps == 5
        assert np.array_equal(short.w, self.path.w[:6])


class TestMomentBounds:
    """Closed-form α moment bounds and their Monte Carlo oracles."""

    def test_doob_bound_values(self):
        assert doob_sup_moment_bound(0.0, 1.0, 1.0) == 2.0
        assert doob_sup_moment_bound(1.0, 1.0, 1.0) == pytest.approx(2 * math.e, rel=1e-12)

    def test_sharp_bound_values(self):
        assert doob_sup_moment_bound_sharp(2.0, 1.0, 1.0) == pytest.approx(41.7996, rel=1e-5)
        assert doob_sup_moment_bound_sharp(2.0, 0.0, 1.0) == pytest.approx(4 * math.sqrt(2), rel=1e-12)
        with pytest.raises(DomainError):
            doob_sup_moment_bound_sharp(1.0, 1.0, 1.0)

    def test_exp_moment_values(self):
        assert exp_moment_exact(1.0, 1.0, 1.0) == pytest.approx(1.64872, rel=1e-5)
        assert exp_moment_exact(3.0, 2.0, 0.0) == 1.0

    @pytest.mark.parametrize("n,sign", [(1.0, -1), (1.0, 1), (2.0, -1)])
    def test_doob_bound_dominates_estimate(self, n, sign):
        b, T = 1.0, 1.0
        paths = [sample_path(NoiseConfig(b=b), 0.01, T, seed=s) for s in member_seeds(5, 2000)]
        samples = np.array([np.max(np.exp(-sign * n * p.w)) for p in paths])
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert samples.mean() <= doob_sup_moment_bound(n, b, T) + 3 * stderr

    def test_sharp_bound_dominates_estimate(self):
        b, T, Q = 0.5, 1.0, 2.0
        paths = [sample_path(NoiseConfig(b=b), 0.01, T, seed=s) for s in member_seeds(6, 2000)]
        samples = np.array([np.exp(Q * np.max(p.w)) for p in paths])
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert samples.mean() <= doob_sup_moment_bound_sharp(Q, b, T) + 3 * stderr


class TestSeedsAndIO:
    """Member seeds and path persistence."""

    def setup_method(self):
        self.temp_dir = tempfile.mkdtemp()

    def teardown_method(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_member_seeds(self):
        seeds = member_seeds(0, 64)
        assert len(seeds) == 64
        assert len(set(seeds)) == 64
        assert seeds == member_seeds(0, 64)
        assert member_seeds(0, 8) == seeds[:8]
        assert all(0 <= s < 2**64 for s in seeds)

    def test_binary_round_trip(self):
        path = sample_path(NoiseConfig(b=0.3, seed=17), 0.05, 1.0)
        target = write_path_binary(path, os.path.join(self.temp_dir, "path.b3ds"))
        loaded = read_path_binary(target)
        assert loaded.seed == 17
        assert loaded.b == 0.3
        assert np.array_equal(loaded.w, path.w)
        assert np.array_equal(loaded.times, path.times)

    def test_binary_truncated_payload(self):
        path = sample_path(NoiseConfig(b=0.3), 0.5, 1.0)
        target = write_path_binary(path, os.path.join(self.temp_dir, "path.b3ds"))
        data = open(target, "rb").read()
        with open(target, "wb") as f:
            f.write(data[:-8])
        with pytest.raises(DataError):
            read_path_binary(target)

    def test_csv_export(self):
        path = sample_path(NoiseConfig(b=0.3, seed=2), 0.25, 1.0)
        target = path_to_csv(path, os.path.join(self.temp_dir, "path.csv"))
        with open(target) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["t", "W", "alpha"]
        assert len(rows) == 6
        assert float(rows[-1][1]) == path.w[-1]
