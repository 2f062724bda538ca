"""Shared fixtures; ``src`` is put on the path so tests run without installing."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from stochastic_burgers_lab.galerkin_solver import InitialCondition, SolverConfig  # noqa: E402
from stochastic_burgers_lab.noise_path import NoiseConfig  # noqa: E402
from stochastic_burgers_lab.spectral_core import GridSpec  # noqa: E402


@pytest.fixture
def small_grid() -> GridSpec:
    return GridSpec(N=4)


@pytest.fixture
def heat_config(small_grid: GridSpec) -> SolverConfig:
    """Linear heat flow, N=4, T=0.1, dt=0.01, noisy path."""
    return SolverConfig(grid=small_grid, T=0.1, dt=0.01, nonlinear=False, noise=NoiseConfig(b=0.5, seed=7))


@pytest.fixture
def burgers_config(small_grid: GridSpec) -> SolverConfig:
    return SolverConfig(grid=small_grid, T=0.1, dt=0.01, noise=NoiseConfig(b=0.5, seed=3))


@pytest.fixture
def shear() -> InitialCondition:
    return InitialCondition(family="sine_shear", amplitude=1.0)
