"""Driving Brownian path W(t), the integrating factor α(t) = exp(−W(t)) and its moment bounds.

The noise family Σ b_k B_k(t) enters the equation only through W, which is a
scalar Brownian motion with variance rate b = Σ b_k², so one scalar path is
sampled per realisation.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .container import KIND_NOISE_PATH, read_container, write_container
from .errors import DataError, DomainError

logger = logging.getLogger(__name__)

GRID_TOL = 1e-12
# Philox4x64 from numpy; the stream for a given seed is fixed across platforms.
GENERATOR_NAME = "numpy.random.Philox"

PathLike = Union[str, Path]


class NoiseConfig(BaseModel):
    """Aggregate noise intensity b and the seed of the driving path."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    b: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    seed: int = Field(default=0, ge=0, lt=2**64)


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class NoisePath:
    """Sampled W on a uniform grid together with α = exp(−W)."""

    times: np.ndarray
    w: np.ndarray
    alpha: np.ndarray
    b: float
    seed: int

    def __post_init__(self) -> None:
        arrays = []
        for name in ("times", "w", "alpha"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            arrays.append(arr)
        if len({a.shape for a in arrays}) != 1 or arrays[0].ndim != 1 or arrays[0].size < 2:
            raise DataError("times, w and alpha must be 1-D arrays of equal length ≥ 2")

    @property
    def n_steps(self) -> int:
        return int(self.times.size - 1)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def index_of(self, t: float) -> int:
        """Grid index of time t.

        Raises:
            DomainError: If t is not a grid point
        """
        position = t / self.dt
        i = int(round(position))
        if i < 0 or i > self.n_steps or abs(position - i) > 1e-9:
            raise DomainError(f"t={t} is not on the path grid (dt={self.dt}, T={self.T})")
        return i

    def alpha_at(self, t: float) -> float:
        return float(self.alpha[self.index_of(t)])

    def inverse_alpha(self) -> np.ndarray:
        return 1.0 / self.alpha

    def increments(self) -> np.ndarray:
        return np.diff(self.w)


def _step_count(dt: float, T: float) -> int:
    if not dt > 0 or not T > 0:
        raise DomainError(f"dt and T must be positive, got dt={dt}, T={T}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > GRID_TOL * max(1.0, T):
        raise DomainError(f"dt={dt} does not divide T={T}")
    return steps


def _build_path(times: np.ndarray, w: np.ndarray, b: float, seed: int) -> NoisePath:
    return NoisePath(times=times, w=w, alpha=np.exp(-w), b=b, seed=seed)


def sample_path(config: NoiseConfig, dt: float, T: float, seed: Optional[int] = None) -> NoisePath:
    """Sample W on t_i = i·dt, i = 0..T/dt, with N(0, b·dt) increments.

    Args:
        config: Noise intensity and default seed
        dt: Grid step; must divide T within 1e-12
        T: Horizon
        seed: Overrides ``config.seed``

    Raises:
        DomainError: If dt or T is nonpositive or dt does not divide T
    """
    steps = _step_count(dt, T)
    seed = config.seed if seed is None else seed
    rng = make_generator(seed)
    step = T / steps
    increments = rng.standard_normal(steps) * math.sqrt(config.b * step)
    w = np.concatenate(([0.0], np.cumsum(increments)))
    times = np.linspace(0.0, T, steps + 1)
    return _build_path(times, w, config.b, seed)


def refine_path(path: NoisePath, factor: int) -> NoisePath:
    """Insert factor−1 Brownian-bridge points into every interval.

    Coarse points are kept exactly. Interior points are drawn sequentially:
    with r fine steps left to the right endpoint, the next point has mean
    x + (w_right − x)/r and variance b·h·(r−1)/r for fine step h.
    """
    if factor < 2:
        raise DomainError(f"Refinement factor must be ≥ 2, got {factor}")
    rng = make_generator(
        int(np.random.SeedSequence([path.seed, path.n_steps, factor]).generate_state(1, np.uint64)[0])
    )
    h = path.dt / factor
    fine = np.empty(path.n_steps * factor + 1)
    fine[::factor] = path.w
    left = path.w[:-1]
    right = path.w[1:]
    current = left.copy()
    for j in range(1, factor):
        remaining = factor - j + 1
        mean = current + (right - current) / remaining
        std = math.sqrt(path.b * h * (remaining - 1) / remaining)
        current = mean + std * rng.standard_normal(path.n_steps)
        fine[j::factor] = current
    times = np.linspace(0.0, path.T, path.n_steps * factor + 1)
    logger.debug(f"Refined path seed={path.seed} from {path.n_steps} to {path.n_steps * factor} steps")
    return _build_path(times, fine, path.b, path.seed)


def restrict_path(path: NoisePath, factor: int) -> NoisePath:
    """Keep every factor-th grid point."""
    if factor < 1 or path.n_steps % factor != 0:
        raise DomainError(f"Cannot restrict {path.n_steps} steps by factor {factor}")
    if factor == 1:
        return path
    return NoisePath(
        times=path.times[::factor],
        w=path.w[::factor],
        alpha=path.alpha[::factor],
        b=path.b,
        seed=path.seed,
    )


def align_path(path: NoisePath, dt: float) -> NoisePath:
    """Refine or restrict so the grid step equals dt.

    Raises:
        DomainError: If the two steps are not integer multiples of each other
    """
    ratio = path.dt / dt
    if abs(ratio - round(ratio)) <= 1e-9 * ratio and round(ratio) >= 1:
        factor = int(round(ratio))
        return path if factor == 1 else refine_path(path, factor)
    inverse = dt / path.dt
    if abs(inverse - round(inverse)) <= 1e-9 * inverse and round(inverse) >= 1:
        return restrict_path(path, int(round(inverse)))
    raise DomainError(f"Path step {path.dt} and solver step {dt} are not commensurate")


def truncate_path(path: NoisePath, T: float) -> NoisePath:
    """Prefix of the path up to grid time T."""
    end = path.index_of(T)
    if end < 1:
        raise DomainError(f"Cannot truncate path to T={T}")
    return NoisePath(path.times[: end + 1], path.w[: end + 1], path.alpha[: end + 1], path.b, path.seed)


def member_seeds(base_seed: int, n: int) -> List[int]:
    """Independent 64-bit seeds for ensemble members, fixed by base_seed."""
    children = np.random.SeedSequence(base_seed).spawn(n)
    return [int(child.generate_state(1, np.uint64)[0]) for child in children]


def doob_sup_moment_bound(n: float, b: float, T: float) -> float:
    """2·exp(n²bT), bounding both E sup α^n and E sup α^{−n} on [0, T]."""
    return 2.0 * math.exp(n * n * b * T)


def doob_sup_moment_bound_sharp(Q: float, b: float, T: float) -> float:
    """√2·(Q/(Q−1))^Q·exp(bTQ²/2), bounding E sup_{t≤T} α^{−Q}.

    Raises:
        DomainError: If Q ≤ 1
    """
    if not Q > 1:
        raise DomainError(f"The maximal inequality needs Q > 1, got {Q}")
    return math.sqrt(2.0) * (Q / (Q - 1.0)) ** Q * math.exp(b * T * Q * Q / 2.0)


def exp_moment_exact(Q: float, b: float, t: float) -> float:
    """E exp(Q·W(t)) = exp(Q²bt/2)."""
    return math.exp(Q * Q * b * t / 2.0)


def path_to_csv(path: NoisePath, target: PathLike) -> Path:
    out = Path(target)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "W", "alpha"])
        for t, w, a in zip(path.times, path.w, path.alpha):
            writer.writerow([repr(float(t)), repr(float(w)), repr(float(a))])
    return out


def write_path_binary(path: NoisePath, target: PathLike) -> Path:
    """Container payload: b, then times, W and alpha as float64 arrays."""
    payload = np.concatenate(([path.b], path.times, path.w, path.alpha)).astype("<f8").tobytes()
    return write_container(target, KIND_NOISE_PATH, path.times.size, path.seed, payload)


def read_path_binary(source: PathLike) -> NoisePath:
    size, seed, payload = read_container(source, KIND_NOISE_PATH)
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != 1 + 3 * size:
        raise DataError(f"{source}: payload holds {data.size} values, expected {1 + 3 * size}")
    b = float(data[0])
    times, w, alpha = data[1 : 1 + size], data[1 + size : 1 + 2 * size], data[1 + 2 * size :]
    return NoisePath(times=times, w=w, alpha=alpha, b=b, seed=seed)
