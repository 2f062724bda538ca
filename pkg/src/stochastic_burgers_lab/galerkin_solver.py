"""Pathwise Galerkin integration of the transformed equation and its oracles.

With α(t) = exp(−W(t)) and v = αu the stochastic equation becomes the random PDE

    ∂_t v = νΔv − α⁻¹(t) P_n[(v·∇)v],

which is integrated per path with an integrating-factor Heun scheme. The
untransformed Stratonovich equation is integrated directly for cross-checks.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import fft as sfft

from . import __version__
from .errors import (
    BlowupSignal,
    ConfigurationError,
    DataError,
    DomainError,
    NumericalFailureError,
    TrajectoryParseError,
)
from .noise_path import GENERATOR_NAME, NoiseConfig, NoisePath, align_path, make_generator, truncate_path
from .spectral_core import (
    COMPONENTS,
    SYMMETRY_TOL,
    GridSpec,
    PhysicalField,
    SpectralField,
    analyze,
    convective_term,
    galerkin_project,
    hermitian_defect,
    l2_norm,
    lp_norm,
    seminorm,
    sobolev_norm,
    spatial_mean,
    synthesize,
    wave_numbers,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "t",
    "alpha",
    "linf_v",
    "semi_half",
    "semi_one",
    "semi_three_half",
    "l2",
    "h1",
    "mean_1",
    "mean_2",
    "mean_3",
    "dissipation",
]

ICFamily = Literal["single_mode", "sine_shear", "random_smooth", "one_dimensional"]
FieldKind = Literal["v", "u"]
Status = Literal["completed", "aborted_blowup"]

PathLike = Union[str, Path]
Observer = Callable[[float, float, SpectralField], None]


class InitialCondition(BaseModel):
    """Initial-condition family and its parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: ICFamily = "sine_shear"
    amplitude: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)
    decay_r: float = Field(default=2.0, ge=0.0, allow_inf_nan=False)
    seed: int = Field(default=0, ge=0, lt=2**64)
    mode: Tuple[int, int, int] = (1, 0, 0)
    component: int = Field(default=0, ge=0, le=2)


class SolverConfig(BaseModel):
    """Grid, physics and time-stepping parameters of one integration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: GridSpec
    nu: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    T: float = Field(gt=0.0, allow_inf_nan=False)
    dt: float = Field(gt=0.0, allow_inf_nan=False)
    noise: NoiseConfig = NoiseConfig()
    n: Optional[int] = Field(default=None, ge=0, description="Galerkin radius; defaults to grid.N")
    blowup_threshold: float = Field(default=1e6, gt=0.0)
    record_every: int = Field(default=1, ge=1)
    nonlinear: bool = True
    record_lp: Tuple[float, ...] = ()
    keep_states: bool = False

    @field_validator("record_lp")
    @classmethod
    def _check_lp(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        for p in value:
            if not p >= 1:
                raise ValueError(f"L^p exponents must be ≥ 1, got {p}")
        return value

    @model_validator(mode="after")
    def _check_steps(self) -> "SolverConfig":
        if self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds horizon T={self.T}")
        steps = round(self.T / self.dt)
        if abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def projection_radius(self) -> int:
        return self.grid.N if self.n is None else self.n


@dataclass(frozen=True)
class StepStats:
    """Step size, CFL diagnostic and nonlinear evaluation count of a run."""

    dt: float
    max_cfl: float
    nonlinear_evaluations: int
    steps_taken: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dt": self.dt,
            "max_cfl": self.max_cfl,
            "nonlinear_evaluations": self.nonlinear_evaluations,
            "steps_taken": self.steps_taken,
        }


def lp_column(p: float) -> str:
    return f"lp_{p:g}"


@dataclass(frozen=True)
class TrajectoryRecord:
    """Diagnostics of one trajectory at its recorded instants.

    ``field_kind`` says whether the norms are those of v (transformed) or u.
    """

    times: np.ndarray
    alpha: np.ndarray
    linf: np.ndarray
    semi_half: np.ndarray
    semi_one: np.ndarray
    semi_three_half: np.ndarray
    l2: np.ndarray
    sobolev_one: np.ndarray
    mean: np.ndarray
    dissipation_integral: np.ndarray
    semi_two: Optional[np.ndarray] = None
    h2_integral: Optional[np.ndarray] = None
    lp: Dict[str, np.ndarray] = field(default_factory=dict)
    status: Status = "completed"
    field_kind: FieldKind = "v"
    metadata: Dict[str, Any] = field(default_factory=dict)
    stats: Optional[StepStats] = None
    states: Tuple[SpectralField, ...] = ()
    final_state: Optional[SpectralField] = None

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def seed(self) -> Optional[int]:
        return self.metadata.get("seed")

    def seminorm_series(self, s: float) -> np.ndarray:
        series = {0.5: self.semi_half, 1.0: self.semi_one, 1.5: self.semi_three_half, 2.0: self.semi_two}
        values = series.get(float(s))
        if values is None:
            raise DomainError(f"Seminorm of order {s} is not recorded")
        return values

    def lp_series(self, p: float) -> np.ndarray:
        if math.isinf(p):
            return self.linf
        name = lp_column(p)
        if name not in self.lp:
            raise ConfigurationError(f"L^{p:g} norm was not recorded; add it to record_lp")
        return self.lp[name]

    def columns(self) -> Dict[str, np.ndarray]:
        """Series keyed by CSV column name."""
        out: Dict[str, np.ndarray] = {
            "t": self.times,
            "alpha": self.alpha,
            "linf_v": self.linf,
            "semi_half": self.semi_half,
            "semi_one": self.semi_one,
            "semi_three_half": self.semi_three_half,
            "l2": self.l2,
            "h1": self.sobolev_one,
            "mean_1": self.mean[:, 0],
            "mean_2": self.mean[:, 1],
            "mean_3": self.mean[:, 2],
            "dissipation": self.dissipation_integral,
        }
        if self.semi_two is not None:
            out["semi_two"] = self.semi_two
        if self.h2_integral is not None:
            out["h2_integral"] = self.h2_integral
        out.update(self.lp)
        return out


def _ball_coeffs(N: int, radius: int) -> np.ndarray:
    return (wave_numbers(N)[3] <= radius * radius).astype(np.float64)


def _normalized(field_: SpectralField, grid: GridSpec, amplitude: float) -> SpectralField:
    peak = lp_norm(synthesize(field_, grid), math.inf)
    if peak == 0:
        return field_
    return field_.scaled(amplitude / peak)


def _symmetrized(coeffs: np.ndarray) -> np.ndarray:
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1, ::-1, ::-1]))


def build_initial_condition(spec: InitialCondition, grid: GridSpec) -> SpectralField:
    """Spectral initial data for one of the supported families.

    Raises:
        ConfigurationError: If a requested mode lies outside the grid
    """
    N = grid.N
    side = 2 * N + 1
    coeffs = np.zeros((COMPONENTS, side, side, side), dtype=np.complex128)
    A = spec.amplitude
    if spec.family == "sine_shear":
        coeffs[0, N + 1, N, N] = -0.5j * A
        coeffs[0, N - 1, N, N] = 0.5j * A
        return SpectralField(N, coeffs)
    if spec.family == "single_mode":
        k = spec.mode
        if any(abs(kj) > N for kj in k):
            raise ConfigurationError(f"Mode {k} lies outside the retained cube of N={N}")
        if k == (0, 0, 0):
            coeffs[spec.component, N, N, N] = A
        else:
            coeffs[spec.component, k[0] + N, k[1] + N, k[2] + N] = 0.5 * A
            coeffs[spec.component, N - k[0], N - k[1], N - k[2]] = 0.5 * A
        return SpectralField(N, coeffs)

    rng = make_generator(spec.seed)
    if spec.family == "random_smooth":
        ksq = wave_numbers(N)[3].astype(np.float64)
        weights = np.where(ksq > 0, np.power(np.maximum(ksq, 1.0), -0.5 * spec.decay_r), 0.0)
        noise = rng.standard_normal(coeffs.shape) + 1j * rng.standard_normal(coeffs.shape)
        coeffs = _symmetrized(noise * weights)
    else:
        m = np.arange(1, N + 1, dtype=np.float64)
        line = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) * m ** (-spec.decay_r)
        coeffs[0, N + 1 :, N, N] = line
        coeffs[0, :N, N, N] = np.conj(line[::-1])
    return _normalized(SpectralField(N, coeffs), grid, A)


def embed_x1_profile(profile: np.ndarray, grid: GridSpec) -> SpectralField:
    """Field (f(x1), 0, 0) from samples of f on the grid's x1 nodes."""
    profile = np.asarray(profile, dtype=np.float64)
    if profile.shape != (grid.size,):
        raise DomainError(f"Profile must have {grid.size} samples, got shape {profile.shape}")
    values = np.zeros((COMPONENTS,) + (grid.size,) * 3)
    values[0] = profile[:, None, None]
    return analyze(PhysicalField(values), grid)


def extract_x1_profile(field_: SpectralField, grid: GridSpec, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Samples of the first component of an x1-only field on the x1 nodes.

    Raises:
        DomainError: If the field depends on x2 or x3 or has other components
    """
    N = field_.resolution
    c = field_.coeffs
    scale = max(float(np.max(np.abs(c))), np.finfo(float).tiny)
    residual = c.copy()
    residual[0, :, N, N] = 0
    if np.max(np.abs(residual)) > tol * scale:
        raise DomainError("Field is not of the form (f(x1), 0, 0)")
    M = grid.size
    half = np.zeros(M // 2 + 1, dtype=np.complex128)
    half[: N + 1] = c[0, N:, N, N] * M
    return sfft.irfft(half, n=M)


class _Stepper:
    """Precomputed multipliers for one (grid, ν, dt, n) combination."""

    def __init__(self, cfg: SolverConfig):
        self.grid = cfg.grid
        self.dt = cfg.dt
        self.nonlinear = cfg.nonlinear
        self.threshold = cfg.blowup_threshold
        ksq = wave_numbers(cfg.grid.N)[3]
        self.decay = np.exp(-cfg.nu * ksq * cfg.dt)
        self.mask = _ball_coeffs(cfg.grid.N, cfg.projection_radius)
        self.evaluations = 0

    def drift(self, state: SpectralField, inv_alpha: float) -> np.ndarray:
        """−α⁻¹ P_n[(state·∇)state] as a coefficient array."""
        self.evaluations += 1
        return -inv_alpha * self.mask * convective_term(state, self.grid).coeffs

    def _finish(self, previous: SpectralField, coeffs: np.ndarray, t_next: float) -> SpectralField:
        coeffs = coeffs * self.mask
        if not np.all(np.isfinite(coeffs)):
            raise NumericalFailureError("Non-finite spectral coefficients", t_next, last_state=previous)
        state = previous.with_coeffs(coeffs)
        norm = seminorm(state, 1.0)
        if norm > self.threshold:
            raise BlowupSignal(t_next, norm, self.threshold)
        return state

    def transformed(self, v: SpectralField, inv0: float, inv1: float, t_next: float) -> SpectralField:
        E, dt = self.decay, self.dt
        if not self.nonlinear:
            return self._finish(v, E * v.coeffs, t_next)
        n0 = self.drift(v, inv0)
        stage = v.with_coeffs(E * (v.coeffs + dt * n0))
        n1 = self.drift(stage, inv1)
        return self._finish(v, E * v.coeffs + 0.5 * dt * (E * n0 + n1), t_next)

    def direct(self, u: SpectralField, dW: float, t_next: float) -> SpectralField:
        E, dt = self.decay, self.dt
        if not self.nonlinear:
            stage = E * (u.coeffs + u.coeffs * dW)
            return self._finish(u, E * u.coeffs + 0.5 * (E * u.coeffs + stage) * dW, t_next)
        n0 = self.drift(u, 1.0)
        stage_coeffs = E * (u.coeffs + dt * n0 + u.coeffs * dW)
        n1 = self.drift(u.with_coeffs(stage_coeffs), 1.0)
        new = E * u.coeffs + 0.5 * dt * (E * n0 + n1) + 0.5 * (E * u.coeffs + stage_coeffs) * dW
        return self._finish(u, new, t_next)


def _prepare_path(path: NoisePath, cfg: SolverConfig) -> NoisePath:
    aligned = align_path(path, cfg.dt)
    if aligned.T < cfg.T * (1 - 1e-12):
        raise ConfigurationError(f"Noise path ends at T={aligned.T}, before the horizon {cfg.T}")
    if aligned.n_steps > cfg.n_steps:
        aligned = truncate_path(aligned, cfg.T)
    return aligned


def step_random_pde(
    v: SpectralField, t: float, dt: float, path: NoisePath, cfg: SolverConfig
) -> SpectralField:
    """One integrating-factor Heun step of the transformed Galerkin system.

    The heat part is advanced exactly by exp(−ν|k|²dt); the nonlinear part by
    Heun's rule with α⁻¹ taken at t and t+dt on the (refined) path.

    Raises:
        BlowupSignal: If ‖v‖₁ exceeds ``cfg.blowup_threshold`` after the step
        NumericalFailureError: If a coefficient becomes NaN or infinite
    """
    step_cfg = cfg if abs(cfg.dt - dt) <= 1e-15 * cfg.T else cfg.model_copy(update={"dt": dt})
    stepper = _Stepper(step_cfg)
    fine = align_path(path, dt)
    return stepper.transformed(v, 1.0 / fine.alpha_at(t), 1.0 / fine.alpha_at(t + dt), t + dt)


_SCALAR_SERIES = (
    "t",
    "alpha",
    "linf",
    "semi_half",
    "semi_one",
    "semi_three_half",
    "semi_two",
    "l2",
    "sobolev_one",
    "dissipation",
    "h2_integral",
)


class _Recorder:
    """Collects diagnostics at recorded instants."""

    def __init__(self, cfg: SolverConfig, observer: Optional[Observer] = None):
        self.cfg = cfg
        self.observer = observer
        self.rows: Dict[str, List[float]] = {name: [] for name in _SCALAR_SERIES}
        self.means: List[np.ndarray] = []
        self.lp: Dict[str, List[float]] = {lp_column(p): [] for p in cfg.record_lp if not math.isinf(p)}
        self.states: List[SpectralField] = []
        self.last_step = -1

    def add(self, step: int, t: float, alpha: float, state: SpectralField, dissipation: float, h2: float) -> None:
        physical = synthesize(state, self.cfg.grid)
        semi_one = seminorm(state, 1.0)
        l2 = l2_norm(state)
        row = {
            "t": t,
            "alpha": alpha,
            "linf": lp_norm(physical, math.inf),
            "semi_half": seminorm(state, 0.5),
            "semi_one": semi_one,
            "semi_three_half": seminorm(state, 1.5),
            "semi_two": seminorm(state, 2.0),
            "l2": l2,
            "sobolev_one": l2 + semi_one,
            "dissipation": dissipation,
            "h2_integral": h2,
        }
        for name, value in row.items():
            self.rows[name].append(float(value))
        self.means.append(spatial_mean(state))
        for p in self.cfg.record_lp:
            if not math.isinf(p):
                self.lp[lp_column(p)].append(lp_norm(physical, p))
        if self.cfg.keep_states:
            self.states.append(state)
        if self.observer is not None:
            self.observer(t, alpha, state)
        self.last_step = step

    def build(self, field_kind: FieldKind, status: Status, metadata: Dict[str, Any],
              stats: StepStats, final_state: SpectralField) -> TrajectoryRecord:
        arrays = {name: np.asarray(values, dtype=np.float64) for name, values in self.rows.items()}
        return TrajectoryRecord(
            times=arrays["t"],
            alpha=arrays["alpha"],
            linf=arrays["linf"],
            semi_half=arrays["semi_half"],
            semi_one=arrays["semi_one"],
            semi_three_half=arrays["semi_three_half"],
            l2=arrays["l2"],
            sobolev_one=arrays["sobolev_one"],
            mean=np.asarray(self.means, dtype=np.float64).reshape(-1, 3),
            dissipation_integral=arrays["dissipation"],
            semi_two=arrays["semi_two"],
            h2_integral=arrays["h2_integral"],
            lp={name: np.asarray(values) for name, values in self.lp.items()},
            status=status,
            field_kind=field_kind,
            metadata=metadata,
            stats=stats,
            states=tuple(self.states),
            final_state=final_state,
        )


def initial_data_summary(u0: SpectralField, grid: GridSpec) -> Dict[str, Any]:
    """Norms of the initial data used by the bound evaluators."""
    physical = synthesize(u0, grid)
    return {
        "u0_l1": lp_norm(physical, 1.0),
        "u0_linf": lp_norm(physical, math.inf),
        "u0_h1_seminorm": seminorm(u0, 1.0),
        "u0_h32_seminorm_sq": seminorm(u0, 1.5) ** 2,
        "u0_h32_norm": sobolev_norm(u0, 1.5),
        "u0_mean": spatial_mean(u0).tolist(),
    }


def _check_initial(v0: SpectralField, cfg: SolverConfig) -> SpectralField:
    if v0.resolution != cfg.grid.N:
        raise ConfigurationError(f"Initial data has N={v0.resolution}, grid has N={cfg.grid.N}")
    scale = max(float(np.max(np.abs(v0.coeffs))), np.finfo(float).tiny)
    if hermitian_defect(v0) > SYMMETRY_TOL * scale:
        raise DataError("Initial data is not real-valued (Hermitian symmetry violated)")
    start = galerkin_project(v0, cfg.projection_radius)
    if sobolev_norm(start, 1.0) >= cfg.blowup_threshold:
        logger.warning(
            f"Blowup threshold {cfg.blowup_threshold:g} does not exceed the initial H1 norm "
            f"{sobolev_norm(start, 1.0):.6g}; the run will abort early"
        )
    return start


def _march(
    start: SpectralField,
    path: NoisePath,
    cfg: SolverConfig,
    field_kind: FieldKind,
    advance: Callable[[_Stepper, SpectralField, int, float], SpectralField],
    observer: Optional[Observer] = None,
) -> TrajectoryRecord:
    stepper = _Stepper(cfg)
    recorder = _Recorder(cfg, observer)
    steps = cfg.n_steps
    dt = cfg.dt

    state = start
    dissipation = h2 = 0.0
    semi2_sq = seminorm(state, 2.0) ** 2
    sob2_sq = sobolev_norm(state, 2.0) ** 2
    recorder.add(0, float(path.times[0]), float(path.alpha[0]), state, dissipation, h2)
    status: Status = "completed"
    aborted_at: Optional[float] = None
    taken = 0

    logger.info(
        f"Integrating {field_kind}-equation: N={cfg.grid.N}, M={cfg.grid.size}, nu={cfg.nu}, "
        f"T={cfg.T}, dt={dt}, b={path.b}, seed={path.seed}"
    )
    for i in range(steps):
        t_next = float(path.times[i + 1])
        try:
            state_next = advance(stepper, state, i, t_next)
        except BlowupSignal as signal:
            logger.warning(f"Run aborted: {signal}")
            status = "aborted_blowup"
            aborted_at = signal.t
            break
        new_semi2_sq = seminorm(state_next, 2.0) ** 2
        new_sob2_sq = sobolev_norm(state_next, 2.0) ** 2
        dissipation += 0.5 * dt * (semi2_sq + new_semi2_sq)
        h2 += 0.5 * dt * (sob2_sq + new_sob2_sq)
        semi2_sq, sob2_sq = new_semi2_sq, new_sob2_sq
        state = state_next
        taken = i + 1
        if taken % cfg.record_every == 0 or taken == steps:
            recorder.add(taken, t_next, float(path.alpha[taken]), state, dissipation, h2)

    if recorder.last_step != taken:
        recorder.add(taken, float(path.times[taken]), float(path.alpha[taken]), state, dissipation, h2)

    amplitude = np.asarray(recorder.rows["linf"])
    if field_kind == "v":
        amplitude = amplitude / np.asarray(recorder.rows["alpha"])
    stats = StepStats(
        dt=dt,
        max_cfl=float(np.max(amplitude) * cfg.grid.N * dt),
        nonlinear_evaluations=stepper.evaluations,
        steps_taken=taken,
    )
    metadata: Dict[str, Any] = {
        "field": field_kind,
        "status": status,
        "seed": path.seed,
        "b": path.b,
        "generator": GENERATOR_NAME,
        "version": __version__,
        "config": cfg.model_dump(),
        **initial_data_summary(start, cfg.grid),
    }
    if aborted_at is not None:
        metadata["aborted_at"] = aborted_at
    logger.info(f"Integration {status} after {taken} steps; max CFL {stats.max_cfl:.3g}")
    return recorder.build(field_kind, status, metadata, stats, state)


def integrate(
    v0: SpectralField, path: NoisePath, cfg: SolverConfig, observer: Optional[Observer] = None
) -> TrajectoryRecord:
    """Solve the transformed random PDE along one noise path.

    The path is refined or restricted to ``cfg.dt``. Rows are recorded at step
    0, every ``record_every`` steps and at the last step taken. ``observer`` is
    called as ``observer(t, alpha, state)`` at each recorded instant.

    Raises:
        ConfigurationError: On grid mismatch or a path shorter than T
        DataError: If v0 is not real-valued
        NumericalFailureError: If NaN or Inf appears; carries the last valid state
    """
    start = _check_initial(v0, cfg)
    aligned = _prepare_path(path, cfg)
    inverse_alpha = aligned.inverse_alpha()

    def advance(stepper: _Stepper, v: SpectralField, i: int, t_next: float) -> SpectralField:
        return stepper.transformed(v, float(inverse_alpha[i]), float(inverse_alpha[i + 1]), t_next)

    return _march(start, aligned, cfg, "v", advance, observer)


def integrate_direct_stratonovich(
    u0: SpectralField, path: NoisePath, cfg: SolverConfig, observer: Optional[Observer] = None
) -> TrajectoryRecord:
    """Stochastic Heun integration of du = (νΔu − (u·∇)u)dt + u∘dW.

    Uses the same W increments as ``integrate``; with b = 0 both routes
    perform identical arithmetic.
    """
    start = _check_initial(u0, cfg)
    aligned = _prepare_path(path, cfg)
    increments = aligned.increments()

    def advance(stepper: _Stepper, u: SpectralField, i: int, t_next: float) -> SpectralField:
        return stepper.direct(u, float(increments[i]), t_next)

    return _march(start, aligned, cfg, "u", advance, observer)


def _alpha_on_record(record: TrajectoryRecord, path: Optional[NoisePath]) -> np.ndarray:
    if path is None:
        return record.alpha
    return np.array([path.alpha_at(float(t)) for t in record.times])


def _rescaled_integral(integral: Optional[np.ndarray], factor: np.ndarray) -> Optional[np.ndarray]:
    """Running ∫g ds → running ∫f²g ds, weighting each recorded increment by the mean of f²."""
    if integral is None:
        return None
    weights = 0.5 * (factor[:-1] ** 2 + factor[1:] ** 2)
    start = integral[0] * factor[0] ** 2
    return np.concatenate(([start], start + np.cumsum(weights * np.diff(integral))))


def _rescale_record(
    record: TrajectoryRecord, factor: np.ndarray, field_kind: FieldKind, alpha: np.ndarray
) -> TrajectoryRecord:
    def scaled(values: Optional[np.ndarray]) -> Optional[np.ndarray]:
        return None if values is None else values * factor

    states = tuple(s.scaled(float(f)) for s, f in zip(record.states, factor))
    final_state = record.final_state.scaled(float(factor[-1])) if record.final_state is not None else None
    return replace(
        record,
        alpha=alpha,
        linf=record.linf * factor,
        semi_half=record.semi_half * factor,
        semi_one=record.semi_one * factor,
        semi_three_half=record.semi_three_half * factor,
        semi_two=scaled(record.semi_two),
        l2=record.l2 * factor,
        sobolev_one=record.sobolev_one * factor,
        mean=record.mean * factor[:, None],
        dissipation_integral=_rescaled_integral(record.dissipation_integral, factor),
        h2_integral=_rescaled_integral(record.h2_integral, factor),
        lp={name: values * factor for name, values in record.lp.items()},
        field_kind=field_kind,
        metadata={**record.metadata, "field": field_kind},
        states=states,
        final_state=final_state,
    )


def recover_u(obj: Any, path: Optional[NoisePath] = None, t: Optional[float] = None) -> Any:
    """u = α⁻¹v for a field at time t or for every instant of a v-record.

    Norms scale by α⁻¹ exactly; each increment of the dissipation integrals is
    weighted by the mean of α⁻² over its record interval.

    Raises:
        ConfigurationError: If a field is given without path and time
        DataError: If the record already holds u
    """
    if isinstance(obj, SpectralField):
        if path is None or t is None:
            raise ConfigurationError("Recovering u from a single field needs the path and the time")
        return obj.scaled(1.0 / path.alpha_at(t))
    if not isinstance(obj, TrajectoryRecord):
        raise ConfigurationError(f"Cannot recover u from {type(obj).__name__}")
    if obj.field_kind != "v":
        raise DataError("Record already holds u")
    alpha = _alpha_on_record(obj, path)
    return _rescale_record(obj, 1.0 / alpha, "u", alpha)


def apply_alpha(obj: Any, path: Optional[NoisePath] = None, t: Optional[float] = None) -> Any:
    """v = αu; inverse of ``recover_u``."""
    if isinstance(obj, SpectralField):
        if path is None or t is None:
            raise ConfigurationError("Transforming a single field needs the path and the time")
        return obj.scaled(path.alpha_at(t))
    if not isinstance(obj, TrajectoryRecord):
        raise ConfigurationError(f"Cannot transform {type(obj).__name__}")
    if obj.field_kind != "u":
        raise DataError("Record already holds v")
    alpha = _alpha_on_record(obj, path)
    return _rescale_record(obj, alpha, "v", alpha)


def heat_oracle(v0: SpectralField, t: float, nu: float) -> SpectralField:
    """Exact heat flow: mode k decays by exp(−ν|k|²t)."""
    if t < 0:
        raise DomainError(f"Heat oracle needs t ≥ 0, got {t}")
    ksq = wave_numbers(v0.resolution)[3]
    return v0.with_coeffs(v0.coeffs * np.exp(-nu * ksq * t))


def _cole_hopf_at(u_hat: np.ndarray, M: int, fine: int, nu: float, t: float, drift: float = 0.0) -> np.ndarray:
    k = np.arange(fine // 2 + 1, dtype=np.float64)
    primitive = np.zeros(fine // 2 + 1, dtype=np.complex128)
    count = min(u_hat.size, fine // 2)
    primitive[1:count] = u_hat[1:count] / (1j * k[1:count])
    potential = sfft.irfft(primitive * fine, n=fine)
    phi0 = np.exp(-(potential - potential.min()) / (2.0 * nu))
    phi_hat = sfft.rfft(phi0) * np.exp(-nu * k**2 * t)
    dphi_hat = 1j * k * phi_hat
    dphi_hat[-1] = 0.0
    phi = sfft.irfft(phi_hat, n=fine)
    dphi = sfft.irfft(dphi_hat, n=fine)
    w = -2.0 * nu * dphi / phi
    if drift != 0:
        # u(x, t) = c + w(x − ct, t)
        w_hat = sfft.rfft(w) * np.exp(-1j * k * drift * t)
        w_hat[-1] = 0.0
        w = sfft.irfft(w_hat, n=fine)
    return (drift + w)[:: fine // M]


def cole_hopf_oracle_1d(
    u0_profile: Sequence[float], nu: float, t: float, tol: float = 1e-10, max_size: int = 2**18
) -> np.ndarray:
    """Exact periodic viscous Burgers solution through the Cole–Hopf transform.

    The heat problem for φ = exp(−∫u₀/(2ν)) is solved spectrally at a
    resolution doubled until successive answers agree to ``tol``; the result is
    returned on the input's sample points. A nonzero mean c is carried by the
    Galilean shift u(x, t) = c + w(x − ct, t) with w the zero-mean part.

    Raises:
        DomainError: For non-1D samples, ν ≤ 0 or t < 0
    """
    profile = np.asarray(u0_profile, dtype=np.float64)
    if profile.ndim != 1 or profile.size < 4 or profile.size % 2:
        raise DomainError("Cole–Hopf oracle needs an even number of 1-D samples")
    if nu <= 0 or t < 0:
        raise DomainError(f"Cole–Hopf oracle needs nu > 0 and t ≥ 0, got nu={nu}, t={t}")
    M = profile.size
    drift = float(np.mean(profile))
    fluctuation = profile - drift
    if float(np.max(np.abs(fluctuation))) == 0:
        return np.full(M, drift)
    u_hat = sfft.rfft(fluctuation) / M
    u_hat[0] = 0.0
    u_hat[-1] = 0.0

    fine = M
    while fine < max(256, M):
        fine *= 2
    previous = _cole_hopf_at(u_hat, M, fine, nu, t, drift)
    while fine < max_size:
        fine *= 2
        current = _cole_hopf_at(u_hat, M, fine, nu, t, drift)
        gap = float(np.max(np.abs(current - previous)))
        if gap <= tol * max(1.0, float(np.max(np.abs(current)))):
            logger.debug(f"Cole–Hopf oracle converged at {fine} points (gap {gap:.2e})")
            return current
        previous = current
    logger.warning(f"Cole–Hopf oracle did not reach tolerance {tol:g} by {fine} points")
    return previous


def trajectory_to_csv(record: TrajectoryRecord, target: PathLike) -> Path:
    """Write a self-describing CSV: a JSON metadata comment, a header, then one row per instant."""
    out = Path(target)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {**record.metadata, "field": record.field_kind, "status": record.status}
    if record.stats is not None:
        metadata["stats"] = record.stats.to_dict()
    columns = record.columns()
    names = CSV_COLUMNS + [name for name in columns if name not in CSV_COLUMNS]
    with open(out, "w") as f:
        f.write("# stochastic-burgers-lab trajectory\n")
        f.write("# " + json.dumps(metadata, sort_keys=True, default=str) + "\n")
        f.write(",".join(names) + "\n")
        for i in range(len(record)):
            f.write(",".join(f"{float(columns[name][i]):.17g}" for name in names) + "\n")
    logger.debug(f"Wrote {len(record)} rows to {out}")
    return out


def trajectory_from_csv(source: PathLike) -> TrajectoryRecord:
    """Parse a trajectory CSV written by ``trajectory_to_csv``.

    Raises:
        TrajectoryParseError: Naming the offending line
    """
    path = str(source)
    try:
        lines = Path(source).read_text().splitlines()
    except OSError as e:
        raise TrajectoryParseError(f"cannot read file: {e}", path=path) from e

    metadata: Dict[str, Any] = {}
    header: Optional[List[str]] = None
    rows: List[List[float]] = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            body = text[1:].strip()
            if body.startswith("{"):
                try:
                    metadata.update(json.loads(body))
                except json.JSONDecodeError as e:
                    raise TrajectoryParseError(f"invalid metadata block: {e.msg}", path, lineno) from e
            continue
        cells = [cell.strip() for cell in text.split(",")]
        if header is None:
            missing = [name for name in CSV_COLUMNS if name not in cells]
            if missing:
                raise TrajectoryParseError(f"header lacks columns {missing}", path, lineno)
            header = cells
            continue
        if len(cells) != len(header):
            raise TrajectoryParseError(f"expected {len(header)} fields, found {len(cells)}", path, lineno)
        try:
            values = [float(cell) for cell in cells]
        except ValueError as e:
            raise TrajectoryParseError(f"non-numeric field: {e}", path, lineno) from e
        if not all(math.isfinite(value) for value in values):
            raise TrajectoryParseError("non-finite value", path, lineno)
        if rows and values[header.index("t")] <= rows[-1][header.index("t")]:
            raise TrajectoryParseError("times must increase", path, lineno)
        rows.append(values)
    if header is None or not rows:
        raise TrajectoryParseError("no data rows", path)

    data = np.asarray(rows, dtype=np.float64)
    col = {name: data[:, i] for i, name in enumerate(header)}
    field_kind = metadata.get("field", "v")
    if field_kind not in ("v", "u"):
        raise TrajectoryParseError(f"unknown field kind {field_kind!r}", path)
    status = metadata.get("status", "completed")
    if status not in ("completed", "aborted_blowup"):
        raise TrajectoryParseError(f"unknown status {status!r}", path)
    return TrajectoryRecord(
        times=col["t"],
        alpha=col["alpha"],
        linf=col["linf_v"],
        semi_half=col["semi_half"],
        semi_one=col["semi_one"],
        semi_three_half=col["semi_three_half"],
        l2=col["l2"],
        sobolev_one=col["h1"],
        mean=np.stack([col["mean_1"], col["mean_2"], col["mean_3"]], axis=1),
        dissipation_integral=col["dissipation"],
        semi_two=col.get("semi_two"),
        h2_integral=col.get("h2_integral"),
        lp={name: values for name, values in col.items() if name.startswith("lp_")},
        status=status,
        field_kind=field_kind,
        metadata=metadata,
    )
