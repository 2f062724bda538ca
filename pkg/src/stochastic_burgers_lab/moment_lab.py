"""Monte Carlo moment estimates over path ensembles and the closed forms they are tested against."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.optimize import curve_fit

from .errors import DataError, DomainError
from .galerkin_solver import (
    InitialCondition,
    SolverConfig,
    TrajectoryRecord,
    build_initial_condition,
    integrate,
    recover_u,
)
from .noise_path import (
    NoisePath,
    doob_sup_moment_bound,
    doob_sup_moment_bound_sharp,
    exp_moment_exact,
    member_seeds,
    sample_path,
)

logger = logging.getLogger(__name__)

GATE_STDERRS = 3.0
HIGH_VARIANCE_EXPONENT = 4.0

Mapper = Callable[[Callable[[Any], Any], Iterable[Any]], Iterable[Any]]
Semantics = Literal["one_sided", "two_sided", "none"]


class EnsembleConfig(BaseModel):
    """Ensemble size, seeding, solver and the moment orders under study."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_paths: int = Field(ge=2)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    solver: SolverConfig
    initial: InitialCondition = InitialCondition()
    horizons: Tuple[float, ...] = ()
    p: float = Field(default=2.0, ge=1.0)
    q: float = Field(default=1.0, ge=1.0, allow_inf_nan=False)
    Q: float = Field(default=2.0, gt=1.0, allow_inf_nan=False)
    order: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)

    @field_validator("horizons")
    @classmethod
    def _check_sorted(cls, value: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(h <= 0 for h in value):
            raise ValueError("horizons must be positive")
        if list(value) != sorted(value):
            raise ValueError(f"horizons must be sorted ascending, got {value}")
        return value

    @model_validator(mode="after")
    def _check_horizons(self) -> "EnsembleConfig":
        if self.horizons and self.horizons[-1] > self.solver.T * (1 + 1e-12):
            raise ValueError(f"horizon {self.horizons[-1]} exceeds solver horizon T={self.solver.T}")
        return self

    @property
    def effective_horizons(self) -> Tuple[float, ...]:
        return self.horizons or (self.solver.T,)


@dataclass(frozen=True)
class MomentEstimate:
    """Sample mean with its standard error and the analytic value it is compared with."""

    functional: str
    horizon: float
    value: float
    stderr: float
    n: int
    bound: Optional[float] = None
    bound_source: str = ""
    semantics: Semantics = "none"
    passed: Optional[bool] = None
    median: Optional[float] = None
    conditional: bool = False
    aborted: int = 0
    params: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "functional": self.functional,
            "horizon": self.horizon,
            "estimate": self.value,
            "stderr": self.stderr,
            "n": self.n,
            "median": self.median,
            "bound": self.bound,
            "bound_source": self.bound_source,
            "semantics": self.semantics,
            "pass": self.passed,
            "conditional": self.conditional,
            "aborted": self.aborted,
            "params": self.params,
            **self.extras,
        }


@dataclass(frozen=True)
class GrowthFit:
    """Envelope a·exp(r·T) fitted to per-horizon estimates."""

    a: float
    r: float
    residual: float
    converged: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {"a": self.a, "r": self.r, "residual": self.residual, "converged": self.converged}


@dataclass(frozen=True)
class EnsembleReport:
    """Per-horizon estimates of the tracked functionals and their growth envelopes."""

    estimates: List[MomentEstimate]
    growth: Dict[str, GrowthFit] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    def to_records(self) -> List[Dict[str, Any]]:
        """One NDJSON object per (functional, horizon), growth fits attached to their functional."""
        rows = []
        for estimate in self.estimates:
            row = estimate.to_dict()
            if estimate.functional in self.growth:
                row["growth"] = self.growth[estimate.functional].to_dict()
            rows.append(row)
        return rows

    @property
    def all_passed(self) -> bool:
        return all(e.passed is not False for e in self.estimates)


def _summarize(samples: Sequence[float]) -> Tuple[float, float, float]:
    """Mean, standard error and median of a sample in index order."""
    data = np.asarray(samples, dtype=np.float64)
    if data.size == 0:
        raise DataError("No samples to summarize")
    median = float(np.median(data))
    if np.all(data == data[0]):
        return float(data[0]), 0.0, median
    mean = float(np.mean(data))
    stderr = float(np.std(data, ddof=1) / math.sqrt(data.size)) if data.size > 1 else 0.0
    return mean, stderr, median


def _gate(value: float, stderr: float, bound: float, semantics: Semantics) -> bool:
    slack = GATE_STDERRS * stderr + 1e-12 * abs(bound)
    if semantics == "one_sided":
        return value <= bound + slack
    if semantics == "two_sided":
        return abs(value - bound) <= slack
    return True


def _run_member(task: Tuple[EnsembleConfig, int]) -> TrajectoryRecord:
    cfg, seed = task
    solver = cfg.solver
    path = sample_path(solver.noise, solver.dt, solver.T, seed=seed)
    v0 = build_initial_condition(cfg.initial, solver.grid)
    record = integrate(v0, path, solver)
    logger.debug(f"Member seed={seed} finished with status {record.status}")
    return record


def _with_lp(cfg: EnsembleConfig) -> EnsembleConfig:
    if math.isinf(cfg.p) or cfg.p in cfg.solver.record_lp:
        return cfg
    lp = tuple(sorted(set(cfg.solver.record_lp) | {cfg.p}))
    return cfg.model_copy(update={"solver": cfg.solver.model_copy(update={"record_lp": lp})})


def simulate_ensemble(cfg: EnsembleConfig, mapper: Mapper = map) -> List[TrajectoryRecord]:
    """Integrate one v-trajectory per member seed.

    Args:
        cfg: Ensemble configuration; the L^p order ``cfg.p`` is added to the recorded norms
        mapper: Order-preserving map, e.g. ``ThreadPoolExecutor.map``

    Returns:
        Records in member-index order
    """
    cfg = _with_lp(cfg)
    seeds = member_seeds(cfg.base_seed, cfg.n_paths)
    logger.info(f"Simulating {cfg.n_paths} members from base seed {cfg.base_seed}")
    members = list(mapper(_run_member, [(cfg, seed) for seed in seeds]))
    aborted = sum(1 for m in members if not m.completed)
    if aborted:
        logger.warning(f"{aborted} of {len(members)} members aborted on blowup")
    return members


def _members(cfg: EnsembleConfig, members: Optional[List[TrajectoryRecord]], mapper: Mapper) -> List[TrajectoryRecord]:
    return simulate_ensemble(cfg, mapper) if members is None else members


def _prefix(record: TrajectoryRecord, horizon: float) -> int:
    """Number of recorded instants with t ≤ horizon."""
    return int(np.searchsorted(record.times, horizon * (1 + 1e-12), side="right"))


def _completed(members: List[TrajectoryRecord]) -> Tuple[List[TrajectoryRecord], int]:
    done = [m for m in members if m.completed]
    if not done:
        raise DataError("Every ensemble member aborted; no estimate is possible")
    return done, len(members) - len(done)


def holder_split_bound(q: float, u0_h32: float, b: float, T: float, p_prime: float = 2.0) -> float:
    """Envelope (E‖u₀‖^{qp'}_{H^{3/2}})^{1/p'}·2^{1/(2q')}·(qq'/(qq'−1))^q·exp(bTq²q'/2), constant c = 1.

    With deterministic u₀ the first factor is ‖u₀‖^q_{H^{3/2}}; q' is the Hölder conjugate of p'.

    Raises:
        DomainError: If p' ≤ 1 or q < 1
    """
    if not p_prime > 1:
        raise DomainError(f"p' must exceed 1, got {p_prime}")
    if q < 1:
        raise DomainError(f"q must be ≥ 1, got {q}")
    q_prime = p_prime / (p_prime - 1.0)
    Q = q * q_prime
    return u0_h32**q * 2.0 ** (1.0 / (2.0 * q_prime)) * (Q / (Q - 1.0)) ** q * math.exp(b * T * q * q * q_prime / 2.0)


def _factorized_linf(
    members: List[TrajectoryRecord], q: float, horizon: float
) -> Tuple[List[float], List[float]]:
    """Per member: sup|u|_∞^q over instants ≤ horizon and |u(0)|_∞^q·sup α^{−q}."""
    direct, factorized = [], []
    for record in members:
        end = _prefix(record, horizon)
        inv_alpha = 1.0 / record.alpha[:end]
        direct.append(float(np.max((inv_alpha * record.linf[:end]) ** q)))
        factorized.append(float(record.linf[0] ** q * np.max(inv_alpha**q)))
    return direct, factorized


def estimate_sup_lp_moment(
    cfg: EnsembleConfig,
    members: Optional[List[TrajectoryRecord]] = None,
    horizon: Optional[float] = None,
    mapper: Mapper = map,
) -> MomentEstimate:
    """E sup_{t≤T}|u(t)|_p^q over recorded instants of the recovered u.

    For p = ∞ the estimate is compared one-sidedly with the factorized value
    |u₀|_∞^q·E sup α^{−q}. The Hölder-split envelope is reported alongside.

    Raises:
        ConfigurationError: If |·|_p was not recorded
    """
    horizon = cfg.effective_horizons[-1] if horizon is None else horizon
    done, aborted = _completed(_members(cfg, members, mapper))
    samples = []
    for record in done:
        u = recover_u(record)
        end = _prefix(u, horizon)
        samples.append(float(np.max(u.lp_series(cfg.p)[:end] ** cfg.q)))
    value, stderr, median = _summarize(samples)
    b = cfg.solver.noise.b
    u0_h32 = float(done[0].metadata.get("u0_h32_norm", 0.0))
    extras: Dict[str, Any] = {"holder_envelope": holder_split_bound(cfg.q, u0_h32, b, horizon)}
    bound: Optional[float] = None
    semantics: Semantics = "none"
    passed: Optional[bool] = None
    source = "holder split, c = 1"
    if math.isinf(cfg.p):
        direct, factorized = _factorized_linf(done, cfg.q, horizon)
        diff_mean, diff_stderr, _ = _summarize(np.subtract(factorized, direct))
        bound = _summarize(factorized)[0]
        semantics = "one_sided"
        passed = bool(diff_mean >= -GATE_STDERRS * diff_stderr - 1e-12 * abs(bound))
        source = "factorized sup |u|_inf^q <= |u0|_inf^q sup alpha^-q"
    if aborted:
        logger.warning(f"sup L^{cfg.p:g} moment is conditional on {len(done)} completed members")
    return MomentEstimate(
        functional="sup_lp",
        horizon=horizon,
        value=value,
        stderr=stderr,
        n=len(done),
        bound=bound,
        bound_source=source,
        semantics=semantics,
        passed=passed,
        median=median,
        conditional=aborted > 0,
        aborted=aborted,
        params={"p": cfg.p, "q": cfg.q, "b": b},
        extras=extras,
    )


def estimate_sup_linf_moment(
    cfg: EnsembleConfig,
    members: Optional[List[TrajectoryRecord]] = None,
    horizon: Optional[float] = None,
    mapper: Mapper = map,
) -> MomentEstimate:
    """E sup|u|_∞^q with the factorized upper value |u₀|^q_∞·E sup α^{−q}.

    Dominance is tested on the paired per-member differences, one-sided at
    three standard errors.
    """
    horizon = cfg.effective_horizons[-1] if horizon is None else horizon
    done, aborted = _completed(_members(cfg, members, mapper))
    direct, factorized = _factorized_linf(done, cfg.q, horizon)
    value, stderr, median = _summarize(direct)
    bound, bound_stderr, _ = _summarize(factorized)
    diff_mean, diff_stderr, _ = _summarize(np.subtract(factorized, direct))
    passed = diff_mean >= -GATE_STDERRS * diff_stderr - 1e-12 * abs(bound)
    return MomentEstimate(
        functional="sup_linf",
        horizon=horizon,
        value=value,
        stderr=stderr,
        n=len(done),
        bound=bound,
        bound_source="factorized sup |u|_inf^q <= |u0|_inf^q sup alpha^-q",
        semantics="one_sided",
        passed=bool(passed),
        median=median,
        conditional=aborted > 0,
        aborted=aborted,
        params={"q": cfg.q, "b": cfg.solver.noise.b},
        extras={"factorized_stderr": bound_stderr, "paired_margin": diff_mean, "paired_stderr": diff_stderr},
    )


def fit_growth(horizons: Sequence[float], values: Sequence[float]) -> GrowthFit:
    """Least-squares fit of a·exp(r·T); constant data gives r = 0."""
    H = np.asarray(horizons, dtype=np.float64)
    y = np.asarray(values, dtype=np.float64)
    if H.size < 2 or np.all(y == y[0]):
        return GrowthFit(a=float(y[0]) if y.size else 0.0, r=0.0, residual=0.0)
    if np.all(y > 0):
        r0, log_a0 = np.polyfit(H, np.log(y), 1)
        guess = (math.exp(log_a0), r0)
    else:
        guess = (float(np.mean(y)), 0.0)

    def envelope(T: np.ndarray, a: float, r: float) -> np.ndarray:
        return a * np.exp(r * T)

    converged = True
    try:
        (a, r), _ = curve_fit(envelope, H, y, p0=guess, maxfev=10000)
    except (RuntimeError, ValueError) as e:
        logger.warning(f"Growth fit did not converge ({e}); using the log-linear guess")
        (a, r), converged = guess, False
    residual = float(np.sqrt(np.mean((envelope(H, a, r) - y) ** 2)))
    return GrowthFit(a=float(a), r=float(r), residual=residual, converged=converged)


def estimate_log_h1_moment(
    cfg: EnsembleConfig, members: Optional[List[TrajectoryRecord]] = None, mapper: Mapper = map
) -> EnsembleReport:
    """E sup_{t≤T} log(1+‖u(t)‖²_{H¹}) per horizon with an exponential envelope fit.

    Estimates that decrease by more than three standard errors between
    horizons are flagged as a sign of under-resolution.
    """
    done, aborted = _completed(_members(cfg, members, mapper))
    log_h1 = [np.log1p(recover_u(record).sobolev_one ** 2) for record in done]
    estimates: List[MomentEstimate] = []
    flags: List[str] = []
    for horizon in cfg.effective_horizons:
        samples = [float(np.max(series[: _prefix(record, horizon)])) for series, record in zip(log_h1, done)]
        value, stderr, median = _summarize(samples)
        if not math.isfinite(value):
            flags.append(f"log_h1 estimate at T={horizon:g} is not finite")
        if estimates and value < estimates[-1].value - GATE_STDERRS * max(stderr, estimates[-1].stderr):
            flags.append(f"log_h1 estimate decreases between T={estimates[-1].horizon:g} and T={horizon:g}")
        estimates.append(
            MomentEstimate(
                functional="log_h1",
                horizon=horizon,
                value=value,
                stderr=stderr,
                n=len(done),
                median=median,
                conditional=aborted > 0,
                aborted=aborted,
                params={"b": cfg.solver.noise.b},
            )
        )
    growth = fit_growth([e.horizon for e in estimates], [e.value for e in estimates])
    for flag in flags:
        logger.warning(flag)
    logger.info(f"log-H1 envelope: a={growth.a:.4g}, r={growth.r:.4g}, residual={growth.residual:.2e}")
    return EnsembleReport(estimates=estimates, growth={"log_h1": growth}, flags=flags)


def _sample_paths(cfg: EnsembleConfig, dt: float, T: float, mapper: Mapper) -> List[NoisePath]:
    seeds = member_seeds(cfg.base_seed, cfg.n_paths)
    noise = cfg.solver.noise
    return list(mapper(lambda seed: sample_path(noise, dt, T, seed=seed), seeds))


def _estimate(
    functional: str,
    horizon: float,
    samples: Sequence[float],
    bound: float,
    source: str,
    semantics: Semantics,
    params: Dict[str, Any],
    extras: Optional[Dict[str, Any]] = None,
) -> MomentEstimate:
    value, stderr, median = _summarize(samples)
    passed = _gate(value, stderr, bound, semantics)
    if not passed:
        logger.warning(f"{functional}: estimate {value:.6g} ± {stderr:.2g} vs bound {bound:.6g} ({semantics}) failed")
    return MomentEstimate(
        functional=functional,
        horizon=horizon,
        value=value,
        stderr=stderr,
        n=len(samples),
        bound=bound,
        bound_source=source,
        semantics=semantics,
        passed=passed,
        median=median,
        params=params,
        extras=extras or {},
    )


def check_alpha_sup_moment(
    cfg: EnsembleConfig, Q: Optional[float] = None, horizon: Optional[float] = None, mapper: Mapper = map
) -> MomentEstimate:
    """MC E sup_{t≤T} α^{−Q} on the solver grid against √2(Q/(Q−1))^Q exp(bTQ²/2).

    Passes when the estimate is below the bound and above the lognormal floor
    exp(Q²bT/2), both at three standard errors.

    Raises:
        DomainError: If Q ≤ 1
    """
    Q = cfg.Q if Q is None else Q
    T = cfg.effective_horizons[-1] if horizon is None else horizon
    b = cfg.solver.noise.b
    bound = doob_sup_moment_bound_sharp(Q, b, T)
    floor = exp_moment_exact(Q, b, T)
    paths = _sample_paths(cfg, cfg.solver.dt, T, mapper)
    samples = [float(np.exp(Q * np.max(path.w))) for path in paths]
    high_variance = Q * Q * b * T > HIGH_VARIANCE_EXPONENT
    if high_variance:
        logger.warning(f"Q²bT = {Q * Q * b * T:.3g}: sup α^-Q estimates are heavy-tailed")
    estimate = _estimate(
        "alpha_sup",
        T,
        samples,
        bound,
        "doob maximal inequality, sharp constant",
        "one_sided",
        {"Q": Q, "b": b, "dt": cfg.solver.dt, "high_variance": high_variance},
        {"floor": floor},
    )
    above_floor = estimate.value >= floor - GATE_STDERRS * estimate.stderr - 1e-12 * floor
    if not above_floor:
        logger.warning(f"alpha_sup estimate {estimate.value:.6g} lies below the lognormal floor {floor:.6g}")
    return replace(estimate, passed=bool(estimate.passed and above_floor))


def check_exp_moment(
    cfg: EnsembleConfig, Q: Optional[float] = None, horizon: Optional[float] = None, mapper: Mapper = map
) -> MomentEstimate:
    """MC E exp(Q·W(T)) against exp(Q²bT/2), two-sided at three standard errors."""
    Q = cfg.Q if Q is None else Q
    T = cfg.effective_horizons[-1] if horizon is None else horizon
    b = cfg.solver.noise.b
    paths = _sample_paths(cfg, T, T, mapper)
    samples = [math.exp(Q * float(path.w[-1])) for path in paths]
    return _estimate(
        "exp_moment", T, samples, exp_moment_exact(Q, b, T), "lognormal moment", "two_sided", {"Q": Q, "b": b}
    )


def check_doob_moment(
    cfg: EnsembleConfig,
    order: Optional[float] = None,
    sign: int = -1,
    horizon: Optional[float] = None,
    mapper: Mapper = map,
) -> MomentEstimate:
    """MC E sup_{t≤T} α^{sign·n} against 2·exp(n²bT), one-sided.

    Raises:
        DomainError: If sign is not ±1
    """
    if sign not in (1, -1):
        raise DomainError(f"sign must be +1 or -1, got {sign}")
    n = cfg.order if order is None else order
    T = cfg.effective_horizons[-1] if horizon is None else horizon
    b = cfg.solver.noise.b
    paths = _sample_paths(cfg, cfg.solver.dt, T, mapper)
    # α^{±n} = exp(∓n·W)
    samples = [float(np.exp(-sign * n * path.w).max()) for path in paths]
    return _estimate(
        "alpha_power_sup" if sign > 0 else "alpha_inverse_power_sup",
        T,
        samples,
        doob_sup_moment_bound(n, b, T),
        "doob maximal inequality with novikov normalisation",
        "one_sided",
        {"order": n, "sign": sign, "b": b, "dt": cfg.solver.dt},
    )


def run_moment_suite(cfg: EnsembleConfig, mapper: Mapper = map) -> EnsembleReport:
    """Every tracked functional at every horizon from one shared ensemble."""
    members = simulate_ensemble(cfg, mapper)
    log_report = estimate_log_h1_moment(cfg, members)
    estimates: List[MomentEstimate] = []
    for horizon in cfg.effective_horizons:
        estimates.append(estimate_sup_lp_moment(cfg, members, horizon))
        estimates.append(estimate_sup_linf_moment(cfg, members, horizon))
    estimates.extend(log_report.estimates)
    last = cfg.effective_horizons[-1]
    estimates.append(check_alpha_sup_moment(cfg, horizon=last, mapper=mapper))
    estimates.append(check_exp_moment(cfg, horizon=last, mapper=mapper))
    estimates.append(check_doob_moment(cfg, sign=-1, horizon=last, mapper=mapper))
    estimates.append(check_doob_moment(cfg, sign=1, horizon=last, mapper=mapper))
    return EnsembleReport(estimates=estimates, growth=log_report.growth, flags=log_report.flags)
