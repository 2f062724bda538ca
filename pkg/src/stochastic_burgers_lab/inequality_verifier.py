"""Checks of the explicit inequalities and closed-form bounds against recorded trajectories.

Each check returns a ``VerificationReport`` whose margins are ``bound − observed``
per recorded instant. A report passes when its worst margin is at least
``−rel_tol·scale`` with ``scale = max(1, max|bound|, max|observed|)``.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import brentq

from .errors import ConfigurationError, DomainError
from .galerkin_solver import TrajectoryRecord, apply_alpha

logger = logging.getLogger(__name__)

MEAN_DRIFT_CONSTANT = 8.0 * math.pi**3
TWO_PI = 2.0 * math.pi
SUPPORTED_SEMINORMS = (0.5, 1.0, 1.5)
GRID_MATCH_TOL = 1e-9


class ToleranceConfig(BaseModel):
    """Tolerances shared by all checks."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rel_tol: float = Field(default=1e-8, ge=0.0, allow_inf_nan=False)
    max_principle_slack: float = Field(default=0.01, ge=0.0, allow_inf_nan=False)
    fit_window: Optional[Tuple[float, float]] = None
    c_cap: float = Field(default=1e6, gt=0.0)

    @model_validator(mode="after")
    def _check_window(self) -> "ToleranceConfig":
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not 0 <= lo <= hi:
                raise ValueError(f"fit_window must satisfy 0 ≤ start ≤ end, got {self.fit_window}")
        return self


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one check on one trajectory."""

    check: str
    times: np.ndarray
    margins: np.ndarray
    worst_margin: float
    passed: bool
    exact_constant: bool
    seed: Optional[int] = None
    fitted_c: Optional[float] = None
    params: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """NDJSON object for this report."""
        out: Dict[str, Any] = {
            "check": self.check,
            "seed": self.seed,
            "pass": self.passed,
            "worst_margin": self.worst_margin,
            "exact_constant": self.exact_constant,
            "params": self.params,
        }
        if self.fitted_c is not None:
            out["fitted_c"] = self.fitted_c
        return out


def _finite_max(values: np.ndarray) -> float:
    finite = np.abs(values[np.isfinite(values)])
    return float(finite.max()) if finite.size else 0.0


def _report(
    check: str,
    traj: TrajectoryRecord,
    bound: np.ndarray,
    observed: np.ndarray,
    tol: ToleranceConfig,
    exact_constant: bool,
    margins: Optional[np.ndarray] = None,
    fitted_c: Optional[float] = None,
    params: Optional[Dict[str, Any]] = None,
    extras: Optional[Dict[str, np.ndarray]] = None,
) -> VerificationReport:
    if margins is None:
        margins = bound - observed
    scale = max(1.0, _finite_max(bound), _finite_max(observed))
    worst = float(np.min(margins)) if margins.size else 0.0
    passed = worst >= -tol.rel_tol * scale
    report = VerificationReport(
        check=check,
        times=traj.times,
        margins=margins,
        worst_margin=worst,
        passed=bool(passed),
        exact_constant=exact_constant,
        seed=traj.seed,
        fitted_c=fitted_c,
        params={"status": traj.status, "field": traj.field_kind, "scale": scale, **(params or {})},
        extras=extras or {},
    )
    if passed:
        logger.debug(f"Check {check} passed (worst margin {worst:.3e})")
    else:
        logger.warning(f"Check {check} failed on seed {traj.seed}: worst margin {worst:.3e}, scale {scale:.3e}")
    return report


def _running_integral(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    if times.size < 2:
        return np.zeros_like(values)
    return cumulative_trapezoid(values, times, initial=0.0)


def _time_index(traj: TrajectoryRecord, t: float, what: str) -> int:
    scale = max(1.0, float(traj.times[-1]))
    i = int(np.argmin(np.abs(traj.times - t)))
    if abs(float(traj.times[i]) - t) > GRID_MATCH_TOL * scale:
        raise DomainError(f"{what} t={t} is not a recorded instant")
    return i


def _u0_l1(traj: TrajectoryRecord, u0_l1: Optional[float]) -> float:
    if u0_l1 is not None:
        return float(u0_l1)
    if "u0_l1" not in traj.metadata:
        raise ConfigurationError("|u0|_1 is neither given nor stored in the trajectory metadata")
    return float(traj.metadata["u0_l1"])


def check_mean_drift(traj: TrajectoryRecord, tol: Optional[ToleranceConfig] = None) -> VerificationReport:
    """|∫w(t)dx| ≤ 8π³∫₀ᵗα⁻¹‖w‖²_{1/2}ds + |∫w(0)dx| on the Euclidean magnitude of the mean.

    The inequality holds for solutions of the transformed Galerkin system, so
    ``run_checks`` hands it the v-record. Integrals use the trapezoid rule on
    the record grid.
    """
    tol = tol or ToleranceConfig()
    observed = np.linalg.norm(traj.mean, axis=1)
    drift = _running_integral(traj.semi_half**2 / traj.alpha, traj.times)
    bound = MEAN_DRIFT_CONSTANT * drift + observed[0]
    return _report("mean_drift", traj, bound, observed, tol, exact_constant=True)


def norm_domination_constant(alpha: np.ndarray) -> np.ndarray:
    """c(t) = max{(2π)^{9/2}α⁻¹(t), (2π)^{3/2}}."""
    return np.maximum(TWO_PI**4.5 / alpha, TWO_PI**1.5)


def check_norm_domination(
    traj: TrajectoryRecord, s: float, u0_l1: Optional[float] = None, tol: Optional[ToleranceConfig] = None
) -> VerificationReport:
    """‖v‖_s ≤ ‖v‖_{H^s} ≤ ‖v‖_s + c∫₀ᵗ‖v‖²_{1/2}ds + c|u₀|₁ per instant.

    ‖v‖_{H^s} is |v|₂ + ‖v‖_s as computed by ``sobolev_norm``.

    Raises:
        DomainError: If s is not one of the recorded orders 1/2, 1, 3/2
    """
    tol = tol or ToleranceConfig()
    if float(s) not in SUPPORTED_SEMINORMS:
        raise DomainError(f"Norm domination is checked for s in {SUPPORTED_SEMINORMS}, got {s}")
    l1 = _u0_l1(traj, u0_l1)
    semi = traj.seminorm_series(s)
    sobolev = traj.l2 + semi
    c = norm_domination_constant(traj.alpha)
    upper = semi + c * _running_integral(traj.semi_half**2, traj.times) + c * l1
    margins = np.minimum(sobolev - semi, upper - sobolev)
    name = {0.5: "norm_domination_half", 1.0: "norm_domination_one", 1.5: "norm_domination_three_half"}[float(s)]
    return _report(name, traj, upper, sobolev, tol, True, margins=margins, params={"s": float(s), "u0_l1": l1})


def max_principle_violation(traj: TrajectoryRecord) -> np.ndarray:
    """Relative excess (|v(t)|_∞ − |v(0)|_∞)₊ / |v(0)|_∞ per instant."""
    start = float(traj.linf[0])
    if start == 0:
        return np.maximum(traj.linf, 0.0)
    return np.maximum(traj.linf - start, 0.0) / start


def check_max_principle(traj: TrajectoryRecord, tol: Optional[ToleranceConfig] = None) -> VerificationReport:
    """sup_t |v(t)|_∞ ≤ (1 + slack)·|v(0)|_∞; also returns the violation curve."""
    tol = tol or ToleranceConfig()
    bound = np.full_like(traj.linf, (1.0 + tol.max_principle_slack) * traj.linf[0])
    violation = max_principle_violation(traj)
    return _report(
        "max_principle",
        traj,
        bound,
        traj.linf,
        tol,
        exact_constant=True,
        params={"slack": tol.max_principle_slack, "worst_violation": float(violation.max())},
        extras={"violation": violation},
    )


def check_seminorm_chain(traj: TrajectoryRecord, tol: Optional[ToleranceConfig] = None) -> VerificationReport:
    """‖v‖_{1/2} ≤ ‖v‖₁ ≤ ‖v‖_{3/2} at every instant."""
    tol = tol or ToleranceConfig()
    margins = np.minimum(traj.semi_one - traj.semi_half, traj.semi_three_half - traj.semi_one)
    return _report(
        "seminorm_chain", traj, traj.semi_three_half, traj.semi_half, tol, True, margins=margins
    )


def check_log_splitting(traj: TrajectoryRecord, tol: Optional[ToleranceConfig] = None) -> VerificationReport:
    """log(1+‖u‖₁²) ≤ log(1+‖v‖₁²) + log(1+α⁻²) with ‖u‖₁ = α⁻¹‖v‖₁."""
    tol = tol or ToleranceConfig()
    inv_alpha = 1.0 / traj.alpha
    observed = np.log1p((inv_alpha * traj.semi_one) ** 2)
    bound = np.log1p(traj.semi_one**2) + np.log1p(inv_alpha**2)
    return _report("log_splitting", traj, bound, observed, tol, exact_constant=True)


def blowup_time_h1(u0_h1_seminorm: float, u0_l1: float, alpha_sup_inv: float, c_model: float) -> float:
    """Existence time τ* = 1/(4A(A‖u₀‖₁² + B)⁴) of the comparison equation for ‖v_n‖₁².

    A = c(1+sup α⁻⁴) and B = c(1+|u₀|₁⁴)^{1/5}(1+sup α⁻⁴). These are ν = 1 formulas.

    Raises:
        DomainError: If c_model ≤ 0 or an input is negative
    """
    if not c_model > 0:
        raise DomainError(f"c_model must be positive, got {c_model}")
    if min(u0_h1_seminorm, u0_l1, alpha_sup_inv) < 0:
        raise DomainError("Norms and sup α⁻¹ must be nonnegative")
    try:
        A, B = _comparison_coefficients(u0_l1, alpha_sup_inv, c_model)
        tau = 1.0 / (4.0 * A * (A * u0_h1_seminorm**2 + B) ** 4)
    except ZeroDivisionError:
        return math.inf
    except OverflowError:
        tau = 0.0
    if tau > 0:
        return tau
    log_A = math.log(c_model) + _log1p_power(alpha_sup_inv, 4.0)
    log_B = log_A + 0.2 * _log1p_power(u0_l1, 4.0)
    log_start = log_B
    if u0_h1_seminorm > 0:
        log_start = float(np.logaddexp(log_A + 2.0 * math.log(u0_h1_seminorm), log_B))
    # below the smallest subnormal τ* is reported as that subnormal
    return max(math.exp(-math.log(4.0) - log_A - 4.0 * log_start), math.ulp(0.0))


def _log1p_power(x: float, p: float) -> float:
    """log(1 + x^p) without overflow."""
    if x == 0:
        return 0.0
    return float(np.logaddexp(0.0, p * math.log(x)))


def _comparison_coefficients(u0_l1: float, alpha_sup_inv: float, c_model: float) -> Tuple[float, float]:
    growth = 1.0 + alpha_sup_inv**4
    A = c_model * growth
    B = c_model * (1.0 + u0_l1**4) ** 0.2 * growth
    return A, B


def blowup_bound_h1(t: float, u0_h1_seminorm: float, u0_l1: float, alpha_sup_inv: float, c_model: float) -> float:
    """Comparison bound on ‖v_n(t)‖₁², valid before τ*; ``inf`` once expired.

    (A‖u₀‖₁²+B)/(A(1−4At(A‖u₀‖₁²+B)⁴)^{1/4}) − B/A, evaluated so that t = 0
    returns ‖u₀‖₁² exactly.
    """
    if t < 0:
        raise DomainError(f"t must be ≥ 0, got {t}")
    if not c_model > 0:
        raise DomainError(f"c_model must be positive, got {c_model}")
    A, B = _comparison_coefficients(u0_l1, alpha_sup_inv, c_model)
    h_sq = u0_h1_seminorm**2
    if t == 0:
        return h_sq
    start = A * h_sq + B
    try:
        x = 4.0 * A * t * start**4
    except OverflowError:
        return math.inf
    if x >= 1.0:
        return math.inf
    return (h_sq + B / A) * math.expm1(-0.25 * math.log1p(-x)) + h_sq


def blowup_bound_h32(
    t: float, u0_h32_seminorm_sq: float, u0_l1: float, alpha_sup_inv_sq: float, c_model: float
) -> float:
    """(A+‖u₀‖²_{3/2}) / [1 − 13c·sup α⁻²·t·(A+‖u₀‖²_{3/2})^{13}]^{1/13} − A with A = 1+|u₀|₁².

    Returns ``inf`` when the bracket is ≤ 0 and ‖u₀‖²_{3/2} exactly at t = 0.
    ``c_model = 0`` gives the constant limit ‖u₀‖²_{3/2}.

    Raises:
        DomainError: If t or c_model is negative
    """
    if t < 0 or c_model < 0:
        raise DomainError(f"t and c_model must be ≥ 0, got t={t}, c_model={c_model}")
    A = 1.0 + u0_l1**2
    S = A + u0_h32_seminorm_sq
    scale = 13.0 * c_model * alpha_sup_inv_sq * t
    if scale == 0:
        return u0_h32_seminorm_sq
    log_x = math.log(scale) + 13.0 * math.log(S)
    if log_x >= 0.0:
        return math.inf
    x = math.exp(log_x)
    if x >= 1.0:
        return math.inf
    return S * math.expm1(-math.log1p(-x) / 13.0) + u0_h32_seminorm_sq


def _sup_inverse_alpha_sq(traj: TrajectoryRecord, upto: int) -> np.ndarray:
    return np.maximum.accumulate(traj.alpha[: upto + 1] ** -2.0)


def fit_h32_constant(traj: TrajectoryRecord, t_fit: float, u0_l1: Optional[float] = None) -> float:
    """Smallest c for which ``blowup_bound_h32`` reaches the recorded ‖v(t_fit)‖²_{3/2}.

    Returns 0 when the recorded value does not exceed ‖u₀‖²_{3/2}.

    Raises:
        DomainError: If t_fit is not recorded or is 0 while growth must be explained
    """
    i = _time_index(traj, t_fit, "Fit time")
    l1 = _u0_l1(traj, u0_l1)
    s0 = float(traj.semi_three_half[0] ** 2)
    observed = float(traj.semi_three_half[i] ** 2)
    if observed <= s0:
        return 0.0
    A = 1.0 + l1**2
    S = A + s0
    a2 = float(_sup_inverse_alpha_sq(traj, i)[-1])
    t = float(traj.times[i])
    if t == 0:
        raise DomainError("Cannot fit a growth constant at t = 0")
    x = -math.expm1(13.0 * (math.log(S) - math.log(observed + A)))
    return math.exp(math.log(x) - math.log(13.0 * a2 * t) - 13.0 * math.log(S))


def check_h32_bound(
    traj: TrajectoryRecord,
    c_model: float,
    u0_l1: Optional[float] = None,
    tol: Optional[ToleranceConfig] = None,
    t_end: Optional[float] = None,
) -> VerificationReport:
    """Recorded ‖v(t)‖²_{3/2} against ``blowup_bound_h32`` with the running sup of α⁻²."""
    tol = tol or ToleranceConfig()
    l1 = _u0_l1(traj, u0_l1)
    end = len(traj) - 1 if t_end is None else _time_index(traj, t_end, "End time")
    s0 = float(traj.semi_three_half[0] ** 2)
    sup_a2 = _sup_inverse_alpha_sq(traj, end)
    bound = np.array(
        [blowup_bound_h32(float(t), s0, l1, float(a2), c_model) for t, a2 in zip(traj.times[: end + 1], sup_a2)]
    )
    observed = traj.semi_three_half[: end + 1] ** 2
    margins = bound - observed
    report = _report(
        "h32_bound",
        traj,
        bound,
        observed,
        tol,
        exact_constant=False,
        margins=margins,
        fitted_c=float(c_model),
        params={"u0_l1": l1, "t_end": float(traj.times[end]), "expired": bool(np.isinf(bound).any())},
    )
    return report


def _energy_integral(traj: TrajectoryRecord) -> np.ndarray:
    if traj.h2_integral is None:
        raise ConfigurationError("Energy check needs the recorded ∫‖v‖²_{H²} (h2_integral column)")
    return traj.h2_integral


def check_energy_inequality(
    traj: TrajectoryRecord, eps_time: Optional[float] = None, tol: Optional[ToleranceConfig] = None
) -> VerificationReport:
    """Smallest c with ‖v(t)‖²_{H¹} + ∫₀ᵗ‖v‖²_{H²} ≤ ‖u₀‖²_{H¹} + c‖v(ε)‖²_{H¹}exp(c‖v(ε)‖²_{H^{3/2}}∫₀ᵀα⁻²).

    The check fails only when no c ≤ ``tol.c_cap`` suffices.

    Raises:
        ConfigurationError: If the H² dissipation integral was not recorded
        DomainError: If eps_time is not a recorded instant
    """
    tol = tol or ToleranceConfig()
    h2 = _energy_integral(traj)
    if eps_time is None:
        eps_index = min(1, len(traj) - 1)
    else:
        eps_index = _time_index(traj, eps_time, "Epsilon time")
    lhs = traj.sobolev_one**2 + h2
    start = float(traj.sobolev_one[0] ** 2)
    target = float(lhs.max()) - start
    a = float(traj.sobolev_one[eps_index] ** 2)
    h32_eps = float((traj.l2[eps_index] + traj.semi_three_half[eps_index]) ** 2)
    alpha_integral = float(_running_integral(traj.alpha**-2.0, traj.times)[-1])
    b = h32_eps * alpha_integral

    def envelope(c: float) -> float:
        try:
            return c * a * math.exp(c * b)
        except OverflowError:
            return math.inf

    if target <= 0:
        c_fit: float = 0.0
    elif a == 0 or envelope(tol.c_cap) < target:
        c_fit = math.inf
    elif envelope(np.finfo(float).tiny) >= target:
        c_fit = float(np.finfo(float).tiny)
    else:
        log_target = math.log(target)
        c_fit = brentq(
            lambda c: math.log(c) + math.log(a) + c * b - log_target,
            np.finfo(float).tiny,
            tol.c_cap,
            xtol=1e-14,
            rtol=1e-12,
        )
    bound_value = start + (envelope(c_fit) if math.isfinite(c_fit) else 0.0)
    bound = np.full_like(lhs, bound_value)
    report = _report(
        "energy",
        traj,
        bound,
        lhs,
        tol,
        exact_constant=False,
        fitted_c=c_fit if math.isfinite(c_fit) else None,
        params={
            "eps_time": float(traj.times[eps_index]),
            "alpha_inv_sq_integral": alpha_integral,
            "c_cap": tol.c_cap,
            "fit_found": math.isfinite(c_fit),
        },
        extras={"lhs": lhs},
    )
    if not math.isfinite(c_fit):
        logger.warning(f"No constant c ≤ {tol.c_cap:g} satisfies the energy inequality on seed {traj.seed}")
        return replace(report, passed=False)
    return report


CheckFn = Callable[[TrajectoryRecord, ToleranceConfig, Dict[str, Any]], VerificationReport]


def _fit_and_check_h32(traj: TrajectoryRecord, tol: ToleranceConfig, ctx: Dict[str, Any]) -> VerificationReport:
    end = float(traj.times[-1]) if tol.fit_window is None else tol.fit_window[1]
    end = float(traj.times[int(np.argmin(np.abs(traj.times - end)))])
    c = fit_h32_constant(traj, end, ctx.get("u0_l1")) if end > 0 else 0.0
    return check_h32_bound(traj, c, ctx.get("u0_l1"), tol, t_end=end)


def _eps_time(traj: TrajectoryRecord, tol: ToleranceConfig, ctx: Dict[str, Any]) -> Optional[float]:
    if ctx.get("eps_time") is not None:
        return float(ctx["eps_time"])
    if tol.fit_window is not None:
        return float(traj.times[int(np.argmin(np.abs(traj.times - tol.fit_window[0])))])
    return None


CHECKS: Dict[str, Tuple[CheckFn, bool, str]] = {
    "mean_drift": (
        lambda traj, tol, ctx: check_mean_drift(traj, tol),
        True,
        "|∫v dx| against 8π³∫α⁻¹‖v‖²_{1/2} + |∫u₀ dx|",
    ),
    "norm_domination_half": (
        lambda traj, tol, ctx: check_norm_domination(traj, 0.5, ctx.get("u0_l1"), tol),
        True,
        "‖v‖_{H^{1/2}} dominated by ‖v‖_{1/2} plus the mean-drift terms",
    ),
    "norm_domination_one": (
        lambda traj, tol, ctx: check_norm_domination(traj, 1.0, ctx.get("u0_l1"), tol),
        True,
        "‖v‖_{H¹} dominated by ‖v‖₁ plus the mean-drift terms",
    ),
    "norm_domination_three_half": (
        lambda traj, tol, ctx: check_norm_domination(traj, 1.5, ctx.get("u0_l1"), tol),
        True,
        "‖v‖_{H^{3/2}} dominated by ‖v‖_{3/2} plus the mean-drift terms",
    ),
    "max_principle": (
        lambda traj, tol, ctx: check_max_principle(traj, tol),
        True,
        "sup |v|_∞ ≤ (1 + slack)|v(0)|_∞",
    ),
    "seminorm_chain": (
        lambda traj, tol, ctx: check_seminorm_chain(traj, tol),
        True,
        "‖v‖_{1/2} ≤ ‖v‖₁ ≤ ‖v‖_{3/2}",
    ),
    "log_splitting": (
        lambda traj, tol, ctx: check_log_splitting(traj, tol),
        True,
        "log(1+‖u‖₁²) ≤ log(1+‖v‖₁²) + log(1+α⁻²)",
    ),
    "energy": (
        lambda traj, tol, ctx: check_energy_inequality(traj, _eps_time(traj, tol, ctx), tol),
        False,
        "global H¹ energy estimate; reports the smallest constant",
    ),
    "h32_bound": (
        _fit_and_check_h32,
        False,
        "H^{3/2} comparison bound with a constant fitted at the end of the fit window",
    ),
}


def describe_checks() -> List[Dict[str, Any]]:
    return [
        {"name": name, "exact_constant": exact, "description": text}
        for name, (_, exact, text) in CHECKS.items()
    ]


def run_checks(
    traj: TrajectoryRecord,
    names: Optional[Sequence[str]] = None,
    tol: Optional[ToleranceConfig] = None,
    u0_l1: Optional[float] = None,
    eps_time: Optional[float] = None,
) -> List[VerificationReport]:
    """Run the named checks (all by default) on one trajectory.

    u-records are converted to v with their stored α first.

    Raises:
        ConfigurationError: For an unknown check name
    """
    tol = tol or ToleranceConfig()
    selected = list(CHECKS) if not names else list(names)
    unknown = [name for name in selected if name not in CHECKS]
    if unknown:
        raise ConfigurationError(f"Unknown checks {unknown}; available: {sorted(CHECKS)}")
    if traj.field_kind == "u":
        traj = apply_alpha(traj)
    ctx = {"u0_l1": u0_l1, "eps_time": eps_time}
    reports = []
    for name in selected:
        check, _, _ = CHECKS[name]
        reports.append(check(traj, tol, ctx))
    failed = [r.check for r in reports if not r.passed]
    logger.info(f"Ran {len(reports)} checks on seed {traj.seed}; failed: {failed or 'none'}")
    return reports
