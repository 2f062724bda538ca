"""Run configuration: a sectioned ``key = value`` file validated through pydantic models.

Sections are ``[grid] [solver] [noise] [initial] [ensemble] [tolerance] [output]``.
Unknown sections or keys are rejected, and ``parse_run_config(render_run_config(c)) == c``.
"""

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigurationError
from .galerkin_solver import InitialCondition, SolverConfig
from .inequality_verifier import ToleranceConfig
from .moment_lab import EnsembleConfig
from .noise_path import NoiseConfig
from .spectral_core import GridSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_N = 8
DEFAULT_T = 0.1
DEFAULT_DT = 0.01


class EnsembleSettings(BaseModel):
    """Ensemble fields of a run; combined with the solver into an ``EnsembleConfig``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_paths: int = Field(default=16, ge=2)
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    horizons: Tuple[float, ...] = ()
    p: float = Field(default=2.0, ge=1.0)
    q: float = Field(default=1.0, ge=1.0, allow_inf_nan=False)
    Q: float = Field(default=2.0, gt=1.0, allow_inf_nan=False)
    order: float = Field(default=1.0, ge=0.0, allow_inf_nan=False)


class OutputSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: str = "runs"
    threads: Optional[int] = Field(default=None, ge=1)


class RunConfig(BaseModel):
    """Everything one CLI or MCP invocation needs, validated before any compute."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    solver: SolverConfig
    initial: InitialCondition = InitialCondition()
    ensemble: EnsembleSettings = EnsembleSettings()
    tolerance: ToleranceConfig = ToleranceConfig()
    output: OutputSettings = OutputSettings()

    def ensemble_config(self) -> EnsembleConfig:
        try:
            return EnsembleConfig(solver=self.solver, initial=self.initial, **self.ensemble.model_dump())
        except ValidationError as e:
            raise ConfigurationError(f"Invalid ensemble configuration: {e}") from e


# Keys of [solver] that live in nested models of SolverConfig.
_SOLVER_OWN = tuple(name for name in SolverConfig.model_fields if name not in ("grid", "noise"))

SECTIONS: Dict[str, Tuple[Type[BaseModel], Tuple[str, ...]]] = {
    "grid": (GridSpec, tuple(GridSpec.model_fields)),
    "solver": (SolverConfig, _SOLVER_OWN),
    "noise": (NoiseConfig, tuple(NoiseConfig.model_fields)),
    "initial": (InitialCondition, tuple(InitialCondition.model_fields)),
    "ensemble": (EnsembleSettings, tuple(EnsembleSettings.model_fields)),
    "tolerance": (ToleranceConfig, tuple(ToleranceConfig.model_fields)),
    "output": (OutputSettings, tuple(OutputSettings.model_fields)),
}

# Comma-separated tuple keys and the element type of each.
_TUPLE_KEYS: Dict[Tuple[str, str], type] = {
    ("solver", "record_lp"): float,
    ("initial", "mode"): int,
    ("ensemble", "horizons"): float,
    ("tolerance", "fit_window"): float,
}

_NONE_WORDS = ("", "none", "null")


def default_run_config() -> RunConfig:
    return RunConfig(solver=SolverConfig(grid=GridSpec(N=DEFAULT_N), T=DEFAULT_T, dt=DEFAULT_DT))


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(item) for item in value)
    return str(value)


def _parse_value(section: str, key: str, raw: str) -> Any:
    text = raw.strip()
    if text.lower() in _NONE_WORDS and (section, key) not in (("solver", "record_lp"), ("ensemble", "horizons")):
        return None
    element = _TUPLE_KEYS.get((section, key))
    if element is None:
        return text
    parts = [part.strip() for part in text.split(",") if part.strip()]
    try:
        return tuple(element(part) for part in parts)
    except ValueError as e:
        raise ConfigurationError(f"[{section}] {key}: cannot parse {raw!r} as a list of {element.__name__}") from e


def _to_sections(config: RunConfig) -> Dict[str, Dict[str, str]]:
    dumped = {
        "grid": config.solver.grid.model_dump(),
        "solver": {name: getattr(config.solver, name) for name in _SOLVER_OWN},
        "noise": config.solver.noise.model_dump(),
        "initial": config.initial.model_dump(),
        "ensemble": config.ensemble.model_dump(),
        "tolerance": config.tolerance.model_dump(),
        "output": config.output.model_dump(),
    }
    return {section: {key: _format_value(value) for key, value in items.items()} for section, items in dumped.items()}


def _from_sections(sections: Mapping[str, Mapping[str, str]]) -> RunConfig:
    values: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    for section, items in sections.items():
        if section not in SECTIONS:
            raise ConfigurationError(f"Unknown section [{section}]; expected one of {sorted(SECTIONS)}")
        known = SECTIONS[section][1]
        for key, raw in items.items():
            if key not in known:
                raise ConfigurationError(f"Unknown key {key!r} in [{section}]; expected one of {sorted(known)}")
            values[section][key] = _parse_value(section, key, raw)

    solver_values = {key: value for key, value in values["solver"].items() if value is not None}
    solver_values.setdefault("T", DEFAULT_T)
    solver_values.setdefault("dt", DEFAULT_DT)
    values["grid"].setdefault("N", DEFAULT_N)
    try:
        grid = GridSpec(**values["grid"])
        noise = NoiseConfig(**{k: v for k, v in values["noise"].items() if v is not None})
        solver = SolverConfig(grid=grid, noise=noise, **{**solver_values, "n": values["solver"].get("n")})
        return RunConfig(
            solver=solver,
            initial=InitialCondition(**{k: v for k, v in values["initial"].items() if v is not None}),
            ensemble=EnsembleSettings(**{k: v for k, v in values["ensemble"].items() if v is not None}),
            tolerance=ToleranceConfig(**values["tolerance"]),
            output=OutputSettings(**values["output"]),
        )
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from e


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse configuration text; missing keys take their model defaults.

    Raises:
        ConfigurationError: On syntax errors, unknown sections or keys, or invalid values
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigurationError(f"{source}: {e}") from e
    sections = {section: dict(parser.items(section)) for section in parser.sections()}
    return _from_sections(sections)


def load_run_config(path: Optional[PathLike]) -> RunConfig:
    """Read a config file, or return the defaults when ``path`` is None."""
    if path is None:
        return default_run_config()
    source = Path(path)
    if not source.is_file():
        raise ConfigurationError(f"Config file not found: {source}")
    logger.debug(f"Loading run configuration from {source}")
    return parse_run_config(source.read_text(), source=str(source))


def render_run_config(config: RunConfig) -> str:
    """Serialise to the file format with round-trip exact floats."""
    lines = []
    for section, items in _to_sections(config).items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in items.items())
        lines.append("")
    return "\n".join(lines)


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Replace ``section.key`` entries; command-line flags win over file values.

    ``None`` values are skipped so unset flags leave the file untouched.

    Raises:
        ConfigurationError: For unknown keys or invalid results
    """
    sections = _to_sections(config)
    changed = []
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or key not in SECTIONS[section][1]:
            raise ConfigurationError(f"Unknown override {dotted!r}")
        sections[section][key] = _format_value(value)
        changed.append(dotted)
    if changed:
        logger.debug(f"Applied overrides: {', '.join(changed)}")
    return _from_sections(sections)
