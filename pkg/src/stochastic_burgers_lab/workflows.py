"""The simulate / verify / oracle / ensemble workflows behind the CLI and the MCP server.

Every workflow returns a ``WorkflowResult``: the response dict in the
``{"success": ...}`` shape, NDJSON records for stdout and the process exit code.
Library errors are converted here and nowhere else.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from .config import RunConfig, apply_overrides, render_run_config
from .environment import worker_threads
from .errors import BurgersLabError, ConfigurationError, DataError, DomainError
from .galerkin_solver import (
    SolverConfig,
    build_initial_condition,
    cole_hopf_oracle_1d,
    extract_x1_profile,
    heat_oracle,
    integrate,
    integrate_direct_stratonovich,
    trajectory_from_csv,
    trajectory_to_csv,
)
from .inequality_verifier import CHECKS, run_checks
from .moment_lab import Mapper, run_moment_suite
from .noise_path import NoisePath, path_to_csv, read_path_binary, sample_path, write_path_binary
from .run_organizer import RunOrganizer
from .spectral_core import SpectralField, galerkin_project, l2_norm, write_field_binary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BLOWUP = 2
EXIT_USAGE = 64

OracleKind = Literal["heat", "cole_hopf", "route_compare"]
ORACLE_KINDS = ("heat", "cole_hopf", "route_compare")
ROUTE_LEVELS = 3

PathLike = Union[str, Path]


@dataclass
class WorkflowResult:
    payload: Dict[str, Any]
    exit_code: int
    records: List[Dict[str, Any]] = field(default_factory=list)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def to_jsonable(payload: Dict[str, Any]) -> Dict[str, Any]:
    """Plain-Python copy of a payload with numpy scalars and arrays converted."""
    result: Dict[str, Any] = json.loads(json.dumps(payload, default=_json_default))
    return result


def to_ndjson(records: Sequence[Dict[str, Any]]) -> str:
    """One compact JSON object per line."""
    return "".join(json.dumps(r, sort_keys=True, default=_json_default) + "\n" for r in records)


def failure(error: Exception) -> WorkflowResult:
    """Convert an exception into the failure response and its exit code."""
    if isinstance(error, BurgersLabError):
        payload = error.to_dict()
    else:
        payload = {"success": False, "error": str(error), "error_type": type(error).__name__}
    code = EXIT_USAGE if isinstance(error, ConfigurationError) else EXIT_FAILURE
    logger.error(f"{payload['error_type']}: {payload['error']}")
    return WorkflowResult(payload=payload, exit_code=code, records=[payload])


def _start_run(config: RunConfig, command: str, seed: Optional[int]) -> RunOrganizer:
    organizer = RunOrganizer(config.output.directory)
    organizer.create_run_dir(command, seed)
    organizer.write_config(render_run_config(config))
    return organizer


def _driving_path(config: RunConfig, noise_path: Optional[PathLike]) -> Tuple[RunConfig, NoisePath]:
    """A fresh path from the noise settings, or a stored path to replay.

    A replayed path brings its own b and seed, which replace the configured ones.
    """
    solver = config.solver
    if noise_path is None:
        return config, sample_path(solver.noise, solver.dt, solver.T)
    path = read_path_binary(noise_path)
    if path.T < solver.T * (1 - 1e-12):
        raise ConfigurationError(f"Stored path {noise_path} ends at T={path.T}, before the horizon {solver.T}")
    logger.info(f"Replaying driving path {noise_path} (seed {path.seed}, b={path.b:g})")
    return apply_overrides(config, {"noise.b": path.b, "noise.seed": path.seed}), path


def run_simulate(config: RunConfig, noise_path: Optional[PathLike] = None) -> WorkflowResult:
    """Integrate one trajectory and store its CSV, driving path and final state.

    With ``noise_path`` the stored driving path of an earlier run is replayed.
    Exit code 0 on completion, 2 on a blow-up abort, 1 on numerical failure.
    """
    try:
        config, path = _driving_path(config, noise_path)
        solver = config.solver
        seed = solver.noise.seed
        organizer = _start_run(config, "simulate", seed)
        v0 = build_initial_condition(config.initial, solver.grid)
        write_path_binary(path, organizer.get_save_path("noise_path.b3ds"))
        path_to_csv(path, organizer.get_save_path("noise_path.csv"))
        record = integrate(v0, path, solver)
        csv_path = trajectory_to_csv(record, organizer.get_save_path("trajectory.csv"))
        if record.final_state is not None:
            write_field_binary(record.final_state, organizer.get_save_path("final_state.b3ds"))
        organizer.save_metadata(str(csv_path), {"stats": record.stats.to_dict() if record.stats else None})
        organizer.write_manifest("simulate", seed, {"status": record.status})
    except (BurgersLabError, OSError) as e:
        return failure(e)

    code = EXIT_OK if record.completed else EXIT_BLOWUP
    payload = {
        "success": True,
        "command": "simulate",
        "status": record.status,
        "seed": seed,
        "rows": len(record),
        "run_dir": organizer.run_dir,
        "trajectory": str(csv_path),
        "stats": record.stats.to_dict() if record.stats else None,
        "replayed_path": str(noise_path) if noise_path is not None else None,
        "exit_code": code,
    }
    logger.info(f"simulate finished: {record.status}, {len(record)} rows in {csv_path}")
    return WorkflowResult(payload=payload, exit_code=code, records=[payload])


def run_verify(
    config: RunConfig,
    files: Sequence[PathLike],
    checks: Optional[Sequence[str]] = None,
    eps_time: Optional[float] = None,
    write_report: bool = True,
) -> WorkflowResult:
    """Run checks on trajectory CSVs; one NDJSON record per check per file.

    The exit code is 1 iff an exact-constant check fails or errors.
    """
    if not files:
        return failure(ConfigurationError("verify needs at least one trajectory file"))
    names = list(checks) if checks else list(CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        return failure(ConfigurationError(f"Unknown checks {unknown}; available: {sorted(CHECKS)}"))

    records: List[Dict[str, Any]] = []
    exact_failures = 0
    for source in files:
        try:
            traj = trajectory_from_csv(source)
        except DataError as e:
            return failure(e)
        for name in names:
            exact = CHECKS[name][1]
            try:
                (report,) = run_checks(traj, [name], config.tolerance, eps_time=eps_time)
                record = {"file": str(source), **report.to_dict()}
                failed = not report.passed
            except BurgersLabError as e:
                record = {"file": str(source), "check": name, "seed": traj.seed, "pass": False,
                          "exact_constant": exact, "error": str(e), "error_type": e.error_type}
                failed = True
            if failed and exact:
                exact_failures += 1
            records.append(record)

    code = EXIT_FAILURE if exact_failures else EXIT_OK
    payload: Dict[str, Any] = {
        "success": True,
        "command": "verify",
        "files": [str(f) for f in files],
        "checks": names,
        "exact_failures": exact_failures,
        "reports": records,
        "exit_code": code,
    }
    if write_report:
        try:
            organizer = _start_run(config, "verify", None)
            report_path = organizer.get_save_path("verify.ndjson")
            Path(report_path).write_text(to_ndjson(records))
            organizer.write_manifest("verify", None, {"inputs": payload["files"], "exact_failures": exact_failures})
            payload["report"] = report_path
        except OSError as e:
            return failure(e)
    logger.info(f"verify: {len(records)} reports, {exact_failures} exact-constant failures")
    return WorkflowResult(payload=payload, exit_code=code, records=records)


def _heat_rows(config: RunConfig, path: NoisePath) -> List[Dict[str, Any]]:
    solver = config.solver.model_copy(update={"nonlinear": False})
    v0 = galerkin_project(build_initial_condition(config.initial, solver.grid), solver.projection_radius)
    rows: List[Dict[str, Any]] = []

    def compare(t: float, alpha: float, state: SpectralField) -> None:
        exact = heat_oracle(v0, t, solver.nu)
        error = float(np.max(np.abs(state.coeffs - exact.coeffs)))
        rows.append({"t": t, "max_coeff_error": error, "l2_exact": l2_norm(exact)})

    integrate(v0, path, solver, observer=compare)
    return rows


def _cole_hopf_rows(config: RunConfig, path: NoisePath) -> List[Dict[str, Any]]:
    solver = config.solver
    if solver.noise.b != 0:
        raise ConfigurationError("The Cole–Hopf oracle needs b = 0")
    if not solver.nonlinear:
        raise ConfigurationError("The Cole–Hopf oracle compares the nonlinear flow; set nonlinear = true")
    v0 = galerkin_project(build_initial_condition(config.initial, solver.grid), solver.projection_radius)
    try:
        profile0 = extract_x1_profile(v0, solver.grid)
    except DomainError as e:
        raise ConfigurationError(f"The Cole–Hopf oracle needs x1-only initial data: {e}") from e
    rows: List[Dict[str, Any]] = []

    def compare(t: float, alpha: float, state: SpectralField) -> None:
        numeric = extract_x1_profile(state, solver.grid, tol=1e-9)
        exact = cole_hopf_oracle_1d(profile0, solver.nu, t)
        scale = max(float(np.max(np.abs(exact))), np.finfo(float).tiny)
        error = float(np.max(np.abs(numeric - exact)))
        rows.append({"t": t, "linf_error": error, "relative_linf_error": error / scale})

    integrate(v0, path, solver, observer=compare)
    return rows


def route_gap(v0: SpectralField, path: NoisePath, cfg: SolverConfig) -> float:
    """‖u_direct(T) − α(T)⁻¹v(T)‖₂ between the two integration routes on one driving path."""
    transformed = integrate(v0, path, cfg)
    direct = integrate_direct_stratonovich(v0, path, cfg)
    if not (transformed.completed and direct.completed):
        raise DataError("A route aborted on blowup; the route comparison needs completed runs")
    assert transformed.final_state is not None and direct.final_state is not None
    recovered = transformed.final_state.scaled(1.0 / float(transformed.alpha[-1]))
    return l2_norm(direct.final_state - recovered)


def _route_rows(config: RunConfig, path: NoisePath) -> List[Dict[str, Any]]:
    base = config.solver
    v0 = build_initial_condition(config.initial, base.grid)
    # finer levels bridge-refine the path, so every level sees one Brownian path
    rows: List[Dict[str, Any]] = []
    previous: Optional[float] = None
    for level in range(ROUTE_LEVELS):
        cfg = base.model_copy(update={"dt": base.dt / 2**level, "record_every": base.n_steps * 2**level})
        gap = route_gap(v0, path, cfg)
        ratio = previous / gap if previous is not None and gap > 0 else None
        rows.append(
            {
                "dt": cfg.dt,
                "gap_l2": gap,
                "ratio": ratio,
                "observed_order": math.log2(ratio) if ratio else None,
            }
        )
        previous = gap
    return rows


def run_oracle(config: RunConfig, kind: str, noise_path: Optional[PathLike] = None) -> WorkflowResult:
    """Compare the solver with an independent reference and write ``oracle_<kind>.csv``.

    ``noise_path`` replays a stored driving path. An invalid pairing of kind
    and configuration is a usage error (exit 64).
    """
    if kind not in ORACLE_KINDS:
        return failure(ConfigurationError(f"Unknown oracle kind {kind!r}; expected one of {ORACLE_KINDS}"))
    builders = {"heat": _heat_rows, "cole_hopf": _cole_hopf_rows, "route_compare": _route_rows}
    try:
        config, path = _driving_path(config, noise_path)
        rows = builders[kind](config, path)
        organizer = _start_run(config, f"oracle_{kind}", config.solver.noise.seed)
        out = organizer.get_save_path(f"oracle_{kind}.csv")
        with open(out, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]))
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if v is None else repr(v)) for k, v in row.items()})
        organizer.write_manifest(f"oracle_{kind}", config.solver.noise.seed)
    except (BurgersLabError, OSError) as e:
        return failure(e)

    summary: Dict[str, Any] = {"success": True, "command": "oracle", "kind": kind, "csv": out, "rows": rows}
    if kind == "heat":
        summary["max_error"] = max(r["max_coeff_error"] for r in rows)
    elif kind == "cole_hopf":
        summary["max_relative_error"] = max(r["relative_linf_error"] for r in rows)
    else:
        summary["orders"] = [r["observed_order"] for r in rows[1:]]
    summary["exit_code"] = EXIT_OK
    logger.info(f"oracle {kind}: {len(rows)} rows written to {out}")
    return WorkflowResult(payload=summary, exit_code=EXIT_OK, records=rows)


def run_ensemble(config: RunConfig, mapper: Optional[Mapper] = None, write_csv: bool = False) -> WorkflowResult:
    """Monte Carlo moment suite; exit 1 if any estimate fails its gate.

    Without a mapper a thread pool sized by ``worker_threads`` is used.
    """
    try:
        ensemble = config.ensemble_config()
        organizer = _start_run(config, "ensemble", ensemble.base_seed)
        if mapper is None:
            with ThreadPoolExecutor(max_workers=worker_threads(config.output.threads)) as pool:
                report = run_moment_suite(ensemble, pool.map)
        else:
            report = run_moment_suite(ensemble, mapper)
        records = report.to_records()
        ndjson_path = organizer.get_save_path("ensemble.ndjson")
        Path(ndjson_path).write_text(to_ndjson(records))
        files = [ndjson_path]
        if write_csv:
            csv_path = organizer.get_save_path("ensemble.csv")
            columns = ["functional", "horizon", "estimate", "stderr", "n", "median", "bound", "semantics", "pass"]
            with open(csv_path, "w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
                writer.writeheader()
                writer.writerows(records)
            files.append(csv_path)
        organizer.write_manifest("ensemble", ensemble.base_seed, {"flags": report.flags})
    except (BurgersLabError, OSError) as e:
        return failure(e)

    code = EXIT_OK if report.all_passed else EXIT_FAILURE
    payload = {
        "success": True,
        "command": "ensemble",
        "n_paths": ensemble.n_paths,
        "estimates": records,
        "growth": {name: fit.to_dict() for name, fit in report.growth.items()},
        "flags": report.flags,
        "files": files,
        "exit_code": code,
    }
    return WorkflowResult(payload=payload, exit_code=code, records=records)
