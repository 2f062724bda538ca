"""MCP server exposing the simulate / verify / oracle / ensemble workflows as tools."""

import logging
import os
from typing import Any, Dict, List, Optional

from mcp.server import FastMCP

from .config import RunConfig, apply_overrides, load_run_config, parse_run_config
from .environment import configure_logging, load_environment
from .errors import BurgersLabError
from .inequality_verifier import describe_checks as list_checks
from .run_organizer import RunOrganizer
from .workflows import (
    WorkflowResult,
    failure,
    run_ensemble,
    run_oracle,
    run_simulate,
    run_verify,
    to_jsonable,
)

load_environment()

logger = logging.getLogger(__name__)

mcp = FastMCP("stochastic-burgers-lab")

DEFAULT_OUTPUT_ENV = "BURGERS_LAB_OUTPUT"


def _resolve(
    config_path: Optional[str],
    config_text: Optional[str],
    overrides: Dict[str, Any],
) -> RunConfig:
    if config_text:
        config = parse_run_config(config_text, source="<config_text>")
    else:
        config = load_run_config(config_path)
    if overrides.get("output.directory") is None and os.getenv(DEFAULT_OUTPUT_ENV):
        overrides = {**overrides, "output.directory": os.getenv(DEFAULT_OUTPUT_ENV)}
    return apply_overrides(config, overrides)


def _respond(result: WorkflowResult) -> Dict[str, Any]:
    return to_jsonable({**result.payload, "exit_code": result.exit_code})


@mcp.tool()
def simulate(
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    seed: Optional[int] = None,
    b: Optional[float] = None,
    out: Optional[str] = None,
    noise_path: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Integrate one trajectory of the stochastic Burgers system and store its CSV.

    Args:
        config_path: Path to a run configuration file
        config_text: Configuration file contents (takes precedence over config_path)
        seed: Noise seed
        b: Noise intensity
        out: Output root directory
        noise_path: Stored noise_path.b3ds of an earlier run to replay

    Returns:
        Dictionary with the run status, row count and trajectory path
    """
    try:
        config = _resolve(config_path, config_text, {"noise.seed": seed, "noise.b": b, "output.directory": out})
    except BurgersLabError as e:
        return _respond(failure(e))
    return _respond(run_simulate(config, noise_path))


@mcp.tool()
def verify(
    files: List[str],
    checks: Optional[List[str]] = None,
    eps_time: Optional[float] = None,
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    out: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Check the analytic inequalities on trajectory CSV files.

    Args:
        files: Trajectory CSV paths
        checks: Check names; all checks when omitted (see describe_checks)
        eps_time: Start of the energy-inequality window
        config_path: Configuration file holding the [tolerance] section
        config_text: Configuration file contents
        out: Output root directory

    Returns:
        Dictionary with one report per check per file and the exact-constant failure count
    """
    try:
        config = _resolve(config_path, config_text, {"output.directory": out})
    except BurgersLabError as e:
        return _respond(failure(e))
    return _respond(run_verify(config, files, checks, eps_time))


@mcp.tool()
def oracle(
    kind: str,
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    noise_path: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Compare the solver with the heat, Cole–Hopf or route-comparison reference.

    Args:
        kind: One of heat, cole_hopf, route_compare
        config_path: Path to a run configuration file
        config_text: Configuration file contents
        seed: Noise seed
        out: Output root directory
        noise_path: Stored noise_path.b3ds to replay

    Returns:
        Dictionary with the per-time error rows and the CSV path
    """
    try:
        config = _resolve(config_path, config_text, {"noise.seed": seed, "output.directory": out})
    except BurgersLabError as e:
        return _respond(failure(e))
    return _respond(run_oracle(config, kind, noise_path))


@mcp.tool()
def ensemble(
    config_path: Optional[str] = None,
    config_text: Optional[str] = None,
    seed: Optional[int] = None,
    n_paths: Optional[int] = None,
    threads: Optional[int] = None,
    out: Optional[str] = None,
) -> Dict[str, Any]:
    """
    Estimate moments over an ensemble of noise paths and test them against their bounds.

    Args:
        config_path: Path to a run configuration file
        config_text: Configuration file contents
        seed: Ensemble base seed
        n_paths: Number of members
        threads: Worker threads
        out: Output root directory

    Returns:
        Dictionary with one estimate per functional and horizon, growth fits and flags
    """
    overrides = {
        "ensemble.base_seed": seed,
        "ensemble.n_paths": n_paths,
        "output.threads": threads,
        "output.directory": out,
    }
    try:
        config = _resolve(config_path, config_text, overrides)
    except BurgersLabError as e:
        return _respond(failure(e))
    return _respond(run_ensemble(config))


@mcp.tool()
def describe_checks() -> Dict[str, Any]:
    """
    List the available verification checks.

    Returns:
        Dictionary mapping check names to their description and exact-constant flag
    """
    return {"success": True, "checks": list_checks()}


@mcp.tool()
def list_recent_runs(command: Optional[str] = None, limit: int = 10, out: Optional[str] = None) -> Dict[str, Any]:
    """
    List recent run directories with their manifests, newest first.

    Args:
        command: Only runs of this subcommand
        limit: Maximum number of runs
        out: Output root directory
    """
    try:
        organizer = RunOrganizer(out or os.getenv(DEFAULT_OUTPUT_ENV))
        runs = [{**run, "modified": run["modified"].isoformat()} for run in organizer.get_recent_runs(command, limit)]
        return {"success": True, "runs": runs, "count": len(runs)}
    except OSError as e:
        return {"success": False, "error": str(e), "error_type": "os_error"}


def main() -> None:
    """Main entry point for the MCP server."""
    configure_logging()
    logger.info("Starting stochastic Burgers lab MCP server")
    try:
        mcp.run()
    except Exception as e:
        logger.error(f"Server stopped: {e}")


if __name__ == "__main__":
    main()
