"""Command-line entry point: ``stochastic-burgers-lab {simulate,ensemble,verify,oracle}``.

NDJSON records go to stdout, logs to stderr. Flags override values from
``--config``.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, NoReturn, Optional, Sequence

from .config import RunConfig, apply_overrides, load_run_config
from .environment import configure_logging, load_environment
from .errors import ConfigurationError
from .inequality_verifier import CHECKS
from .spectral_core import default_grid_size
from .workflows import (
    EXIT_USAGE,
    ORACLE_KINDS,
    WorkflowResult,
    failure,
    run_ensemble,
    run_oracle,
    run_simulate,
    run_verify,
    to_ndjson,
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 64."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="Run configuration file")
    parser.add_argument("--seed", type=int, help="Noise seed (ensemble base seed for `ensemble`)")
    parser.add_argument("--out", metavar="DIR", help="Output root; one directory per run is created inside")
    parser.add_argument("--threads", type=int, help="Worker threads for ensembles")
    parser.add_argument("--log-level", help="Log level (default: LOG_LEVEL or INFO)")


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--N", type=int, dest="grid_N", help="Largest retained |k|_inf")
    parser.add_argument("--nu", type=float, help="Viscosity")
    parser.add_argument("--T", type=float, dest="horizon", help="Horizon")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--b", type=float, dest="noise_b", help="Noise intensity")
    parser.add_argument("--blowup-threshold", type=float, help="Abort when ||v||_1 exceeds this")
    parser.add_argument("--record-every", type=int, help="Record diagnostics every this many steps")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="stochastic-burgers-lab",
        description="Pseudo-spectral 3D stochastic Burgers simulator and verification lab",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = subparsers.add_parser("simulate", help="Integrate one trajectory and write its CSV")
    _add_common(simulate)
    _add_solver_flags(simulate)
    simulate.add_argument("--noise-path", metavar="FILE", help="Replay the driving path stored in a noise_path.b3ds file")

    ensemble = subparsers.add_parser("ensemble", help="Monte Carlo moment estimates against analytic bounds")
    _add_common(ensemble)
    _add_solver_flags(ensemble)
    ensemble.add_argument("--n-paths", type=int, help="Ensemble size")
    ensemble.add_argument("--csv", action="store_true", help="Also write a flattened ensemble.csv")

    verify = subparsers.add_parser("verify", help="Check inequalities on trajectory CSV files")
    _add_common(verify)
    verify.add_argument("files", nargs="+", help="Trajectory CSV files")
    verify.add_argument(
        "--checks",
        help=f"Comma-separated check names (default: all of {', '.join(CHECKS)})",
    )
    verify.add_argument("--eps-time", type=float, help="Start of the energy-inequality window")

    oracle = subparsers.add_parser("oracle", help="Compare the solver with an independent reference")
    _add_common(oracle)
    _add_solver_flags(oracle)
    oracle.add_argument("--kind", choices=ORACLE_KINDS, required=True)
    oracle.add_argument("--noise-path", metavar="FILE", help="Replay the driving path stored in a noise_path.b3ds file")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {
        "output.directory": args.out,
        "output.threads": args.threads,
    }
    if args.command == "ensemble":
        overrides["ensemble.base_seed"] = args.seed
        overrides["ensemble.n_paths"] = args.n_paths
    else:
        overrides["noise.seed"] = args.seed
    if hasattr(args, "horizon"):
        overrides.update(
            {
                "grid.N": args.grid_N,
                "solver.nu": args.nu,
                "solver.T": args.horizon,
                "solver.dt": args.dt,
                "solver.blowup_threshold": args.blowup_threshold,
                "solver.record_every": args.record_every,
                "noise.b": args.noise_b,
            }
        )
    return overrides


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load ``--config`` (or the defaults) and apply the flags on top."""
    overrides = _overrides(args)
    if overrides.get("grid.N") is not None:
        # a new N gets its own default grid size
        overrides["grid.M"] = default_grid_size(overrides["grid.N"])
    return apply_overrides(load_run_config(args.config), overrides)


def dispatch(args: argparse.Namespace) -> WorkflowResult:
    try:
        config = resolve_config(args)
    except ConfigurationError as e:
        return failure(e)
    logger.info(f"Running {args.command}")
    if args.command == "simulate":
        return run_simulate(config, args.noise_path)
    if args.command == "ensemble":
        return run_ensemble(config, write_csv=args.csv)
    if args.command == "verify":
        checks: Optional[List[str]] = None
        if args.checks:
            checks = [name.strip() for name in args.checks.split(",") if name.strip()]
        return run_verify(config, args.files, checks, args.eps_time)
    return run_oracle(config, args.kind, args.noise_path)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the subcommand, print NDJSON and return the exit code."""
    load_environment()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    result = dispatch(args)
    sys.stdout.write(to_ndjson(result.records))
    sys.stdout.flush()
    return result.exit_code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
