"""Error types shared by the solver, verifier and workflow layers."""

from typing import Any, Dict, Optional


class BurgersLabError(Exception):
    """Base class for all library errors.

    Every subclass carries an ``error_type`` tag so workflow boundaries can
    turn it into the ``{"success": False, ...}`` response shape.
    """

    error_type = "lab_error"

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to the failure response shape."""
        return {
            "success": False,
            "error": str(self),
            "error_type": self.error_type,
        }


class ConfigurationError(BurgersLabError, ValueError):
    """Invalid or inconsistent configuration."""

    error_type = "configuration_error"


class DomainError(BurgersLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    error_type = "domain_error"


class DataError(BurgersLabError, ValueError):
    """Malformed or inconsistent data (symmetry violations, bad files)."""

    error_type = "data_error"


class TrajectoryParseError(DataError):
    """A trajectory file could not be parsed."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}"
        if line is not None:
            location = f"{location}:{line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line


class NumericalFailureError(BurgersLabError, RuntimeError):
    """Non-finite values appeared during time integration."""

    error_type = "numerical_failure"

    def __init__(self, message: str, t: float, last_state: Any = None):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t
        self.last_state = last_state


class BlowupSignal(BurgersLabError):
    """Raised by a single step when the H1 seminorm crosses the abort level.

    ``integrate`` converts it into ``status == "aborted_blowup"``.
    """

    error_type = "blowup"

    def __init__(self, t: float, norm: float, threshold: float):
        super().__init__(
            f"H1 seminorm {norm:.6g} exceeded blowup threshold {threshold:.6g} at t={t:.6g}"
        )
        self.t = t
        self.norm = norm
        self.threshold = threshold
