"""Runtime environment: logging setup, thread counts and deterministic mode."""

import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(pathname)s:%(lineno)d - %(message)s"

DETERMINISTIC_ENV = "BURGERS_LAB_DETERMINISTIC"
THREADS_ENV = "BURGERS_LAB_THREADS"
FFT_WORKERS_ENV = "BURGERS_LAB_FFT_WORKERS"

logger = logging.getLogger(__name__)


def load_environment() -> None:
    """Load variables from a ``.env`` file if one is present."""
    load_dotenv()


def configure_logging(level: Optional[str] = None) -> None:
    """Send log records to stderr; stdout carries NDJSON and MCP traffic.

    Args:
        level: Level name; defaults to ``LOG_LEVEL`` or INFO
    """
    level_name = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def deterministic_mode() -> bool:
    """True when the single-threaded CI mode is requested."""
    return os.getenv(DETERMINISTIC_ENV, "").strip().lower() in ("1", "true", "yes", "on")


def _positive_int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {name}={raw!r}")
        return default
    return max(1, value)


def fft_workers() -> int:
    """Worker count handed to ``scipy.fft``."""
    if deterministic_mode():
        return 1
    return _positive_int_env(FFT_WORKERS_ENV, 1)


def worker_threads(requested: Optional[int] = None) -> int:
    """Size of the ensemble worker pool; flags win over the environment."""
    if deterministic_mode():
        return 1
    if requested is not None:
        return max(1, int(requested))
    return _positive_int_env(THREADS_ENV, 1)
