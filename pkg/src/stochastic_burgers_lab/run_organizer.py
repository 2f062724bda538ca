"""Per-run output directories with config snapshot, manifest and metadata sidecars."""

import json
import logging
import os
import platform
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

from . import __version__

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.ini"


def host_float_info() -> Dict[str, Any]:
    """Floating-point facts of the host recorded in every manifest."""
    finfo = np.finfo(np.float64)
    return {
        "float64_eps": float(finfo.eps),
        "float64_max": float(finfo.max),
        "byteorder": sys.byteorder,
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


class RunOrganizer:
    """Manages one output directory per run under a common root."""

    def __init__(self, output_root: Optional[str] = None):
        """
        Initialize the run organizer.

        Args:
            output_root: Directory holding all runs. Defaults to ``runs`` in the working directory.
        """
        self.output_root = os.path.abspath(output_root or "runs")
        self.logger = logger
        self.files: List[str] = []
        self.run_dir: Optional[str] = None

    def create_run_dir(self, command: str, seed: Optional[int] = None) -> str:
        """
        Create ``<root>/<command>_<timestamp>`` (made unique with a counter).

        Args:
            command: Subcommand name
            seed: Seed appended to the directory name when given

        Returns:
            Absolute path of the new directory
        """
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")[:-3]
        name = self._sanitize_filename(f"{command}_{timestamp}" + (f"_seed{seed}" if seed is not None else ""))
        candidate = os.path.join(self.output_root, name)
        counter = 1
        while os.path.exists(candidate):
            candidate = os.path.join(self.output_root, f"{name}_{counter}")
            counter += 1
        os.makedirs(candidate)
        self.run_dir = candidate
        self.files = []
        self.logger.info(f"Created run directory {candidate}")
        return candidate

    def get_save_path(self, filename: str) -> str:
        """Path for a result file inside the current run directory."""
        if self.run_dir is None:
            raise RuntimeError("create_run_dir must be called before get_save_path")
        path = os.path.join(self.run_dir, self._sanitize_filename(filename))
        self.files.append(os.path.basename(path))
        return path

    def write_config(self, rendered: str) -> str:
        path = self.get_save_path(CONFIG_NAME)
        with open(path, "w") as f:
            f.write(rendered)
        return path

    def save_metadata(self, result_path: str, metadata: Dict[str, Any]) -> Optional[str]:
        """
        Save a JSON sidecar next to a result file.

        Returns:
            Path to the sidecar, or None if it could not be written
        """
        try:
            metadata_path = f"{os.path.splitext(result_path)[0]}_metadata.json"
            with open(metadata_path, "w") as f:
                json.dump({"result_path": result_path, **metadata}, f, indent=2, default=str)
            self.files.append(os.path.basename(metadata_path))
            self.logger.debug(f"Saved metadata to: {metadata_path}")
            return metadata_path
        except OSError as e:
            self.logger.error(f"Failed to save metadata for {result_path}: {e}")
            return None

    def write_manifest(self, command: str, seed: Optional[int], extra: Optional[Dict[str, Any]] = None) -> str:
        """Write ``manifest.json`` listing code version, command, seed, host float mode and files."""
        manifest = {
            "code_version": __version__,
            "command": command,
            "seed": seed,
            "created_at": datetime.now().isoformat(),
            "host": host_float_info(),
            "files": sorted(set(self.files)),
            **(extra or {}),
        }
        path = self.get_save_path(MANIFEST_NAME)
        with open(path, "w") as f:
            json.dump(manifest, f, indent=2, default=str)
        return path

    def get_recent_runs(self, command: Optional[str] = None, limit: int = 10) -> List[Dict[str, Any]]:
        """
        List recent runs with their manifests, newest first.

        Args:
            command: Only runs of this subcommand
            limit: Maximum number of runs to return
        """
        runs = []
        if not os.path.isdir(self.output_root):
            return runs
        for name in os.listdir(self.output_root):
            path = os.path.join(self.output_root, name)
            if not os.path.isdir(path) or (command and not name.startswith(f"{command}_")):
                continue
            manifest: Dict[str, Any] = {}
            manifest_path = os.path.join(path, MANIFEST_NAME)
            if os.path.exists(manifest_path):
                try:
                    with open(manifest_path) as f:
                        manifest = json.load(f)
                except (OSError, json.JSONDecodeError) as e:
                    self.logger.warning(f"Failed to load manifest from {manifest_path}: {e}")
            runs.append(
                {
                    "path": path,
                    "name": name,
                    "modified": datetime.fromtimestamp(os.stat(path).st_mtime),
                    "manifest": manifest,
                }
            )
        runs.sort(key=lambda r: r["modified"], reverse=True)
        return runs[:limit]

    def _sanitize_filename(self, filename: str) -> str:
        """Sanitize a string for use as filename."""
        invalid_chars = '<>:"/\\|?*'
        for char in invalid_chars:
            filename = filename.replace(char, "_")
        filename = filename.strip()[:100]
        if not filename:
            filename = "unnamed"
        return filename
