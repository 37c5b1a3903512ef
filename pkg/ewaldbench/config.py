"""
Configuration Module
--------------------
Module-level defaults, the Settings schema and the key=value config-file loader.

Precedence when building Settings: CLI flags > environment (thread count only)
> config file > defaults.
"""

import os
from typing import Dict, Mapping, Optional

from pydantic import BaseModel, Field

from ewaldbench.exceptions import SystemFileError

# Balance constant between grid resolution and Gaussian truncation (m = c*sqrt(pi*P))
SHAPE_CONSTANT = 0.95
# Converts Gaussian-unit energies (e^2/nm) to kJ/mol
ELECTROSTATIC_FACTOR = 138.935458

MIN_SUPPORT = 4
MAX_SUPPORT = 24
SPME_ORDERS = (3, 5, 7)
DEFAULT_MAX_GRID = 512
DEFAULT_REFERENCE_TOL = 1e-13
# Below this the estimates ask for more than double precision delivers
MIN_REFERENCE_TOL = 1e-14

THREADS_ENV_VAR = "EWALDBENCH_THREADS"

# Named runtime profiles shipped with the package
PROFILE_DIR = os.path.join(os.path.dirname(__file__), "profiles")
PROFILE_SUFFIX = ".profile"


class Settings(BaseModel):
    """Runtime settings shared by the CLI commands."""
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    shape_constant: float = Field(default=SHAPE_CONSTANT, gt=0)
    max_grid: int = Field(default=DEFAULT_MAX_GRID, ge=4)
    reference_tol: float = Field(default=DEFAULT_REFERENCE_TOL, ge=MIN_REFERENCE_TOL, lt=1)
    xi_grid_points: int = Field(default=64, ge=4)
    scale_output: bool = False
    log_level: str = "WARNING"


def parse_key_values(text: str, source: str = "<text>") -> Dict[str, str]:
    """
    Parse key=value lines. Blank lines and lines starting with '#' are skipped.

    Raises:
        SystemFileError: on a line without '=' or with an empty key.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise SystemFileError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        values[key] = value.strip()
    return values


def load_settings(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, object]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> Settings:
    """
    Build Settings from defaults, an optional config file, the environment and overrides.

    Args:
        path (str): Optional key=value config file.
        overrides (dict): Values from CLI flags; None entries are ignored.
        environ (dict): Environment mapping, defaults to os.environ.

    Returns:
        Settings: The merged settings.
    """
    environ = os.environ if environ is None else environ
    values: Dict[str, object] = {}

    if path:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                file_values = parse_key_values(handle.read(), source=path)
        except OSError as e:
            raise SystemFileError(f"Cannot read config file {path}: {e}") from e
        unknown = sorted(set(file_values) - set(Settings.model_fields))
        if unknown:
            raise SystemFileError(f"{path}: unknown keys {', '.join(unknown)}")
        values.update(file_values)

    if environ.get(THREADS_ENV_VAR):
        values["threads"] = environ[THREADS_ENV_VAR]

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    return Settings(**values)
