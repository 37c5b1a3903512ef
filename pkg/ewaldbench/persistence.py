"""
Persistence Module
------------------
Plain-text storage for the artifacts the harness exchanges between runs:
1. Particle files: header "N L", then one "x y z q" line per particle.
2. Runtime profiles: key=value text holding the cost-model constants.
3. Field CSV files: per-particle potentials and forces, with energy and error
   summaries appended as '#' comment lines.
"""

import logging
import os
from typing import Optional

import numpy as np
import pandas as pd

from ewaldbench.config import PROFILE_DIR, PROFILE_SUFFIX, parse_key_values
from ewaldbench.exceptions import SystemFileError
from ewaldbench.models import ErrorReport, FieldResult, ParticleSystem, RuntimeModel

logger = logging.getLogger(__name__)

# Enough significant digits for an exact float64 round trip
FLOAT_FORMAT = ".17g"
FIELD_COLUMNS = ["index", "potential", "fx", "fy", "fz"]
PROFILE_KEYS = ("c_ns", "c_force", "c_fft", "c_solve", "c_spga")


def read_system(path: str) -> ParticleSystem:
    """
    Load a particle system from a text file.

    Args:
        path (str): File with header "N L" followed by N lines "x y z q".

    Returns:
        ParticleSystem: The loaded system. A non-neutral system is loaded with a warning.

    Raises:
        SystemFileError: malformed header, wrong line count or coordinates outside [0, L).
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            header = handle.readline().split()
    except OSError as e:
        raise SystemFileError(f"Cannot read particle file {path}: {e}") from e

    try:
        n, box_length = int(header[0]), float(header[1])
        if len(header) != 2:
            raise ValueError
    except (IndexError, ValueError):
        raise SystemFileError(f"{path}: header must be 'N L', got {' '.join(header)!r}")
    if n < 1 or not box_length > 0:
        raise SystemFileError(f"{path}: header needs N >= 1 and L > 0, got N={n}, L={box_length}")

    try:
        table = pd.read_csv(
            path, sep=r"\s+", header=None, skiprows=1, float_precision="round_trip"
        )
    except pd.errors.EmptyDataError:
        raise SystemFileError(f"{path}: header announces {n} particles but the file has none")

    if table.shape != (n, 4):
        raise SystemFileError(
            f"{path}: expected {n} rows of 'x y z q', got table of shape {table.shape}"
        )
    try:
        data = table.to_numpy(dtype=float)
    except ValueError as e:
        raise SystemFileError(f"{path}: non-numeric entry ({e})") from e

    positions = data[:, :3]
    outside = ~((positions >= 0.0) & (positions < box_length))
    if outside.any():
        row = int(np.argwhere(outside)[0][0])
        raise SystemFileError(f"{path}: particle {row} lies outside the box [0, {box_length})")

    logger.debug("Read %d particles from %s (L=%g)", n, path, box_length)
    return ParticleSystem(box_length=box_length, positions=positions, charges=data[:, 3])


def write_system(system: ParticleSystem, path: str) -> None:
    """Write a particle system with full float64 precision."""
    lines = [f"{system.n} {system.box_length:{FLOAT_FORMAT}}"]
    for (x, y, z), q in zip(system.positions, system.charges):
        lines.append(f"{x:{FLOAT_FORMAT}} {y:{FLOAT_FORMAT}} {z:{FLOAT_FORMAT}} {q:{FLOAT_FORMAT}}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def write_profile(model: RuntimeModel, path: str) -> None:
    """Serialize a runtime model as key=value text."""
    lines = [f"{key}={getattr(model, key):{FLOAT_FORMAT}}" for key in PROFILE_KEYS]
    lines.append(f"calibrated={'true' if model.calibrated else 'false'}")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_profile(path: str) -> RuntimeModel:
    """Parse a key=value runtime profile."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            values = parse_key_values(handle.read(), source=path)
    except OSError as e:
        raise SystemFileError(f"Cannot read runtime profile {path}: {e}") from e

    unknown = sorted(set(values) - set(PROFILE_KEYS) - {"calibrated"})
    if unknown:
        raise SystemFileError(f"{path}: unknown profile keys {', '.join(unknown)}")
    try:
        return RuntimeModel(**values)
    except ValueError as e:
        raise SystemFileError(f"{path}: invalid runtime profile ({e})") from e


def load_profile(name_or_path: str) -> RuntimeModel:
    """Load a runtime profile from a file path or by the name of a shipped profile."""
    if os.path.isfile(name_or_path):
        return read_profile(name_or_path)
    shipped = os.path.join(PROFILE_DIR, name_or_path + PROFILE_SUFFIX)
    if os.path.isfile(shipped):
        return read_profile(shipped)
    available = sorted(
        name[: -len(PROFILE_SUFFIX)] for name in os.listdir(PROFILE_DIR) if name.endswith(PROFILE_SUFFIX)
    )
    raise SystemFileError(
        f"No runtime profile {name_or_path!r}; shipped profiles: {', '.join(available)}"
    )


def write_field_csv(result: FieldResult, path: str, report: Optional[ErrorReport] = None) -> None:
    """
    Write per-particle results as CSV and append the energy (and error report) as comments.

    Args:
        result (FieldResult): Field to store.
        path (str): Output CSV path.
        report (ErrorReport): Optional comparison against a reference.
    """
    index = result.targets if result.targets is not None else np.arange(result.n)
    table = pd.DataFrame(
        {
            "index": index,
            "potential": result.potentials,
            "fx": result.forces[:, 0],
            "fy": result.forces[:, 1],
            "fz": result.forces[:, 2],
        },
        columns=FIELD_COLUMNS,
    )
    table.to_csv(path, index=False, float_format="%.17g")

    with open(path, "a", encoding="utf-8") as handle:
        handle.write(f"# energy={result.energy:{FLOAT_FORMAT}}\n")
        if report is not None:
            fields = ",".join(f"{key}={value:{FLOAT_FORMAT}}" for key, value in report.model_dump().items())
            handle.write(f"# error,{fields}\n")


def read_field_csv(path: str) -> pd.DataFrame:
    """Read the per-particle table written by write_field_csv (comment lines skipped)."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def read_field_summary(path: str) -> dict:
    """Collect the '# key=value' summary lines of a field CSV."""
    summary = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                continue
            for item in line[1:].strip().split(","):
                key, sep, value = item.partition("=")
                if sep:
                    summary[key.strip()] = float(value)
    return summary
