"""
Core Module
-----------
Shared plumbing for every engine:
1. Test-system generators (uniform, cloud-wall, isolated clouds) at fixed seeds.
2. Periodic geometry (minimum-image displacement).
3. Error metrics comparing a result with a reference.

Particle-file I/O lives in ewaldbench.persistence and is re-exported here.
"""

import math
from typing import Sequence

import numpy as np

from ewaldbench.models import ErrorReport, FieldResult, ParticleSystem
from ewaldbench.persistence import read_system, write_system

__all__ = [
    "SYSTEM_KINDS",
    "generate_system",
    "min_image_displacement",
    "read_system",
    "rms_error",
    "subsample",
    "write_system",
]

SYSTEM_KINDS = ("uniform", "cloud_wall", "isolated_clouds")

# Cloud-wall geometry, in units of L
WALL_CENTRES = (0.1, 0.9)
WALL_HALF_THICKNESS = 0.005
CLOUD_CENTRES = (0.3, 0.7)
CLOUD_RADIUS = 0.1
# Isolated-clouds geometry, in units of L
BLOB_CENTRES = (0.35, 0.65)
BLOB_RADIUS = 0.08


def _ball(rng: np.random.Generator, count: int, centre: Sequence[float], radius: float) -> np.ndarray:
    direction = rng.normal(size=(count, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.uniform(size=count) ** (1.0 / 3.0)
    return np.asarray(centre) + direction * r[:, None]


def _slab(rng: np.random.Generator, count: int, x_centre: float, half_thickness: float, L: float) -> np.ndarray:
    points = rng.uniform(0.0, L, size=(count, 3))
    points[:, 0] = rng.uniform(x_centre - half_thickness, x_centre + half_thickness, size=count)
    return points


def generate_system(kind: str, n: int, L: float, seed: int) -> ParticleSystem:
    """
    Generate a charge-neutral test system with n/2 charges +1 and n/2 charges -1.

    Kinds:
        uniform: i.i.d. uniform positions, charges alternating +1/-1.
        cloud_wall: two thin walls normal to x at 0.1L (+1) and 0.9L (-1), each holding
            four times the population of one of the two spherical clouds of radius 0.1L
            centred at (0.3L, L/2, L/2) (-1) and (0.7L, L/2, L/2) (+1). With n a multiple
            of 10 each cloud holds n/10 particles and each wall 4n/10.
        isolated_clouds: two compact balls of radius 0.08L at (0.35L, L/2, L/2) (+1)
            and (0.65L, L/2, L/2) (-1) in an otherwise empty box.

    Args:
        kind (str): One of SYSTEM_KINDS.
        n (int): Even particle count.
        L (float): Box length.
        seed (int): Seed of the numpy Generator; output is deterministic per arguments.

    Returns:
        ParticleSystem: The generated system.
    """
    if kind not in SYSTEM_KINDS:
        raise ValueError(f"Unknown system kind {kind!r}; expected one of {', '.join(SYSTEM_KINDS)}")
    if n < 2 or n % 2:
        raise ValueError(f"Particle count must be even and positive, got {n}")
    if not L > 0:
        raise ValueError(f"Box length must be positive, got {L}")

    rng = np.random.default_rng(seed)

    if kind == "uniform":
        positions = rng.uniform(0.0, L, size=(n, 3))
        charges = np.tile([1.0, -1.0], n // 2)

    elif kind == "cloud_wall":
        cloud = n // 10
        wall = (n - 2 * cloud) // 2
        groups = [
            (_slab(rng, wall, WALL_CENTRES[0] * L, WALL_HALF_THICKNESS * L, L), 1.0),
            (_slab(rng, wall, WALL_CENTRES[1] * L, WALL_HALF_THICKNESS * L, L), -1.0),
            (_ball(rng, cloud, (CLOUD_CENTRES[0] * L, L / 2, L / 2), CLOUD_RADIUS * L), -1.0),
            (_ball(rng, cloud, (CLOUD_CENTRES[1] * L, L / 2, L / 2), CLOUD_RADIUS * L), 1.0),
        ]
        positions = np.concatenate([points for points, _ in groups])
        charges = np.concatenate([np.full(len(points), q) for points, q in groups])

    else:
        half = n // 2
        positions = np.concatenate([
            _ball(rng, half, (BLOB_CENTRES[0] * L, L / 2, L / 2), BLOB_RADIUS * L),
            _ball(rng, half, (BLOB_CENTRES[1] * L, L / 2, L / 2), BLOB_RADIUS * L),
        ])
        charges = np.concatenate([np.ones(half), -np.ones(half)])

    return ParticleSystem(box_length=L, positions=positions, charges=charges)


def subsample(system: ParticleSystem, n: int, seed: int = 0) -> ParticleSystem:
    """Random charge-neutral subset of n particles (n/2 of each sign) in the same box."""
    if n % 2 or n < 2:
        raise ValueError(f"Subsample size must be even and positive, got {n}")
    positive = np.flatnonzero(system.charges > 0)
    negative = np.flatnonzero(system.charges < 0)
    if len(positive) < n // 2 or len(negative) < n // 2:
        raise ValueError(f"System has too few charges of each sign for a subsample of {n}")
    rng = np.random.default_rng(seed)
    chosen = np.sort(np.concatenate([
        rng.choice(positive, n // 2, replace=False),
        rng.choice(negative, n // 2, replace=False),
    ]))
    return ParticleSystem(
        box_length=system.box_length,
        positions=system.positions[chosen],
        charges=system.charges[chosen],
    )


def min_image_displacement(a, b, L: float) -> np.ndarray:
    """
    Periodic displacement a - b with every component in [-L/2, L/2).

    Works on single 3-vectors or on (n, 3) arrays of them.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - L * np.floor(d / L + 0.5)


def _rms(values: np.ndarray) -> float:
    return math.sqrt(float(np.mean(np.square(values)))) if values.size else 0.0


def rms_error(test: FieldResult, ref: FieldResult) -> ErrorReport:
    """
    Root-mean-square deviation of a result from a reference.

    The force rms runs over all 3N components. Relative values divide by the rms of
    the reference quantity; when that rms is zero the absolute value is reported.

    Raises:
        ValueError: when the results describe different numbers of particles.
    """
    if test.n != ref.n:
        raise ValueError(f"Cannot compare results of {test.n} and {ref.n} particles")

    abs_potential = _rms(test.potentials - ref.potentials)
    abs_force = _rms(test.forces - ref.forces)
    ref_potential = _rms(ref.potentials)
    ref_force = _rms(ref.forces)

    return ErrorReport(
        abs_rms_potential=abs_potential,
        abs_rms_force=abs_force,
        abs_rms_energy=abs(test.energy - ref.energy),
        rel_rms_potential=abs_potential / ref_potential if ref_potential > 0 else abs_potential,
        rel_rms_force=abs_force / ref_force if ref_force > 0 else abs_force,
    )
