"""
Pipeline Module
---------------
Full Ewald evaluation for one method: real-space part + k-space part + self term.

Methods:
    direct: multi-shell real sum and the direct Fourier sum (oracle).
    se: neighbour-list real space + Spectral Ewald k-space.
    spme: neighbour-list real space + SPME k-space.
"""

import logging
import math
import time
from typing import Optional

import numpy as np

from ewaldbench.config import SHAPE_CONSTANT
from ewaldbench.models import EwaldSplit, FieldResult, ParticleSystem
from ewaldbench.oracle import fourier_space_sum, neighbor_real_space, real_space_sum, self_term
from ewaldbench.se import se_kspace
from ewaldbench.spme import spme_kspace

logger = logging.getLogger(__name__)

METHODS = ("direct", "se", "spme")
STAGES = ("real", "spread", "fft", "solve", "ifft", "gather")

# Reference-magnitude run: about this many neighbours, fixed support
REFERENCE_NEIGHBORS = 64
REFERENCE_XI_RC = 3.5
REFERENCE_SUPPORT = 8


def evaluate(
    system: ParticleSystem,
    method: str,
    split: EwaldSplit,
    M: Optional[int] = None,
    P: Optional[int] = None,
    p: Optional[int] = None,
    threads: int = 1,
    shape_constant: float = SHAPE_CONSTANT,
) -> FieldResult:
    """
    Evaluate potentials, forces and energy with the chosen method.

    Args:
        system (ParticleSystem): The charges.
        method (str): "direct", "se" or "spme".
        split (EwaldSplit): xi, r_c, and k_inf (used by direct only).
        M (int): Grid size for se/spme.
        P (int): Gaussian support for se.
        p (int): B-spline order for spme.
        threads (int): Worker threads for the heavy kernels.

    Returns:
        FieldResult: The total field with per-stage timings (seconds, zero for unused stages).
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}")
    if method == "se" and (M is None or P is None):
        raise ValueError("method se needs grid size M and support P")
    if method == "spme" and (M is None or p is None):
        raise ValueError("method spme needs grid size M and order p")

    timings = {stage: 0.0 for stage in STAGES}

    if method == "direct" or split.r_c > system.box_length / 2:
        start = time.perf_counter()
        real = real_space_sum(system, split, threads=threads)
        timings["real"] = time.perf_counter() - start
    else:
        real, _ = neighbor_real_space(system, split)
        timings["real"] = real.timings["real"]

    if method == "direct":
        start = time.perf_counter()
        kspace = fourier_space_sum(system, split)
        timings["solve"] = time.perf_counter() - start
    elif method == "se":
        kspace = se_kspace(system, M, P, split.xi, threads, shape_constant)
    else:
        kspace = spme_kspace(system, M, p, split.xi, threads)
    for stage, seconds in kspace.timings.items():
        timings[stage] = seconds

    total = FieldResult.combine([real, kspace, self_term(system, split.xi)])
    logger.debug("Evaluated %s: xi=%.4g r_c=%.4g M=%s P=%s p=%s total=%.3gs",
                 method, split.xi, split.r_c, M, P, p, sum(timings.values()))
    return total.model_copy(update={"targets": None, "timings": timings})


def reference_split(system: ParticleSystem) -> EwaldSplit:
    """Moderate-accuracy split used to estimate field magnitudes."""
    L = system.box_length
    r_c = min(L / 2, (REFERENCE_NEIGHBORS * 3 / (4 * math.pi * system.density)) ** (1.0 / 3.0))
    xi = REFERENCE_XI_RC / r_c
    M = max(2 * math.ceil(1.11 * xi * L), REFERENCE_SUPPORT)
    return EwaldSplit(xi=xi, r_c=r_c, k_inf=M // 2)


def estimate_reference_rms(system: ParticleSystem, kind: str = "force", threads: int = 1) -> float:
    """
    Rms magnitude of the force vectors (potentials, or |energy|) from a cheap SE run.

    Used to turn a relative tolerance into an absolute one when no reference is given.
    """
    split = reference_split(system)
    M = 2 * split.k_inf
    result = evaluate(system, "se", split, M=M, P=REFERENCE_SUPPORT, threads=threads)
    if kind == "energy":
        return abs(result.energy)
    if kind == "potential":
        return math.sqrt(float(np.mean(result.potentials ** 2)))
    return math.sqrt(float(np.mean(np.sum(result.forces ** 2, axis=1))))
