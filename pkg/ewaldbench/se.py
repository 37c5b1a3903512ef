"""
Spectral Ewald Module
---------------------
K-space engine with truncated Gaussian windows:
1. Window parameters (support P, shape m, width w, splitting eta).
2. Fast Gaussian gridding: per-dimension factor tables built from O(P) exponentials
   per particle instead of O(P^3).
3. Spreading, k-space scaling, and gathering of potential and force in one pass.
"""

import logging
import math
import time

import numpy as np

from ewaldbench.config import SHAPE_CONSTANT
from ewaldbench.kspace import apply_se_influence, fft_forward, fft_inverse, window_gather, window_spread
from ewaldbench.models import FGGTables, FieldResult, ParticleSystem, RealGrid, SEGridParams

logger = logging.getLogger(__name__)


def make_se_params(M: int, P: int, xi: float, L: float,
                   shape_constant: float = SHAPE_CONSTANT) -> SEGridParams:
    """
    Build Spectral Ewald grid parameters; eta >= 1 is accepted with a warning.

    Raises:
        ValueError: odd M or P, or P > M.
    """
    params = SEGridParams(M=M, P=P, xi=xi, box_length=L, shape_constant=shape_constant)
    if params.eta >= 1:
        logger.warning(
            "Spectral Ewald eta=%.3f >= 1 (M=%d, P=%d, xi=%.4g, L=%.4g); "
            "k-space scaling grows with |k|", params.eta, M, P, xi, L,
        )
    return params


def fgg_precompute(system: ParticleSystem, params: SEGridParams) -> FGGTables:
    """
    Factor tables for every particle's P^3 Gaussian support.

    The support is the P nearest grid points per dimension. With x = i0 h + delta the
    offset to support point j' (j' = -P/2+1 .. P/2) is j' h - delta, and
    e^{-a (j' h - delta)^2} = e^{-a (j' h)^2} * (e^{2 a h delta})^{j'} * e^{-a delta^2}.
    """
    M, P, h = params.M, params.P, params.h
    a = params.gaussian_exponent
    x = system.positions
    n = system.n

    base = np.minimum(np.floor(x / h).astype(np.int64), M - 1)
    delta = x - base * h
    shifts = np.arange(P) - P // 2 + 1

    static = np.exp(-a * (shifts * h) ** 2)
    gauss0 = np.exp(-a * delta ** 2)
    ratio = np.exp(2 * a * h * delta)
    first = np.exp(2 * a * h * delta * shifts[0])

    chain = np.empty((n, 3, P))
    chain[:, :, 0] = first
    chain[:, :, 1:] = ratio[:, :, None]
    chain = np.cumprod(chain, axis=2)

    factors = static * gauss0[:, :, None] * chain
    offsets = shifts * h - delta[:, :, None]
    indices = np.mod(base[:, :, None] + shifts, M)

    return FGGTables(
        indices=indices,
        factors=factors,
        offsets=offsets,
        static=static,
        exp_count=static.size + gauss0.size + ratio.size + first.size,
    )


def _normalization(params: SEGridParams) -> float:
    # (2 xi^2 / (pi eta))^{3/2}
    return (params.gaussian_exponent / math.pi) ** 1.5


def spread_se(system: ParticleSystem, params: SEGridParams, tables: FGGTables,
              threads: int = 1) -> RealGrid:
    """Sample H(x) = sum_n q_n (2 xi^2/pi eta)^{3/2} e^{-2 xi^2 |x - x_n|^2 / eta} on the grid."""
    values = window_spread(params.M, tables.indices, tables.factors, system.charges, threads)
    return RealGrid(values=values * _normalization(params), box_length=params.box_length)


def gather_se(grid: RealGrid, system: ParticleSystem, params: SEGridParams, tables: FGGTables,
              threads: int = 1):
    """
    Potentials and forces from the scaled grid in a single pass.

    phi_m = 4 pi h^3 (2 xi^2/pi eta)^{3/2} sum H~(x) g_m(x)
    F_m = -q_m dphi_m/dx_m = -q_m 4 pi h^3 (2 xi^2/pi eta)^{3/2} (4 xi^2/eta) sum (x - x_m) H~(x) g_m(x)

    Forces are the negative gradient of the total energy, F_m = -q_m dphi/dx_m, the same
    convention as the direct sum. With a = 2 xi^2/eta the window derivative is
    d g_m/d x_m = 2a (x - x_m) g_m, so the prefactor is 4 pi h^3 (...) 2a.
    """
    sums = window_gather(grid.values, tables.indices, tables.factors,
                         tables.offsets * tables.factors, threads)
    scale = 4 * math.pi * params.h ** 3 * _normalization(params)
    potentials = scale * sums[:, 0]
    forces = -(scale * 2 * params.gaussian_exponent) * system.charges[:, None] * sums[:, 1:]
    return potentials, forces


def se_kspace(system: ParticleSystem, M: int, P: int, xi: float, threads: int = 1,
              shape_constant: float = SHAPE_CONSTANT) -> FieldResult:
    """
    Fourier-space part of the Ewald sum with Gaussian windows.

    Returns:
        FieldResult: k-space potentials and forces, energy = 1/2 sum q phi, and stage
        timings (spread, fft, solve, ifft, gather) in seconds.
    """
    params = make_se_params(M, P, xi, system.box_length, shape_constant)
    timings = {}

    start = time.perf_counter()
    tables = fgg_precompute(system, params)
    grid = spread_se(system, params, tables, threads)
    timings["spread"] = time.perf_counter() - start

    start = time.perf_counter()
    spectrum = fft_forward(grid, threads)
    timings["fft"] = time.perf_counter() - start

    start = time.perf_counter()
    spectrum = apply_se_influence(spectrum, xi, params.eta)
    timings["solve"] = time.perf_counter() - start

    start = time.perf_counter()
    scaled = fft_inverse(spectrum, threads)
    timings["ifft"] = time.perf_counter() - start

    start = time.perf_counter()
    potentials, forces = gather_se(scaled, system, params, tables, threads)
    timings["gather"] = time.perf_counter() - start

    logger.debug("SE k-space: M=%d P=%d xi=%.4g eta=%.4f stages=%s", M, P, xi, params.eta, timings)
    return FieldResult(
        potentials=potentials,
        forces=forces,
        energy=0.5 * float(np.dot(system.charges, potentials)),
        timings=timings,
    )
