"""
SPME Module
-----------
Smooth Particle Mesh Ewald k-space engine:
1. Cardinal B-splines M_p and their derivatives.
2. Charge assignment of order p onto the M^3 grid.
3. Convolution with the B(k)-corrected influence function and gathering of
   potentials and analytically differentiated forces.
"""

import logging
import math
import time

import numpy as np

from ewaldbench.kspace import apply_spme_influence, fft_forward, fft_inverse, window_gather, window_spread
from ewaldbench.models import FieldResult, ParticleSystem, RealGrid, SPMEGridParams

logger = logging.getLogger(__name__)


def bspline_value(p: int, u):
    """
    Cardinal B-spline M_p(u) of order p, supported on [0, p].

    M_2(u) = 1 - |u - 1| on [0, 2] and
    M_k(u) = u/(k-1) M_{k-1}(u) + (k-u)/(k-1) M_{k-1}(u-1).

    Args:
        p (int): Order, at least 2.
        u (float | np.ndarray): Evaluation points.

    Returns:
        float | np.ndarray: M_p(u), a float for scalar input.
    """
    if p < 2:
        raise ValueError(f"B-spline order must be at least 2, got {p}")
    scalar = np.ndim(u) == 0
    u = np.asarray(u, dtype=float)

    # level[s] holds M_k(u - s)
    level = [np.clip(1.0 - np.abs(u - s - 1.0), 0.0, None) for s in range(p - 1)]
    for k in range(3, p + 1):
        level = [
            ((u - s) * level[s] + (k - (u - s)) * level[s + 1]) / (k - 1)
            for s in range(p - k + 1)
        ]
    value = level[0]
    return float(value) if scalar else value


def bspline_derivative(p: int, u):
    """dM_p/du = M_{p-1}(u) - M_{p-1}(u - 1); needs p >= 3 for a continuous spline."""
    if p < 3:
        raise ValueError(f"B-spline derivative needs order at least 3, got {p}")
    u = np.asarray(u, dtype=float) if np.ndim(u) else float(u)
    return bspline_value(p - 1, u) - bspline_value(p - 1, u - 1.0)


def make_spme_params(M: int, p: int, xi: float, L: float) -> SPMEGridParams:
    """SPME grid parameters; p must be at least 3 for force gathering."""
    if p < 3:
        raise ValueError(f"SPME needs B-spline order at least 3, got {p}")
    return SPMEGridParams(M=M, p=p, xi=xi, box_length=L)


def spme_weights(system: ParticleSystem, params: SPMEGridParams):
    """
    Assignment stencil for every particle.

    With u = M x / L the particle touches grid points floor(u) - j, j = 0..p-1, with
    weights M_p(frac(u) + j). Derivative weights are already scaled by M / L (None below order 3).

    Returns:
        tuple: (indices, weights, dweights), each of shape (n, 3, p).
    """
    M, p = params.M, params.p
    u = system.positions * (M / params.box_length)
    base = np.floor(u)
    frac = u - base
    j = np.arange(p)
    arguments = frac[:, :, None] + j
    indices = np.mod(base.astype(np.int64)[:, :, None] - j, M)
    weights = bspline_value(p, arguments)
    dweights = bspline_derivative(p, arguments) * (M / params.box_length) if p >= 3 else None
    return indices, weights, dweights


def spread_spme(system: ParticleSystem, params: SPMEGridParams, weights=None,
                threads: int = 1) -> RealGrid:
    """Assign charges to the grid: Q(k) = sum_n q_n prod_d M_p(u_nd - k_d)."""
    indices, w, _ = weights if weights is not None else spme_weights(system, params)
    values = window_spread(params.M, indices, w, system.charges, threads)
    return RealGrid(values=values, box_length=params.box_length)


def gather_spme(grid: RealGrid, system: ParticleSystem, params: SPMEGridParams, weights=None,
                threads: int = 1):
    """
    Potentials and forces from the convolved grid.

    phi_m = (4 pi / h^3) sum W_m conv,  F_m = -q_m (4 pi / h^3) sum grad W_m conv.
    """
    indices, w, dw = weights if weights is not None else spme_weights(system, params)
    sums = window_gather(grid.values, indices, w, dw, threads)
    scale = 4 * math.pi / params.h ** 3
    potentials = scale * sums[:, 0]
    forces = -scale * system.charges[:, None] * sums[:, 1:]
    return potentials, forces


def spme_kspace(system: ParticleSystem, M: int, p: int, xi: float, threads: int = 1) -> FieldResult:
    """
    Fourier-space part of the Ewald sum with order-p B-spline assignment.

    Returns:
        FieldResult: k-space potentials and forces, energy = 1/2 sum q phi, and stage
        timings (spread, fft, solve, ifft, gather) in seconds.
    """
    params = make_spme_params(M, p, xi, system.box_length)
    timings = {}

    start = time.perf_counter()
    weights = spme_weights(system, params)
    grid = spread_spme(system, params, weights, threads)
    timings["spread"] = time.perf_counter() - start

    start = time.perf_counter()
    spectrum = fft_forward(grid, threads)
    timings["fft"] = time.perf_counter() - start

    start = time.perf_counter()
    spectrum = apply_spme_influence(spectrum, xi, p)
    timings["solve"] = time.perf_counter() - start

    start = time.perf_counter()
    convolved = fft_inverse(spectrum, threads)
    timings["ifft"] = time.perf_counter() - start

    start = time.perf_counter()
    potentials, forces = gather_spme(convolved, system, params, weights, threads)
    timings["gather"] = time.perf_counter() - start

    logger.debug("SPME k-space: M=%d p=%d xi=%.4g stages=%s", M, p, xi, timings)
    return FieldResult(
        potentials=potentials,
        forces=forces,
        energy=0.5 * float(np.dot(system.charges, potentials)),
        timings=timings,
    )
