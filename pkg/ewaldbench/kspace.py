"""
K-space Module
--------------
The Fourier backbone shared by both mesh engines:
1. Real-to-complex 3D transforms (scipy.fft, unnormalized forward, 1/M^3 on inverse).
2. Wave-number bookkeeping for the half spectrum.
3. Influence functions: Spectral Ewald scaling and SPME scaling with the B(k) factor.
4. Tensor-product window spreading and gathering used by both engines.

Prefactors (4 pi / L^3 and the quadrature weights) are applied in the gather stage
of each engine, never in the influence functions.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.fft

from ewaldbench.models import RealGrid, SpectralGrid

logger = logging.getLogger(__name__)

# Upper bound on window weights materialized at once (entries, not bytes)
WINDOW_CHUNK = 2_000_000
# |denominator|^2 below this marks an annihilated (odd-order Nyquist) mode
BFACTOR_ZERO = 1e-12


def fft_forward(grid: RealGrid, threads: int = 1) -> SpectralGrid:
    """Unnormalized real-to-complex transform of a grid."""
    coefficients = scipy.fft.rfftn(grid.values, workers=threads)
    return SpectralGrid(coefficients=coefficients, box_length=grid.box_length)


def fft_inverse(spec: SpectralGrid, threads: int = 1) -> RealGrid:
    """Inverse of fft_forward (divides by M^3)."""
    M = spec.M
    values = scipy.fft.irfftn(spec.coefficients, s=(M, M, M), workers=threads)
    return RealGrid(values=values, box_length=spec.box_length)


def wave_indices(M: int):
    """Integer wave indices along a full axis (FFT order) and along the halved last axis."""
    full = np.rint(scipy.fft.fftfreq(M, d=1.0 / M)).astype(np.int64)
    half = np.arange(M // 2 + 1, dtype=np.int64)
    return full, half


def squared_wave_numbers(M: int, L: float) -> np.ndarray:
    """|k|^2 for every half-spectrum entry, k = 2 pi n / L."""
    full, half = wave_indices(M)
    scale = (2 * math.pi / L) ** 2
    full2 = scale * full.astype(float) ** 2
    half2 = scale * half.astype(float) ** 2
    return full2[:, None, None] + full2[None, :, None] + half2[None, None, :]


def _gaussian_over_k2(M: int, L: float, exponent: float) -> np.ndarray:
    k2 = squared_wave_numbers(M, L)
    k2[0, 0, 0] = 1.0
    multiplier = np.exp(-exponent * k2) / k2
    multiplier[0, 0, 0] = 0.0
    return multiplier


def se_influence(M: int, L: float, xi: float, eta: float) -> np.ndarray:
    """Spectral Ewald multiplier e^{-(1 - eta) k^2 / 4 xi^2} / k^2, zero mode removed."""
    return _gaussian_over_k2(M, L, (1.0 - eta) / (4 * xi ** 2))


def apply_se_influence(spec: SpectralGrid, xi: float, eta: float) -> SpectralGrid:
    """Scale each mode by the Spectral Ewald influence function."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    multiplier = se_influence(spec.M, spec.box_length, xi, eta)
    return SpectralGrid(coefficients=spec.coefficients * multiplier, box_length=spec.box_length)


def bspline_bfactors(p: int, M: int) -> np.ndarray:
    """
    |b(n)|^2 for n = 0..M-1 (index n mod M), from the cardinal B-spline at integer nodes.

    Where the denominator vanishes (odd p at n = M/2) the factor is 0, annihilating the mode.
    """
    # spme imports this module for its pipeline
    from ewaldbench.spme import bspline_value

    if p < 2:
        raise ValueError(f"B-spline order must be at least 2, got {p}")
    if M % 2:
        raise ValueError(f"Grid size must be even, got {M}")
    nodes = np.arange(p - 1)
    values = bspline_value(p, nodes + 1.0)
    n = np.arange(M)
    denominator = np.exp(2j * math.pi * np.outer(n, nodes) / M) @ values
    modulus = np.abs(denominator) ** 2
    factors = np.zeros(M)
    nonzero = modulus > BFACTOR_ZERO
    factors[nonzero] = 1.0 / modulus[nonzero]
    if not nonzero.all():
        logger.debug("B-spline order %d annihilates %d of %d modes per axis", p, int((~nonzero).sum()), M)
    return factors


def spme_influence(M: int, L: float, xi: float, p: int) -> np.ndarray:
    """SPME multiplier B(k) e^{-k^2 / 4 xi^2} / k^2, zero mode removed."""
    factors = bspline_bfactors(p, M)
    full, half = wave_indices(M)
    b_full = factors[np.mod(full, M)]
    b_half = factors[half % M]
    B = b_full[:, None, None] * b_full[None, :, None] * b_half[None, None, :]
    return B * _gaussian_over_k2(M, L, 1.0 / (4 * xi ** 2))


def apply_spme_influence(spec: SpectralGrid, xi: float, p: int) -> SpectralGrid:
    """Scale each mode by the SPME influence function."""
    multiplier = spme_influence(spec.M, spec.box_length, xi, p)
    return SpectralGrid(coefficients=spec.coefficients * multiplier, box_length=spec.box_length)


def _blocks(n: int, threads: int):
    edges = np.linspace(0, n, max(1, threads) + 1).astype(int)
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def _flat_indices(indices: np.ndarray, M: int) -> np.ndarray:
    ix = indices[:, 0, :, None, None]
    iy = indices[:, 1, None, :, None]
    iz = indices[:, 2, None, None, :]
    return (ix * M + iy) * M + iz


def window_spread(M: int, indices: np.ndarray, weights: np.ndarray, charges: np.ndarray,
                  threads: int = 1) -> np.ndarray:
    """
    Accumulate q_n * wx * wy * wz onto an M^3 grid.

    Args:
        M (int): Grid size.
        indices (np.ndarray): (n, 3, P) wrapped grid indices per dimension.
        weights (np.ndarray): (n, 3, P) one-dimensional window weights.
        charges (np.ndarray): (n,) charges.
        threads (int): Particle blocks accumulated into private grids, summed in block order.

    Returns:
        np.ndarray: (M, M, M) grid values.
    """
    n, _, P = weights.shape
    step = max(1, WINDOW_CHUNK // P ** 3)

    def accumulate(bounds):
        lo, hi = bounds
        grid = np.zeros(M ** 3)
        for start in range(lo, hi, step):
            stop = min(hi, start + step)
            w = weights[start:stop]
            values = (charges[start:stop, None, None, None]
                      * w[:, 0, :, None, None] * w[:, 1, None, :, None] * w[:, 2, None, None, :])
            flat = _flat_indices(indices[start:stop], M)
            grid += np.bincount(flat.ravel(), weights=values.ravel(), minlength=M ** 3)
        return grid

    blocks = _blocks(n, threads)
    if len(blocks) <= 1:
        total = accumulate((0, n))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partial = list(pool.map(accumulate, blocks))
        total = partial[0]
        for grid in partial[1:]:
            total += grid
    return total.reshape(M, M, M)


def window_gather(values: np.ndarray, indices: np.ndarray, weights: np.ndarray,
                  dweights: np.ndarray, threads: int = 1) -> np.ndarray:
    """
    Interpolate a grid back to particles with a tensor-product window.

    Returns an (n, 4) array: column 0 sums grid * wx * wy * wz, columns 1-3 replace
    the weight of one dimension by its dweights (gradient windows).
    """
    n, _, P = weights.shape
    M = values.shape[0]
    flat_values = values.ravel()
    out = np.empty((n, 4))
    step = max(1, WINDOW_CHUNK // P ** 3)

    def interpolate(bounds):
        lo, hi = bounds
        for start in range(lo, hi, step):
            stop = min(hi, start + step)
            g = flat_values[_flat_indices(indices[start:stop], M)]
            wx, wy, wz = (weights[start:stop, d] for d in range(3))
            dx, dy, dz = (dweights[start:stop, d] for d in range(3))
            gz = np.einsum("cijk,ck->cij", g, wz)
            gdz = np.einsum("cijk,ck->cij", g, dz)
            out[start:stop, 0] = np.einsum("cij,ci,cj->c", gz, wx, wy)
            out[start:stop, 1] = np.einsum("cij,ci,cj->c", gz, dx, wy)
            out[start:stop, 2] = np.einsum("cij,ci,cj->c", gz, wx, dy)
            out[start:stop, 3] = np.einsum("cij,ci,cj->c", gdz, wx, wy)

    blocks = _blocks(n, threads)
    if len(blocks) <= 1:
        interpolate((0, n))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(interpolate, blocks))
    return out
