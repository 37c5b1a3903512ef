"""
Oracle Module
-------------
Direct Ewald summation, the ground truth every mesh engine is checked against:
1. Real-space sum over all periodic images within r_c (any r_c, multi-shell).
2. Fourier-space sum over the cube |n_d| <= k_inf, half-space with conjugate symmetry.
3. Self-interaction term and the combined total.
4. Converged references with parameters driven by the truncation estimates.

Also holds the neighbour-list real-space engine the mesh pipelines use (r_c <= L/2).
"""

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import erfc

from ewaldbench.config import DEFAULT_REFERENCE_TOL, MIN_REFERENCE_TOL
from ewaldbench.core import min_image_displacement
from ewaldbench.estimates import KINDS, kinf_from_tolerance, rc_from_tolerance, xi_from_tolerance
from ewaldbench.exceptions import ToleranceDomainError
from ewaldbench.models import EwaldSplit, FieldResult, ParticleSystem

logger = logging.getLogger(__name__)

# Upper bound on (target, source, image) triples held in memory at once
PAIR_CHUNK = 1_000_000
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def _resolve_targets(system: ParticleSystem, targets) -> np.ndarray:
    if targets is None:
        return np.arange(system.n)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if targets.size and (targets.min() < 0 or targets.max() >= system.n):
        raise ValueError(f"target indices must lie in [0, {system.n})")
    return targets


def _result(system: ParticleSystem, targets: np.ndarray, potentials, forces, timings=None,
            subset: bool = True) -> FieldResult:
    return FieldResult(
        potentials=potentials,
        forces=forces,
        energy=0.5 * float(np.dot(system.charges[targets], potentials)),
        targets=targets if subset else None,
        timings=timings or {},
    )


def _image_shifts(r_c: float, L: float) -> np.ndarray:
    s = math.ceil(r_c / L)
    return L * np.array(list(itertools.product(range(-s, s + 1), repeat=3)), dtype=float)


def _pair_terms(r: np.ndarray, xi: float):
    """erfc(xi r)/r and the radial force factor (erfc/r + 2 xi/sqrt(pi) e^{-xi^2 r^2})/r^2."""
    screened = erfc(xi * r) / r
    radial = (screened + TWO_OVER_SQRT_PI * xi * np.exp(-(xi * r) ** 2)) / r ** 2
    return screened, radial


def real_space_sum(system: ParticleSystem, split: EwaldSplit, targets=None,
                   threads: int = 1) -> FieldResult:
    """
    Real-space Ewald part: phi_m = sum'_{n,p} q_n erfc(xi r)/r over images with r <= r_c.

    Image shells p in {-s..s}^3 with s = ceil(r_c / L), so r_c may exceed L/2.

    Args:
        system (ParticleSystem): Sources (always all particles).
        split (EwaldSplit): xi and r_c; k_inf is ignored.
        targets (array-like): Optional indices of the particles to evaluate at.
        threads (int): Target chunks evaluated concurrently; each chunk owns its rows.

    Returns:
        FieldResult: Real-space potentials and forces at the targets.
    """
    subset = targets is not None
    targets = _resolve_targets(system, targets)
    L, xi, r_c = system.box_length, split.xi, split.r_c
    shifts = _image_shifts(r_c, L)
    sources, charges = system.positions, system.charges

    potentials = np.zeros(len(targets))
    forces = np.zeros((len(targets), 3))
    step = max(1, PAIR_CHUNK // (system.n * len(shifts)))

    def evaluate(start: int) -> None:
        rows = targets[start:start + step]
        d = (system.positions[rows, None, None, :] - sources[None, :, None, :]
             + shifts[None, None, :, :])
        r2 = np.einsum("tnpd,tnpd->tnp", d, d)
        mask = (r2 > 0) & (r2 <= r_c * r_c)
        r = np.sqrt(np.where(mask, r2, 1.0))
        screened, radial = _pair_terms(r, xi)
        weight = np.where(mask, charges[None, :, None], 0.0)
        potentials[start:start + step] = np.einsum("tnp,tnp->t", weight, screened)
        forces[start:start + step] = np.einsum("tnp,tnpd->td", weight * radial, d)

    starts = range(0, len(targets), step)
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(evaluate, starts))
    else:
        for start in starts:
            evaluate(start)

    forces *= system.charges[targets, None]
    logger.debug("Real-space sum: %d targets, %d image shifts, r_c=%.4g", len(targets), len(shifts), r_c)
    return _result(system, targets, potentials, forces, subset=subset)


def fourier_space_sum(system: ParticleSystem, split: EwaldSplit, targets=None) -> FieldResult:
    """
    Fourier-space Ewald part over 0 < max|n_d| <= k_inf, k = 2 pi n / L:

        phi_m = (4 pi / L^3) sum_k e^{-k^2/4xi^2}/k^2 sum_n q_n e^{i k.(x_m - x_n)}

    Modes with n_x < 0 are folded onto n_x > 0 by conjugate symmetry.
    """
    subset = targets is not None
    targets = _resolve_targets(system, targets)
    L, xi, K = system.box_length, split.xi, split.k_inf
    q = system.charges

    n_vals = np.arange(-K, K + 1)
    k_vals = 2 * math.pi * n_vals / L
    phases = np.exp(1j * system.positions[:, :, None] * k_vals[None, None, :])
    ex, ey, ez = phases[:, 0, K:], phases[:, 1], phases[:, 2]
    ex_t, ey_t, ez_t = ex[targets], ey[targets], ez[targets]

    k2_yz = k_vals[:, None] ** 2 + k_vals[None, :] ** 2
    potentials = np.zeros(len(targets))
    forces = np.zeros((len(targets), 3))

    for nx in range(K + 1):
        kx = k_vals[K + nx]
        k2 = kx ** 2 + k2_yz
        if nx == 0:
            k2 = k2.copy()
            k2[K, K] = 1.0
        green = np.exp(-k2 / (4 * xi ** 2)) / k2
        if nx == 0:
            green[K, K] = 0.0
        weight = 1.0 if nx == 0 else 2.0

        # S[ky, kz] = sum_n q_n e^{i k.x_n}
        structure = (q[:, None] * ex[:, nx, None] * ey).T @ ez
        G = green * np.conj(structure)
        T = ez_t @ G.T
        Tz = ez_t @ (G * k_vals[None, :]).T
        val = ex_t[:, nx] * np.sum(ey_t * T, axis=1)
        val_y = ex_t[:, nx] * np.sum(ey_t * T * k_vals[None, :], axis=1)
        val_z = ex_t[:, nx] * np.sum(ey_t * Tz, axis=1)

        potentials += weight * val.real
        forces[:, 0] += weight * kx * val.imag
        forces[:, 1] += weight * val_y.imag
        forces[:, 2] += weight * val_z.imag

    prefactor = 4 * math.pi / L ** 3
    potentials *= prefactor
    forces *= prefactor * q[targets, None]
    logger.debug("Fourier-space sum: %d targets, k_inf=%d", len(targets), K)
    return _result(system, targets, potentials, forces, subset=subset)


def self_term(system: ParticleSystem, xi: float, targets=None) -> FieldResult:
    """Self-interaction correction phi_m = -(2 xi/sqrt(pi)) q_m; energy -(xi/sqrt(pi)) Q."""
    if not xi > 0:
        raise ValueError(f"xi must be positive, got {xi}")
    subset = targets is not None
    targets = _resolve_targets(system, targets)
    potentials = -TWO_OVER_SQRT_PI * xi * system.charges[targets]
    return _result(system, targets, potentials, np.zeros((len(targets), 3)), subset=subset)


def direct_total(system: ParticleSystem, split: EwaldSplit, targets=None,
                 threads: int = 1) -> FieldResult:
    """Full direct Ewald sum: real + Fourier + self, with per-part timings."""
    start = time.perf_counter()
    real = real_space_sum(system, split, targets, threads)
    t_real = time.perf_counter() - start

    start = time.perf_counter()
    fourier = fourier_space_sum(system, split, targets)
    t_fourier = time.perf_counter() - start

    total = FieldResult.combine([real, fourier, self_term(system, split.xi, targets)])
    return total.model_copy(update={"timings": {"real": t_real, "fourier": t_fourier}})


def converged_split(system: ParticleSystem, tol: float, r_c: Optional[float] = None,
                    xi: Optional[float] = None) -> EwaldSplit:
    """
    Split whose real and Fourier truncation estimates (every kind) are at most tol.

    With xi given, r_c is solved from the real estimate. Otherwise r_c defaults to L/2
    and xi is the largest value any kind requires.
    """
    Q, L = system.charge_squared_sum, system.box_length

    if xi is None:
        r_c = L / 2 if r_c is None else r_c
        candidates = []
        for kind in KINDS:
            try:
                candidates.append(xi_from_tolerance(kind, r_c, tol, Q, L))
            except ToleranceDomainError:
                # tol already looser than this kind's estimate at xi -> 0
                continue
        xi = max(candidates) if candidates else 2.0 / r_c
    elif r_c is None:
        r_c = max(rc_from_tolerance(kind, xi, tol, Q, L) for kind in KINDS)

    k_inf = max(kinf_from_tolerance(kind, xi, tol, Q, L) for kind in KINDS)
    split = EwaldSplit(xi=xi, r_c=r_c, k_inf=max(1, math.ceil(k_inf)))
    logger.debug("Converged split for tol %.3g: %s", tol, split)
    return split


def converged_reference(system: ParticleSystem, target_tol: float = DEFAULT_REFERENCE_TOL,
                        r_c: Optional[float] = None, targets=None, threads: int = 1) -> FieldResult:
    """
    Direct Ewald result with every truncation estimate at most target_tol.

    Raises:
        ToleranceDomainError: target_tol below what double precision can deliver.
    """
    if target_tol < MIN_REFERENCE_TOL:
        raise ToleranceDomainError(
            f"Reference tolerance {target_tol:.3g} is below the double precision floor {MIN_REFERENCE_TOL:.0e}"
        )
    split = converged_split(system, target_tol, r_c=r_c)
    return direct_total(system, split, targets, threads)


def pair_search(system: ParticleSystem, r_c: float):
    """Periodic pair list within r_c: (i, j, d) with d = minimum-image x_i - x_j."""
    L = system.box_length
    if r_c > L / 2:
        raise ValueError(f"Neighbour search needs r_c <= L/2, got r_c={r_c:.4g}, L={L:.4g}")
    tree = cKDTree(system.positions, boxsize=L)
    pairs = tree.query_pairs(r_c, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    d = min_image_displacement(system.positions[i], system.positions[j], L)
    return i, j, d


def pair_fields(system: ParticleSystem, xi: float, i: np.ndarray, j: np.ndarray, d: np.ndarray):
    n, q = system.n, system.charges
    r = np.sqrt(np.einsum("pd,pd->p", d, d))
    screened, radial = _pair_terms(r, xi)
    potentials = (np.bincount(i, weights=q[j] * screened, minlength=n)
                  + np.bincount(j, weights=q[i] * screened, minlength=n))
    pair_force = (q[i] * q[j] * radial)[:, None] * d
    forces = np.stack(
        [np.bincount(i, weights=pair_force[:, c], minlength=n)
         - np.bincount(j, weights=pair_force[:, c], minlength=n) for c in range(3)],
        axis=1,
    )
    return potentials, forces


def neighbor_real_space(system: ParticleSystem, split: EwaldSplit):
    """
    Real-space part from a periodic k-d tree pair list; equals real_space_sum for r_c <= L/2.

    Returns:
        tuple: (FieldResult with timing "real", measured average neighbour count).
    """
    start = time.perf_counter()
    i, j, d = pair_search(system, split.r_c)
    potentials, forces = pair_fields(system, split.xi, i, j, d)
    elapsed = time.perf_counter() - start
    avg_neighbors = 2.0 * len(i) / system.n
    logger.debug("Neighbour real space: %d pairs, %.1f neighbours per particle", len(i), avg_neighbors)
    targets = np.arange(system.n)
    return _result(system, targets, potentials, forces, {"real": elapsed}, subset=False), avg_neighbors
