"""
Tuning Module
-------------
Accuracy-driven parameter selection:
1. Scan xi over a geometric grid. For each xi the truncation estimates fix r_c and the
   grid size; the support P (SE) or the grid size per B-spline order (SPME) follows.
2. Predict the runtime of each feasible point with the calibrated RuntimeModel.
3. Return the cheapest point (ties go to the smaller xi) with every candidate scanned.

SPME has no closed-form approximation bound, so its grid need is read off an empirical
error curve measured on a small neutral subsample against the direct Fourier sum.
"""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from ewaldbench.config import DEFAULT_MAX_GRID, SHAPE_CONSTANT, SPME_ORDERS
from ewaldbench.core import subsample
from ewaldbench.estimates import (
    kinf_from_tolerance,
    neighbor_count,
    predict_runtime,
    rc_from_tolerance,
    support_from_tolerance,
    xi_from_tolerance,
)
from ewaldbench.exceptions import InfeasibleToleranceError, ToleranceDomainError, UncalibratedModelError
from ewaldbench.models import EwaldSplit, ParticleSystem, RuntimeModel, TunedParams, TuningCandidate
from ewaldbench.oracle import converged_split, fourier_space_sum
from ewaldbench.pipeline import estimate_reference_rms
from ewaldbench.spme import spme_kspace

logger = logging.getLogger(__name__)

TUNED_METHODS = ("se", "spme")
XI_SPAN = 30.0
# Empirical SPME error curve: subsample size, xi*L of the measurement, grid ladder
CURVE_SAMPLE = 128
CURVE_XI_L = 12.0
CURVE_GRIDS = (8, 12, 16, 24, 32, 48, 64, 96, 128)
CURVE_REFERENCE_TOL = 1e-13


def spme_force_scale(xi: float, L: float, Q: float) -> float:
    """Magnitude 4 pi sqrt(Q xi^3 / L) normalizing SPME force errors across systems."""
    return 4 * math.pi * math.sqrt(Q * xi ** 3 / L)


def spme_error_curve(system: ParticleSystem, p: int, seed: int = 0,
                     sample_size: int = CURVE_SAMPLE) -> Tuple[np.ndarray, np.ndarray]:
    """
    Normalized SPME k-space force error as a function of s = xi h.

    Returns:
        tuple: (s, g) sorted by increasing s, g made non-decreasing in s.
    """
    sample = system if system.n <= sample_size else subsample(system, sample_size, seed)
    L, Q = sample.box_length, sample.charge_squared_sum
    xi = CURVE_XI_L / L
    split = converged_split(sample, CURVE_REFERENCE_TOL, xi=xi)
    reference = fourier_space_sum(sample, split)
    scale = spme_force_scale(xi, L, Q)

    s_values, g_values = [], []
    for M in CURVE_GRIDS:
        if M < p:
            continue
        result = spme_kspace(sample, M, p, xi)
        diff = result.forces - reference.forces
        error = math.sqrt(float(np.mean(np.sum(diff ** 2, axis=1))))
        s_values.append(xi * L / M)
        g_values.append(error / scale)

    order = np.argsort(s_values)
    s = np.asarray(s_values)[order]
    g = np.maximum.accumulate(np.asarray(g_values)[order])
    logger.debug("SPME p=%d error curve: %s", p, list(zip(s.round(4), g)))
    return s, g


def _grid_from_curve(curve: Tuple[np.ndarray, np.ndarray], xi: float, L: float, Q: float,
                     abs_tol: float) -> Optional[int]:
    """Coarsest even M whose curve error stays within abs_tol; None when unreachable."""
    s, g = curve
    target = abs_tol / spme_force_scale(xi, L, Q)
    if target < g[0]:
        return None
    if target >= g[-1]:
        s_max = s[-1]
    else:
        # log-log interpolation on the first segment crossing the target
        k = int(np.searchsorted(g, target, side="right"))
        lg0, lg1 = math.log(max(g[k - 1], 1e-300)), math.log(g[k])
        fraction = 0.0 if lg1 == lg0 else (math.log(target) - lg0) / (lg1 - lg0)
        s_max = math.exp(math.log(s[k - 1]) + fraction * (math.log(s[k]) - math.log(s[k - 1])))
    return 2 * math.ceil(xi * L / s_max / 2)


def _candidate(xi: float, r_c: float, M: int, mesh: Dict[str, int], model: RuntimeModel,
               system: ParticleSystem, max_grid: int, width: int) -> TuningCandidate:
    L = system.box_length
    if r_c > L / 2:
        return TuningCandidate(xi=xi, r_c=r_c, M=M, feasible=False, reason="r_c > L/2", **mesh)
    if M > max_grid:
        return TuningCandidate(xi=xi, r_c=r_c, M=M, feasible=False, reason=f"M > {max_grid}", **mesh)
    t_real, t_fourier = predict_runtime(model, system.n, neighbor_count(r_c, system.n, L), M, width)
    return TuningCandidate(xi=xi, r_c=r_c, M=M, predicted_real_time=t_real,
                           predicted_fourier_time=t_fourier, **mesh)


def tune(
    system: ParticleSystem,
    rel_tol: float,
    model: RuntimeModel,
    method: str = "se",
    reference_rms: Optional[float] = None,
    kind: str = "force",
    threads: int = 1,
    xi_points: int = 64,
    max_grid: int = DEFAULT_MAX_GRID,
    shape_constant: float = SHAPE_CONSTANT,
    spme_orders: Sequence[int] = SPME_ORDERS,
) -> TunedParams:
    """
    Pick (xi, r_c, M, P|p) minimizing the predicted runtime at a relative tolerance.

    Args:
        system (ParticleSystem): The system to tune for.
        rel_tol (float): Tolerance relative to the rms magnitude of the `kind` quantity.
        model (RuntimeModel): Calibrated cost constants.
        method (str): "se" or "spme".
        reference_rms (float): Rms magnitude; estimated with a cheap SE run when None.
        kind (str): Error kind the tolerance refers to.
        xi_points (int): Size of the geometric xi grid.
        max_grid (int): Largest admissible grid size.

    Returns:
        TunedParams: The fastest feasible parameters and the scanned candidates.

    Raises:
        UncalibratedModelError: model is not calibrated.
        InfeasibleToleranceError: no scanned xi meets the tolerance within the limits.
    """
    if method not in TUNED_METHODS:
        raise ValueError(f"Cannot tune method {method!r}; expected one of {', '.join(TUNED_METHODS)}")
    if not 0 < rel_tol < 1:
        raise ValueError(f"Relative tolerance must lie in (0, 1), got {rel_tol}")
    if not model.calibrated:
        raise UncalibratedModelError("Tuning needs a calibrated runtime model")

    if reference_rms is None:
        reference_rms = estimate_reference_rms(system, kind, threads)
    abs_tol = rel_tol * reference_rms
    L, Q = system.box_length, system.charge_squared_sum

    try:
        xi_min = xi_from_tolerance(kind, L / 2, abs_tol, Q, L)
    except ToleranceDomainError:
        xi_min = 2.0 / L
    xi_grid = np.geomspace(xi_min * (1 + 1e-9), XI_SPAN * xi_min, xi_points)

    P = support_from_tolerance(rel_tol, shape_constant) if method == "se" else None
    curves = {}
    if method == "spme":
        curves = {p: spme_error_curve(system, p) for p in spme_orders}

    candidates = []
    for xi in xi_grid:
        xi = float(xi)
        try:
            r_c = rc_from_tolerance(kind, xi, abs_tol, Q, L)
            M_trunc = 2 * math.ceil(kinf_from_tolerance(kind, xi, abs_tol, Q, L))
        except ToleranceDomainError as e:
            candidates.append(TuningCandidate(xi=xi, r_c=L, M=2, feasible=False, reason=str(e)))
            continue

        if method == "se":
            M = max(M_trunc, P)
            candidates.append(_candidate(xi, r_c, M, {"P": P}, model, system, max_grid, P))
            continue

        for p in spme_orders:
            M_p = _grid_from_curve(curves[p], xi, L, Q, abs_tol)
            if M_p is None:
                candidates.append(TuningCandidate(xi=xi, r_c=r_c, M=M_trunc, p=p, feasible=False,
                                                  reason="order cannot reach tolerance"))
                continue
            M = max(M_trunc, M_p, 2 * math.ceil(p / 2))
            candidates.append(_candidate(xi, r_c, M, {"p": p}, model, system, max_grid, p))

    feasible = [c for c in candidates if c.feasible]
    if not feasible:
        raise InfeasibleToleranceError(
            f"No xi in [{xi_grid[0]:.4g}, {xi_grid[-1]:.4g}] reaches relative tolerance {rel_tol:.3g} "
            f"with M <= {max_grid} and r_c <= L/2"
        )
    best = min(feasible, key=lambda c: (c.predicted_total_time, c.xi))
    logger.info("Tuned %s: xi=%.4g r_c=%.4g M=%d P=%s p=%s predicted %.4gs",
                method, best.xi, best.r_c, best.M, best.P, best.p, best.predicted_total_time)

    return TunedParams(
        method=method,
        split=EwaldSplit(xi=best.xi, r_c=best.r_c, k_inf=best.M // 2),
        M=best.M,
        P=best.P,
        p=best.p,
        predicted_real_time=best.predicted_real_time,
        predicted_fourier_time=best.predicted_fourier_time,
        abs_tol=abs_tol,
        reference_rms=reference_rms,
        candidates=candidates,
    )
