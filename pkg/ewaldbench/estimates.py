"""
Estimates Module
----------------
Closed-form error estimates and the runtime cost model:
1. Kolafa-Perram truncation estimates for the real-space and Fourier-space sums,
   and their inversions (xi for a cutoff, cutoff for a xi, k_inf for a xi).
2. Spectral Ewald approximation bounds and the support P they imply.
3. Runtime prediction from a calibrated RuntimeModel.

Every estimate is an rms error of the kind named by `kind`: "potential",
"energy" or "force" (force estimates refer to the rms force-vector magnitude).
"""

import logging
import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import lambertw

from ewaldbench.config import MAX_SUPPORT, MIN_SUPPORT, SHAPE_CONSTANT
from ewaldbench.exceptions import ToleranceDomainError, UncalibratedModelError
from ewaldbench.models import RuntimeModel

logger = logging.getLogger(__name__)

KINDS = ("potential", "energy", "force")

# lambertw(exp(s)) overflows past this exponent; use the asymptotic Newton solve instead
_MAX_EXP_ARG = 700.0


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"Unknown estimate kind {kind!r}; expected one of {', '.join(KINDS)}")


def _check_tolerance(tol: float) -> None:
    if not (tol > 0 and math.isfinite(tol)):
        raise ToleranceDomainError(f"Tolerance must be positive and finite, got {tol}")


def lambert_w_decay(y: float) -> float:
    """
    Solve x * exp(-x) = y on the branch x >= 1.

    Brackets the root on [1, 60] (widened for tiny y), solves with Brent's method
    in u = x - 1 and finishes with Newton steps.

    Args:
        y (float): Right-hand side in (0, 1/e].

    Returns:
        float: The root x >= 1; larger cutoffs correspond to smaller y.
    """
    if not (0 < y <= math.exp(-1) * (1 + 1e-15)):
        raise ToleranceDomainError(f"lambert_w_decay needs 0 < y <= 1/e, got {y}")
    # log(1+u) - u = -gap, with gap >= 0 measuring the distance below the branch point
    gap = -1.0 - math.log(y)
    if gap <= 0:
        return 1.0

    def residual(u: float) -> float:
        return math.log1p(u) - u + gap

    upper = 59.0
    while residual(upper) > 0:
        upper *= 2
    u = brentq(residual, 0.0, upper, xtol=1e-14, maxiter=200)
    for _ in range(3):
        if u <= 0:
            break
        step = residual(u) / (-u / (1.0 + u))
        u -= step
        if abs(step) <= 1e-16 * (1.0 + u):
            break
    return 1.0 + max(u, 0.0)


def _lambert_w_of_exp(s: float) -> float:
    """Principal Lambert W of e^s without forming e^s for large s."""
    if s < _MAX_EXP_ARG:
        return float(lambertw(math.exp(s)).real)
    w = s - math.log(s)
    for _ in range(50):
        step = (w + math.log(w) - s) / (1.0 + 1.0 / w)
        w -= step
        if abs(step) <= 1e-15 * w:
            break
    return w


def _solve_decay(prefactor: float, power: float, tol: float) -> float:
    """Solve prefactor * t^(-power) * e^(-t) = tol for t > 0."""
    _check_tolerance(tol)
    log_ratio = math.log(prefactor) - math.log(tol)
    if power == 0:
        if log_ratio <= 0:
            raise ToleranceDomainError(
                f"Tolerance {tol:.3g} is looser than the estimate's prefactor {prefactor:.3g}"
            )
        return log_ratio
    # (t/a) e^{t/a} = (1/a) (C/tol)^{1/a}
    return power * _lambert_w_of_exp(log_ratio / power - math.log(power))


def truncation_error_real(kind: str, Q: float, r_c: float, xi: float, L: float) -> float:
    """Kolafa-Perram estimate of the error from truncating the real-space sum at r_c."""
    _check_kind(kind)
    decay = math.exp(-(r_c * xi) ** 2)
    if kind == "potential":
        return math.sqrt(Q * r_c / (2 * L ** 3)) * (xi * r_c) ** -2 * decay
    if kind == "energy":
        return Q * math.sqrt(r_c / (2 * L ** 3)) * (xi * r_c) ** -2 * decay
    return 2 * Q * math.sqrt(1.0 / (r_c * L ** 3)) * decay


def truncation_error_fourier(kind: str, Q: float, k_inf: float, xi: float, L: float) -> float:
    """Kolafa-Perram estimate of the error from truncating the Fourier sum at k_inf."""
    _check_kind(kind)
    decay = math.exp(-(math.pi * k_inf / (xi * L)) ** 2)
    if kind == "potential":
        return xi / math.pi ** 2 * k_inf ** -1.5 * math.sqrt(Q) * decay
    if kind == "energy":
        return xi / math.pi ** 2 * k_inf ** -1.5 * Q * decay
    return xi / (L * math.pi) * math.sqrt(8.0 / k_inf) * Q * decay


def xi_from_tolerance(kind: str, r_c: float, tol: float, Q: float, L: float) -> float:
    """
    Ewald parameter at which the real-space truncation estimate for cutoff r_c equals tol.

    Raises:
        ToleranceDomainError: tol not positive, or (force) looser than the estimate at xi = 0.
    """
    _check_kind(kind)
    # unknown t = (xi r_c)^2
    if kind == "potential":
        t = _solve_decay(math.sqrt(Q * r_c / (2 * L ** 3)), 1.0, tol)
    elif kind == "energy":
        t = _solve_decay(Q * math.sqrt(r_c / (2 * L ** 3)), 1.0, tol)
    else:
        t = _solve_decay(2 * Q * math.sqrt(1.0 / (r_c * L ** 3)), 0.0, tol)
    return math.sqrt(t) / r_c


def rc_from_tolerance(kind: str, xi: float, tol: float, Q: float, L: float) -> float:
    """Real-space cutoff at which the truncation estimate for a fixed xi equals tol."""
    _check_kind(kind)
    # unknown t = (xi r_c)^2
    if kind == "potential":
        t = _solve_decay(math.sqrt(Q / (2 * L ** 3)) / math.sqrt(xi), 0.75, tol)
    elif kind == "energy":
        t = _solve_decay(Q * math.sqrt(1.0 / (2 * L ** 3)) / math.sqrt(xi), 0.75, tol)
    else:
        t = _solve_decay(2 * Q * math.sqrt(xi) / L ** 1.5, 0.25, tol)
    return math.sqrt(t) / xi


def kinf_from_tolerance(kind: str, xi: float, tol: float, Q: float, L: float) -> float:
    """Fourier cutoff (real valued, callers round up) at which the estimate equals tol."""
    _check_kind(kind)
    # unknown t = (pi k / (xi L))^2, so k = xi L sqrt(t) / pi
    scale = xi * L / math.pi
    if kind == "potential":
        t = _solve_decay(xi / math.pi ** 2 * math.sqrt(Q) * scale ** -1.5, 0.75, tol)
    elif kind == "energy":
        t = _solve_decay(xi / math.pi ** 2 * Q * scale ** -1.5, 0.75, tol)
    else:
        t = _solve_decay(xi / (L * math.pi) * math.sqrt(8.0) * Q * scale ** -0.5, 0.25, tol)
    return scale * math.sqrt(t)


def relative_approx_bound(P: int, shape_constant: float = SHAPE_CONSTANT) -> float:
    """Parameter-free relative SE approximation error exp(-pi P c^2 / 2)."""
    return math.exp(-math.pi * P * shape_constant ** 2 / 2)


def approx_scale(kind: str, xi: float, L: float, Q: float) -> float:
    """Magnitude A that turns the relative SE bound into an absolute one."""
    _check_kind(kind)
    if kind == "potential":
        return math.sqrt(Q * xi * L) / L
    if kind == "energy":
        return Q * math.sqrt(xi * L) / L
    return 4 * math.pi * Q * math.sqrt(xi ** 3 / L)


def se_approx_error(kind: str, P: int, xi: float, L: float, Q: float,
                    shape_constant: float = SHAPE_CONSTANT) -> float:
    """Absolute Spectral Ewald approximation error bound for support P."""
    return approx_scale(kind, xi, L, Q) * relative_approx_bound(P, shape_constant)


def support_from_tolerance(rel_tol: float, shape_constant: float = SHAPE_CONSTANT) -> int:
    """
    Smallest even support P whose relative approximation bound is at most rel_tol.

    P is at least MIN_SUPPORT and is capped at MAX_SUPPORT, beyond which the Gaussian
    window is already resolved to machine precision.
    """
    if not 0 < rel_tol < 1:
        raise ValueError(f"Relative tolerance must lie in (0, 1), got {rel_tol}")
    needed = -2 * math.log(rel_tol) / (math.pi * shape_constant ** 2)
    P = max(2 * math.ceil(needed / 2), MIN_SUPPORT)
    if P > MAX_SUPPORT:
        logger.warning(
            "Relative tolerance %.3g needs support %d; capped at %d (double precision floor)",
            rel_tol, P, MAX_SUPPORT,
        )
        P = MAX_SUPPORT
    return P


def neighbor_count(r_c: float, n: int, L: float) -> float:
    """Average number of particles within r_c of a particle at uniform density."""
    return 4.0 / 3.0 * math.pi * r_c ** 3 * n / L ** 3


def predict_runtime(model: RuntimeModel, N: int, avg_neighbors: float, M: int, P: int):
    """
    Predict (t_real, t_fourier) in seconds.

    t_real = (c_ns + c_force) n N
    t_fourier = c_fft (M^3/2) log(M^3/2) + c_spga N P^3 + c_solve M^3

    P is the support (SE) or the B-spline order (SPME).
    """
    if not model.calibrated:
        raise UncalibratedModelError("Runtime prediction needs a calibrated model")
    half = M ** 3 / 2
    t_real = (model.c_ns + model.c_force) * avg_neighbors * N
    t_fourier = model.c_fft * half * math.log(half) + model.c_spga * N * P ** 3 + model.c_solve * M ** 3
    return t_real, t_fourier


def fit_constant(features, seconds) -> float:
    """Least-squares slope through the origin of seconds against work features."""
    features = np.asarray(features, dtype=float)
    seconds = np.asarray(seconds, dtype=float)
    denominator = float(np.dot(features, features))
    if denominator <= 0:
        raise ValueError("Cannot fit a constant to empty or zero features")
    return float(np.dot(features, seconds) / denominator)
