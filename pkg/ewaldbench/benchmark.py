"""
Benchmark Module
----------------
Measurement side of the harness:
1. Sweeps: one row per parameter point with measured errors against a converged
   reference, predicted errors from the estimates and per-stage wall times.
2. Calibration: times each kernel on a small ladder of sizes and fits the
   RuntimeModel constants, then checks the fit on a held-out point.
3. Verification of tuned parameters against the oracle at a subset of targets.
"""

import logging
import math
import statistics
import time
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ewaldbench.config import DEFAULT_REFERENCE_TOL, SHAPE_CONSTANT
from ewaldbench.core import generate_system, rms_error
from ewaldbench.estimates import (
    fit_constant,
    predict_runtime,
    se_approx_error,
    truncation_error_fourier,
    truncation_error_real,
)
from ewaldbench.exceptions import CalibrationError, UsageError
from ewaldbench.kspace import apply_se_influence, fft_forward, fft_inverse
from ewaldbench.models import (
    CalibrationReport,
    EwaldSplit,
    FieldResult,
    ParticleSystem,
    RealGrid,
    RuntimeModel,
    TunedParams,
    VerificationReport,
)
from ewaldbench.oracle import converged_reference, pair_fields, pair_search
from ewaldbench.pipeline import STAGES, evaluate
from ewaldbench.se import fgg_precompute, gather_se, make_se_params, se_kspace, spread_se
from ewaldbench.tuning import tune

logger = logging.getLogger(__name__)

AXES = ("M", "xi", "P", "p", "tol")
SWEEP_COLUMNS = [
    "axis", "value", "method", "xi", "r_c", "k_inf", "M", "P", "p",
    "abs_rms_potential", "abs_rms_force", "abs_rms_energy", "rel_rms_potential", "rel_rms_force",
    "est_real_potential", "est_fourier_potential", "est_real_force", "est_fourier_force",
    "est_se_potential", "est_se_force",
    "t_real", "t_spread", "t_fft", "t_solve", "t_ifft", "t_gather", "t_total",
]

# Calibration ladders
CALIBRATION_DENSITY = 100.0
CALIBRATION_CUTOFF = 0.5
PARTICLE_LADDER = (2000, 4000, 8000, 16000)
GRID_LADDER = (32, 48, 64, 96)
WINDOW_LADDER = ((2000, 4), (2000, 8), (8000, 6), (8000, 8))
WINDOW_GRID = 32
HOLDOUT = {"N": 4000, "M": 64, "P": 6}
VARIANCE_LIMIT = 0.5
HOLDOUT_BAND = (0.5, 2.0)
VERIFY_MARGIN = 1.5


def _check_sweep(method: str, axis: str, xi, r_c, M, P, p, model) -> None:
    if axis not in AXES:
        raise UsageError(f"Unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    if method not in ("direct", "se", "spme"):
        raise UsageError(f"Unknown method {method!r}")
    if axis == "P" and method != "se":
        raise UsageError("Sweeping P needs --method se")
    if axis == "p" and method != "spme":
        raise UsageError("Sweeping p needs --method spme")
    if axis == "tol":
        if method == "direct":
            raise UsageError("Sweeping tol needs a mesh method (se or spme)")
        if model is None:
            raise UsageError("Sweeping tol needs a runtime profile")
        return
    if r_c is None:
        raise UsageError("Sweeps need a fixed real-space cutoff r_c (except along the tol axis)")
    if axis != "xi" and xi is None:
        raise UsageError("Sweeps need a fixed xi (except along the xi and tol axes)")
    if axis != "M" and M is None:
        raise UsageError(f"Method {method} needs a fixed grid size M")
    if method == "se" and axis != "P" and P is None:
        raise UsageError("Method se needs a fixed support P")
    if method == "spme" and axis != "p" and p is None:
        raise UsageError("Method spme needs a fixed order p")


def _row(axis: str, value, method: str, system: ParticleSystem, split: EwaldSplit, M, P, p,
         result: FieldResult, reference: FieldResult, shape_constant: float) -> Dict[str, object]:
    L, Q = system.box_length, system.charge_squared_sum
    report = rms_error(result, reference)
    row = {
        "axis": axis, "value": value, "method": method,
        "xi": split.xi, "r_c": split.r_c, "k_inf": split.k_inf, "M": M, "P": P, "p": p,
        **report.model_dump(),
        "est_real_potential": truncation_error_real("potential", Q, split.r_c, split.xi, L),
        "est_fourier_potential": truncation_error_fourier("potential", Q, split.k_inf, split.xi, L),
        "est_real_force": truncation_error_real("force", Q, split.r_c, split.xi, L),
        "est_fourier_force": truncation_error_fourier("force", Q, split.k_inf, split.xi, L),
        "est_se_potential": (se_approx_error("potential", P, split.xi, L, Q, shape_constant)
                             if method == "se" else math.nan),
        "est_se_force": (se_approx_error("force", P, split.xi, L, Q, shape_constant)
                         if method == "se" else math.nan),
    }
    for stage in STAGES:
        row[f"t_{stage}"] = result.timings.get(stage, 0.0)
    row["t_total"] = sum(result.timings.get(stage, 0.0) for stage in STAGES)
    return row


def sweep_rows(
    system: ParticleSystem,
    method: str,
    axis: str,
    values: Sequence[float],
    xi: Optional[float] = None,
    r_c: Optional[float] = None,
    M: Optional[int] = None,
    P: Optional[int] = None,
    p: Optional[int] = None,
    model: Optional[RuntimeModel] = None,
    reference: Optional[FieldResult] = None,
    ref_tol: float = DEFAULT_REFERENCE_TOL,
    threads: int = 1,
    shape_constant: float = SHAPE_CONSTANT,
) -> pd.DataFrame:
    """
    Evaluate one method across a parameter axis and tabulate errors, estimates and timings.

    Axes:
        M: grid size (for direct, k_inf = M // 2).
        xi: Ewald parameter at fixed r_c.
        P: SE support.  p: SPME order.
        tol: relative force tolerance; each point runs the tuner with `model`.

    Returns:
        pd.DataFrame: One row per sweep value, columns SWEEP_COLUMNS.

    Raises:
        UsageError: axis/method mismatch or a missing fixed parameter.
    """
    _check_sweep(method, axis, xi, r_c, M, P, p, model)

    if reference is None:
        print(f"🔄 Computing converged reference (tol={ref_tol:.0e}, N={system.n})...")
        reference = converged_reference(system, ref_tol, threads=threads)
    reference_rms = math.sqrt(float(np.mean(np.sum(reference.forces ** 2, axis=1))))

    rows = []
    for value in values:
        point = {"xi": xi, "r_c": r_c, "M": M, "P": P, "p": p}
        if axis == "tol":
            tuned = tune(system, float(value), model, method=method, reference_rms=reference_rms,
                         threads=threads, shape_constant=shape_constant)
            point.update(xi=tuned.split.xi, r_c=tuned.split.r_c, M=tuned.M, P=tuned.P, p=tuned.p)
        elif axis == "xi":
            point["xi"] = float(value)
        else:
            point[axis] = int(value)

        grid = point["M"]
        split = EwaldSplit(xi=point["xi"], r_c=point["r_c"], k_inf=max(1, grid // 2))
        mesh_P = point["P"] if method == "se" else None
        mesh_p = point["p"] if method == "spme" else None
        result = evaluate(system, method, split, M=grid, P=mesh_P, p=mesh_p,
                          threads=threads, shape_constant=shape_constant)
        rows.append(_row(axis, value, method, system, split, grid, mesh_P, mesh_p,
                         result, reference, shape_constant))
        logger.info("Sweep %s=%s: rel force error %.3g", axis, value, rows[-1]["rel_rms_force"])

    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def _timings(fn: Callable[[], object], repeats: int) -> List[float]:
    seconds = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        seconds.append(time.perf_counter() - start)
    return seconds


def _is_stable(seconds: Sequence[float]) -> bool:
    best = sorted(seconds)[:3]
    return (best[-1] - best[0]) <= VARIANCE_LIMIT * best[0]


def measure(fn: Callable[[], object], repeats: int = 5, label: str = "kernel") -> float:
    """
    Median wall time of fn over `repeats` runs.

    The fastest three runs must agree within 50%; one retry is allowed.

    Raises:
        CalibrationError: timings still unstable after the retry.
    """
    fn()
    seconds = _timings(fn, repeats)
    if not _is_stable(seconds):
        logger.warning("Unstable timings for %s (%s); retrying once", label,
                       ", ".join(f"{s:.3g}" for s in seconds))
        seconds = _timings(fn, repeats)
        if not _is_stable(seconds):
            raise CalibrationError(
                f"Timing variance above {VARIANCE_LIMIT:.0%} for {label} after a retry: "
                + ", ".join(f"{s:.3g}s" for s in seconds)
            )
    return statistics.median(seconds)


def _calibration_system(n: int, seed: int) -> ParticleSystem:
    L = (n / CALIBRATION_DENSITY) ** (1.0 / 3.0)
    return generate_system("uniform", n, L, seed)


def _fft_feature(M: int) -> float:
    half = M ** 3 / 2
    return half * math.log(half)


def calibrate(threads: int = 1, repeats: int = 5, seed: int = 0) -> CalibrationReport:
    """
    Fit the RuntimeModel constants on built-in kernel ladders.

    Kernels: neighbour search and real-space force (feature n N), FFT round trip
    (feature (M^3/2) log(M^3/2)), influence scaling (feature M^3), and SE spreading
    plus gathering (feature N P^3).

    Returns:
        CalibrationReport: The calibrated model, the ladder samples and the held-out check.
    """
    samples: Dict[str, List[List[float]]] = {"ns": [], "force": [], "fft": [], "solve": [], "spga": []}
    rng = np.random.default_rng(seed)

    for n in PARTICLE_LADDER:
        system = _calibration_system(n, seed)
        i, j, d = pair_search(system, CALIBRATION_CUTOFF)
        feature = 2.0 * len(i)
        samples["ns"].append([feature, measure(lambda: pair_search(system, CALIBRATION_CUTOFF),
                                               repeats, f"neighbour search N={n}")])
        samples["force"].append([feature, measure(lambda: pair_fields(system, 3.0, i, j, d),
                                                  repeats, f"real-space force N={n}")])
        print(f"⏱️ Real space N={n}: {len(i)} pairs")

    for M in GRID_LADDER:
        grid = RealGrid(values=rng.standard_normal((M, M, M)), box_length=1.0)
        spectrum = fft_forward(grid, threads)
        samples["fft"].append([_fft_feature(M), measure(
            lambda: fft_inverse(fft_forward(grid, threads), threads), repeats, f"FFT M={M}")])
        samples["solve"].append([float(M ** 3), measure(
            lambda: apply_se_influence(spectrum, 10.0, 0.5), repeats, f"influence M={M}")])
        print(f"⏱️ Grid M={M}")

    for n, P in WINDOW_LADDER:
        system = _calibration_system(n, seed)
        params = make_se_params(WINDOW_GRID, P, 10.0 / system.box_length, system.box_length)
        grid = RealGrid(values=rng.standard_normal((WINDOW_GRID,) * 3), box_length=system.box_length)

        def spread_and_gather():
            tables = fgg_precompute(system, params)
            spread_se(system, params, tables, threads)
            gather_se(grid, system, params, tables, threads)

        samples["spga"].append([float(n * P ** 3), measure(spread_and_gather, repeats,
                                                            f"spread/gather N={n} P={P}")])
        print(f"⏱️ Spread/gather N={n} P={P}")

    constants = {name: fit_constant(*zip(*points)) for name, points in samples.items()}
    model = RuntimeModel(
        c_ns=constants["ns"], c_force=constants["force"], c_fft=constants["fft"],
        c_solve=constants["solve"], c_spga=constants["spga"], calibrated=True,
    )

    holdout = _calibration_system(HOLDOUT["N"], seed + 1)
    xi = 10.0 / holdout.box_length

    def fourier_time() -> float:
        timings = se_kspace(holdout, HOLDOUT["M"], HOLDOUT["P"], xi, threads).timings
        return sum(timings.values())

    fourier_time()
    measured = statistics.median(fourier_time() for _ in range(repeats))
    _, predicted = predict_runtime(model, HOLDOUT["N"], 0.0, HOLDOUT["M"], HOLDOUT["P"])

    report = CalibrationReport(model=model, samples=samples,
                               holdout_predicted=predicted, holdout_measured=measured)
    if not HOLDOUT_BAND[0] <= report.holdout_ratio <= HOLDOUT_BAND[1]:
        logger.warning("Held-out Fourier time off by %.2fx (predicted %.3gs, measured %.3gs)",
                       report.holdout_ratio, predicted, measured)
    return report


def verify_tuned(
    system: ParticleSystem,
    tuned: TunedParams,
    rel_tol: float,
    kind: str = "force",
    threads: int = 1,
    n_targets: int = 200,
    seed: int = 0,
    ref_tol: float = DEFAULT_REFERENCE_TOL,
) -> VerificationReport:
    """
    Run the tuned configuration and compare it with the oracle at up to n_targets particles.

    Passes when the measured relative rms error of `kind` is at most 1.5 * rel_tol.
    """
    result = evaluate(system, tuned.method, tuned.split, M=tuned.M, P=tuned.P, p=tuned.p,
                      threads=threads)
    rng = np.random.default_rng(seed)
    targets = np.sort(rng.choice(system.n, size=min(n_targets, system.n), replace=False))
    reference = converged_reference(system, ref_tol, targets=targets, threads=threads)
    report = rms_error(result.subset(targets, system.charges), reference)

    measured = report.rel_rms_potential if kind == "potential" else report.rel_rms_force
    passed = measured <= VERIFY_MARGIN * rel_tol
    logger.info("Verification at %d targets: relative %s error %.3g (tolerance %.3g)",
                len(targets), kind, measured, rel_tol)
    return VerificationReport(passed=passed, rel_tol=rel_tol, measured=report, n_targets=len(targets))
