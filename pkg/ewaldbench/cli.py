"""
Command-Line Module (The Harness)
---------------------------------
Entry point `python -m ewaldbench.cli` with subcommands:
1. gen: write a generated test system to a particle file.
2. compute: evaluate one configuration, optionally against the converged oracle.
3. sweep: vary one parameter and write a CSV of errors, estimates and stage timings.
4. calibrate: fit the runtime model on this machine and write a profile.
5. tune: pick the fastest parameters for a tolerance, optionally verifying them.

Exit codes: 0 success, 1 failed check, 2 usage or input error, 3 numerical error.

Sweep CSV columns:
    axis, value, method, xi, r_c, k_inf, M, P, p, abs_rms_potential, abs_rms_force,
    abs_rms_energy, rel_rms_potential, rel_rms_force, est_real_potential,
    est_fourier_potential, est_real_force, est_fourier_force, est_se_potential,
    est_se_force, t_real, t_spread, t_fft, t_solve, t_ifft, t_gather, t_total
    (times in seconds).
"""

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from ewaldbench.benchmark import AXES, HOLDOUT_BAND, calibrate, sweep_rows, verify_tuned
from ewaldbench.config import ELECTROSTATIC_FACTOR, SPME_ORDERS, Settings, load_settings
from ewaldbench.core import SYSTEM_KINDS, generate_system, rms_error
from ewaldbench.estimates import KINDS
from ewaldbench.exceptions import EwaldError, SystemFileError, UsageError
from ewaldbench.models import EwaldSplit, ParticleSystem
from ewaldbench.oracle import converged_reference
from ewaldbench.persistence import load_profile, read_system, write_field_csv, write_profile, write_system
from ewaldbench.pipeline import METHODS, evaluate
from ewaldbench.tuning import TUNED_METHODS, tune

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _parse_gen(spec: str) -> ParticleSystem:
    """Build a system from 'kind,N,L,seed'."""
    parts = spec.split(",")
    if len(parts) != 4:
        raise UsageError(f"--gen expects kind,N,L,seed, got {spec!r}")
    kind, n, L, seed = parts
    try:
        return generate_system(kind.strip(), int(n), float(L), int(seed))
    except ValueError as e:
        raise UsageError(f"--gen {spec!r}: {e}") from e


def _load_system(args) -> ParticleSystem:
    if bool(args.input) == bool(args.gen):
        raise UsageError("Give exactly one of --in <file> or --gen kind,N,L,seed")
    if args.input:
        return read_system(args.input)
    return _parse_gen(args.gen)


def _add_system_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--in", dest="input", help="Particle file ('N L' header, then 'x y z q' lines)")
    parser.add_argument("--gen", help="Generate a system: kind,N,L,seed (kinds: " + ", ".join(SYSTEM_KINDS) + ")")


def _add_mesh_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--xi", type=float, help="Ewald parameter")
    parser.add_argument("--rc", type=float, help="Real-space cutoff")
    parser.add_argument("--grid", type=int, help="Grid size M (even)")
    parser.add_argument("--support", type=int, help="SE Gaussian support P (even)")
    parser.add_argument("--order", type=int, help="SPME B-spline order p")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ewaldbench",
        description="Periodic Coulomb sums: direct Ewald, Spectral Ewald and SPME with error "
                    "estimates, a runtime model and a parameter tuner.",
        epilog="Sweep CSV columns:" + __doc__.split("Sweep CSV columns:")[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", help="key=value settings file")
    parser.add_argument("--threads", type=int, help="Worker threads (default: all cores)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Write a generated test system")
    gen.add_argument("--kind", choices=SYSTEM_KINDS, default="uniform")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--box", type=float, required=True)
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=cmd_gen)

    compute = sub.add_parser("compute", help="Evaluate one configuration")
    _add_system_flags(compute)
    compute.add_argument("--method", choices=METHODS, default="se")
    _add_mesh_flags(compute)
    compute.add_argument("--kinf", type=int, help="Fourier cutoff for --method direct")
    compute.add_argument("--ref-tol", type=float, help="Compare with the oracle converged to this tolerance")
    compute.add_argument("--out", help="Per-particle CSV (index, potential, fx, fy, fz)")
    compute.add_argument("--remove-drift", action="store_true", help="Subtract the mean force")
    compute.add_argument("--scale", action="store_true", help="Multiply outputs by the kJ/mol conversion factor")
    compute.set_defaults(handler=cmd_compute)

    sweep = sub.add_parser("sweep", help="Sweep one parameter and write a CSV")
    _add_system_flags(sweep)
    sweep.add_argument("--method", choices=METHODS, default="se")
    sweep.add_argument("--axis", choices=AXES, required=True)
    sweep.add_argument("--values", required=True, help="Comma-separated sweep values")
    _add_mesh_flags(sweep)
    sweep.add_argument("--profile", help="Runtime profile name or file (needed for --axis tol)")
    sweep.add_argument("--ref-tol", type=float, help="Tolerance of the converged reference")
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(handler=cmd_sweep)

    calibrate_cmd = sub.add_parser("calibrate", help="Fit the runtime model on this machine")
    calibrate_cmd.add_argument("--out", required=True, help="Profile file to write")
    calibrate_cmd.add_argument("--repeats", type=int, default=5)
    calibrate_cmd.add_argument("--strict", action="store_true",
                               help="Fail when the held-out prediction is off by more than 2x")
    calibrate_cmd.set_defaults(handler=cmd_calibrate)

    tune_cmd = sub.add_parser("tune", help="Pick the fastest parameters for a tolerance")
    _add_system_flags(tune_cmd)
    tune_cmd.add_argument("--profile", default="desktop", help="Runtime profile name or file")
    tune_cmd.add_argument("--tol", type=float, required=True, help="Relative rms tolerance")
    tune_cmd.add_argument("--method", choices=TUNED_METHODS, default="se")
    tune_cmd.add_argument("--kind", choices=KINDS, default="force")
    tune_cmd.add_argument("--reference-rms", type=float, help="Rms magnitude the tolerance is relative to")
    tune_cmd.add_argument("--verify", action="store_true", help="Check the result against the oracle")
    tune_cmd.set_defaults(handler=cmd_tune)
    return parser


def _mesh_arguments(args):
    """Validate the mesh flags for a method; returns (M, P, p)."""
    if args.method == "se":
        if args.order is not None:
            raise UsageError("--order applies to --method spme only")
        if args.grid is None or args.support is None:
            raise UsageError("--method se needs --grid and --support")
    elif args.method == "spme":
        if args.support is not None:
            raise UsageError("--support applies to --method se only")
        if args.grid is None or args.order is None:
            raise UsageError("--method spme needs --grid and --order")
        if args.order not in SPME_ORDERS:
            logger.warning("B-spline order %d is outside the tuned set %s", args.order, SPME_ORDERS)
    elif args.support is not None or args.order is not None:
        raise UsageError("--support and --order do not apply to --method direct")
    return args.grid, args.support, args.order


def cmd_gen(args, settings: Settings) -> int:
    system = generate_system(args.kind, args.n, args.box, args.seed)
    write_system(system, args.out)
    print(f"✅ Wrote {args.kind} system (N={system.n}, L={system.box_length:g}) to {args.out}")
    return EXIT_OK


def cmd_compute(args, settings: Settings) -> int:
    system = _load_system(args)
    M, P, p = _mesh_arguments(args)
    if args.xi is None or args.rc is None:
        raise UsageError("compute needs --xi and --rc")
    if args.method == "direct" and args.kinf is None and M is None:
        raise UsageError("--method direct needs --kinf (or --grid, giving k_inf = M/2)")
    k_inf = args.kinf if args.kinf is not None else M // 2
    split = EwaldSplit(xi=args.xi, r_c=args.rc, k_inf=k_inf)

    print(f"🧮 Computing {args.method} (N={system.n}, xi={split.xi:g}, r_c={split.r_c:g})...")
    result = evaluate(system, args.method, split, M=M, P=P, p=p,
                      threads=settings.threads, shape_constant=settings.shape_constant)
    if args.remove_drift:
        result = result.without_drift()

    report = None
    if args.ref_tol is not None:
        reference = converged_reference(system, args.ref_tol, threads=settings.threads)
        report = rms_error(result, reference)

    if args.scale or settings.scale_output:
        result = result.scaled(ELECTROSTATIC_FACTOR)
    if args.out:
        write_field_csv(result, args.out, report)

    print(f"✅ energy={result.energy:.12g} total time={sum(result.timings.values()):.3g}s")
    if report is not None:
        print("📊 " + ", ".join(f"{key}={value:.3e}" for key, value in report.model_dump().items()))
    return EXIT_OK


def cmd_sweep(args, settings: Settings) -> int:
    system = _load_system(args)
    if args.support is not None and args.method != "se":
        raise UsageError("--support applies to --method se only")
    if args.order is not None and args.method != "spme":
        raise UsageError("--order applies to --method spme only")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"--values must be comma-separated numbers: {e}") from e
    model = load_profile(args.profile) if args.profile else None

    table = sweep_rows(
        system, args.method, args.axis, values,
        xi=args.xi, r_c=args.rc, M=args.grid, P=args.support, p=args.order, model=model,
        ref_tol=args.ref_tol if args.ref_tol is not None else settings.reference_tol,
        threads=settings.threads, shape_constant=settings.shape_constant,
    )
    table.to_csv(args.out, index=False, float_format="%.10g")
    print(f"✅ Wrote {len(table)} sweep rows to {args.out}")
    return EXIT_OK


def cmd_calibrate(args, settings: Settings) -> int:
    # single-threaded: the constants describe one core
    print(f"⏱️ Calibrating runtime model ({args.repeats} repeats per kernel)...")
    report = calibrate(threads=1, repeats=args.repeats)
    write_profile(report.model, args.out)
    print(f"✅ Wrote profile to {args.out}")
    for name, value in report.model.model_dump().items():
        if name != "calibrated":
            print(f"   {name}={value:.3e}")
    print(f"📊 Held-out Fourier time: predicted {report.holdout_predicted:.3g}s, "
          f"measured {report.holdout_measured:.3g}s (ratio {report.holdout_ratio:.2f})")
    if args.strict and not HOLDOUT_BAND[0] <= report.holdout_ratio <= HOLDOUT_BAND[1]:
        print("❌ Held-out prediction outside the 2x band")
        return EXIT_FAILED_CHECK
    return EXIT_OK


def cmd_tune(args, settings: Settings) -> int:
    system = _load_system(args)
    model = load_profile(args.profile)
    print(f"🔧 Tuning {args.method} for relative {args.kind} tolerance {args.tol:g} (N={system.n})...")
    tuned = tune(
        system, args.tol, model, method=args.method, reference_rms=args.reference_rms,
        kind=args.kind, threads=settings.threads, xi_points=settings.xi_grid_points,
        max_grid=settings.max_grid, shape_constant=settings.shape_constant,
    )
    mesh = f"P={tuned.P}" if tuned.method == "se" else f"p={tuned.p}"
    print(f"✅ xi={tuned.split.xi:.4f} r_c={tuned.split.r_c:.4f} M={tuned.M} {mesh}")
    print(f"   predicted t_real={tuned.predicted_real_time:.4g}s "
          f"t_fourier={tuned.predicted_fourier_time:.4g}s total={tuned.predicted_total_time:.4g}s")

    if not args.verify:
        return EXIT_OK
    verification = verify_tuned(system, tuned, args.tol, kind=args.kind,
                                threads=settings.threads, ref_tol=settings.reference_tol)
    measured = verification.measured
    print(f"📊 Verified at {verification.n_targets} targets: rel force {measured.rel_rms_force:.3e}, "
          f"rel potential {measured.rel_rms_potential:.3e}")
    if not verification.passed:
        print(f"❌ Tolerance {args.tol:g} not met")
        return EXIT_FAILED_CHECK
    print("✅ Tolerance met")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = load_settings(args.config, overrides={"threads": args.threads, "log_level": args.log_level})
    except (SystemFileError, ValidationError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.handler(args, settings)
    except (UsageError, SystemFileError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except EwaldError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
