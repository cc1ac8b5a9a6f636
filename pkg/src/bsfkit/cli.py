"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 I/O or transport failure,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from typing import List, Optional

from . import calibration, formats
from .cost_model import (
    PRESETS,
    CostModelError,
    MachineConstants,
    Variant,
    optimal_workers,
    predict_curve,
    preset,
)
from .jacobi import DivergenceError, SolveConfig, ZeroDiagonalError, gen_dd_system, gen_paper_system, solve
from .runtime import FarmConfig, FarmError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

log = logging.getLogger("bsfkit")


class UsageError(Exception):
    pass


def _int_list(text: str) -> List[int]:
    try:
        values = [int(tok) for tok in text.replace(" ", "").split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("worker counts must be positive")
    return values


def _add_constants(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("machine constants (one source required)")
    g.add_argument("--preset", choices=sorted(PRESETS), help="named constant set")
    g.add_argument("--calibration", metavar="FILE", help="file written by 'calibrate' (default: $BSF_CALIBRATION)")
    g.add_argument("--L", dest="latency", type=float, help="1-byte message latency, seconds")
    g.add_argument("--tau-op", type=float, help="seconds per arithmetic operation")
    g.add_argument("--tau-tr", type=float, help="seconds per transferred double")


def resolve_constants(args) -> MachineConstants:
    explicit = (args.latency, args.tau_op, args.tau_tr)
    if any(v is not None for v in explicit):
        if any(v is None for v in explicit):
            raise UsageError("explicit constants need all three of --L, --tau-op and --tau-tr")
        return MachineConstants(L=args.latency, tau_op=args.tau_op, tau_tr=args.tau_tr)
    if args.preset:
        return preset(args.preset)
    path = args.calibration or os.environ.get("BSF_CALIBRATION")
    if path:
        return formats.read_calibration(path).constants
    raise UsageError(
        "machine constants L, tau_op and tau_tr are required: "
        "pass --preset, --calibration FILE, or --L/--tau-op/--tau-tr"
    )


def cmd_predict(args) -> int:
    mc = resolve_constants(args)
    curve = predict_curve(args.variant, args.n, args.kmax, mc)
    best = optimal_workers(curve)
    summary = (
        f"{curve.variant.value} n={curve.n}: scalability bound {curve.scalability_bound:.4f}, "
        f"optimal workers {best} (speedup {curve.speedup_at(best):.4f})"
    )
    if args.output:
        formats.write_curve(args.output, curve, mc)
        print(summary)
    else:
        sys.stdout.write(formats.dumps_curve(curve, mc))
        print(summary, file=sys.stderr)
    return EXIT_OK


def _run_config(args) -> formats.RunConfig:
    doc = {}
    if args.config:
        base = formats.read_run_config(args.config)
        doc = {f.name: getattr(base, f.name) for f in fields(base)}
    for key in ("problem", "matrix", "n", "seed", "variant", "eps", "max_iters",
                "workers", "backend", "timeout", "output"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    return formats.RunConfig.from_dict(doc)


def cmd_solve(args) -> int:
    rc = _run_config(args)
    system = rc.load_system()
    cfg = SolveConfig(eps=rc.eps, max_iters=rc.max_iters, workers=rc.workers, variant=rc.variant)
    farm = FarmConfig(workers=rc.workers, backend=rc.backend, timeout=rc.timeout)
    try:
        result = solve(system, cfg, farm)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    extra = {"problem": rc.problem, "backend": rc.backend if cfg.variant != "sequential" else "none",
             "workers": rc.workers, "eps": rc.eps, "max_iters": rc.max_iters}
    if rc.output:
        formats.write_solve_report(rc.output, result, cfg.variant, extra)
    print(
        f"{cfg.variant} n={system.n} K={rc.workers}: "
        f"{'converged' if result.converged else 'not converged'} after {result.iterations} "
        f"iterations, residual {result.residual_norm:.3e}"
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.preset:
        cal = calibration.Calibration(constants=preset(args.preset), metadata={"preset": args.preset})
    else:
        cal = calibration.calibrate(
            latency_rounds=args.latency_rounds, op_count=args.op_count, tr_count=args.transfer_doubles
        )
    formats.write_calibration(args.output, cal)
    c = cal.constants
    print(f"L={c.L:.4g} s  tau_op={c.tau_op:.4g} s  tau_tr={c.tau_tr:.4g} s -> {args.output}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    records = calibration.sweep(args.variant, args.n, args.workers, args.iters, args.backend, args.repeats)
    formats.write_observations(args.output, records)
    for r in records:
        print(f"K={r.K}: {r.mean_iter_time:.6g} s/iter, speedup {r.speedup_obs:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.observations:
        records = formats.read_observations(args.observations)
    else:
        if args.variant is None or args.n is None or args.workers is None:
            raise UsageError("compare needs --variant, --n and --workers unless --observations is given")
        records = calibration.sweep(args.variant, args.n, args.workers, args.iters, args.backend, args.repeats)
    first = records[0] if records else None
    if first is None:
        raise UsageError("no observations")
    if args.variant is not None and Variant.parse(args.variant) is not first.variant:
        raise UsageError(f"--variant {args.variant} does not match observations ({first.variant.value})")
    if args.curve:
        curve = formats.read_curve(args.curve)
    else:
        mc = resolve_constants(args)
        curve = predict_curve(first.variant, first.n, max(r.K for r in records), mc)
    report = calibration.compare(curve, records)
    if args.output:
        formats.write_comparison(args.output, report)
    else:
        sys.stdout.write(formats.dumps_comparison(report))
    print(
        f"max deviation {report.max_deviation:.4f}; predicted optimum {report.predicted_optimum} "
        f"(in measured range: {report.predicted_optimum_in_range}), observed optimum {report.observed_optimum}",
        file=sys.stderr if not args.output else sys.stdout,
    )
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.kind == "paper-system":
        system = gen_paper_system(args.n)
    else:
        system = gen_dd_system(args.n, args.seed)
    if args.output:
        formats.write_matrix(args.output, system)
    else:
        sys.stdout.write(formats.dumps_matrix(system))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsfkit", description="BSF scalability prediction and Jacobi farm runs")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="predicted speedup/efficiency curve")
    p.add_argument("--variant", required=True, choices=["m", "mr"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--output", metavar="FILE", help="curve CSV (default: stdout)")
    _add_constants(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("solve", help="solve a linear system with a Jacobi variant")
    p.add_argument("--config", metavar="FILE", help="JSON run config; flags override it")
    p.add_argument("--problem", choices=formats.PROBLEM_KINDS)
    p.add_argument("--matrix", metavar="FILE")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=["sequential", "m", "mr", "jacobi-m", "jacobi-mr"])
    p.add_argument("--eps", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--backend", choices=["sequential", "in-process", "multi-process"])
    p.add_argument("--timeout", type=float)
    p.add_argument("--output", metavar="FILE", help="JSON result report")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("calibrate", help="measure L, tau_op and tau_tr on this host")
    p.add_argument("--output", required=True, metavar="FILE")
    p.add_argument("--preset", choices=sorted(PRESETS), help="store a preset instead of measuring")
    p.add_argument("--latency-rounds", type=int, default=1000)
    p.add_argument("--op-count", type=int, default=100_000_000)
    p.add_argument("--transfer-doubles", type=int, default=1_000_000)
    p.set_defaults(func=cmd_calibrate)

    def sweep_args(p, required: bool) -> None:
        p.add_argument("--variant", required=required, choices=["m", "mr"])
        p.add_argument("--n", type=int, required=required)
        p.add_argument("--workers", type=_int_list, required=required, metavar="K1,K2,...")
        p.add_argument("--iters", type=int, default=50)
        p.add_argument("--backend", default="in-process", choices=["sequential", "in-process", "multi-process"])
        p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("sweep", help="measure speedup over a list of worker counts")
    sweep_args(p, required=True)
    p.add_argument("--output", required=True, metavar="FILE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="join predicted and measured speedup")
    sweep_args(p, required=False)
    p.add_argument("--observations", metavar="FILE", help="use a sweep file instead of measuring")
    p.add_argument("--curve", metavar="FILE", help="use a curve file instead of predicting")
    p.add_argument("--output", metavar="FILE")
    _add_constants(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="write a test system")
    p.add_argument("kind", choices=["paper-system", "random-dd"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", metavar="FILE")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, CostModelError, formats.FormatError, calibration.ComparisonError,
            ZeroDiagonalError, ValueError) as exc:
        print(f"bsfkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, calibration.CalibrationError, FarmError) as exc:
        print(f"bsfkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
