"""Command line entry point: compute-sets, calibrate, run, sweep, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import BenchmarkSpec, parse_floats, parse_seeds
from .conformal import CalibrationSet
from .exceptions import (ConfigError, DadMpcError, EmptyRci, FeasibilityFault, NoConvergence,
                         SolverFailure)
from .invariance import SetLadder
from .simulation import VARIANTS, SimulationContext, calibrate, compute_sets, run_closed_loop, sweep

log = logging.getLogger("dadmpc")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_SOLVER = 0, 2, 3, 4


def _spec(args) -> BenchmarkSpec:
    if getattr(args, "paper", False) or not getattr(args, "config", None):
        if getattr(args, "config", None):
            raise ConfigError("--paper and --config are mutually exclusive")
        return BenchmarkSpec.paper()
    return BenchmarkSpec.load(args.config)


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from None


def _context(args, spec) -> SimulationContext:
    ladder = cal = None
    if getattr(args, "sets", None):
        try:
            ladder = SetLadder.from_dict(_read_json(args.sets, "sets"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed sets file: {exc}") from None
    if getattr(args, "cal", None):
        try:
            cal = CalibrationSet.from_dict(_read_json(args.cal, "calibration"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"malformed calibration file: {exc}") from None
    return SimulationContext(spec, ladder=ladder, cal=cal)


def cmd_compute_sets(args):
    spec = _spec(args)
    ladder = compute_sets(spec)
    Path(args.out).write_text(json.dumps(ladder.to_dict(), indent=1))
    log.info("wrote %s (n_s=%d, RCI iterations=%d)", args.out, ladder.n_s, ladder.rci_iterations)
    return EXIT_OK


def cmd_calibrate(args):
    spec = _spec(args)
    seed = spec.calibration_seed if args.seed is None else args.seed
    if seed in spec.seeds:
        log.warning("calibration seed %d is also an evaluation seed", seed)
    cal = calibrate(spec, seed)
    Path(args.out).write_text(json.dumps(cal.to_dict()))
    log.info("wrote %s (n_cal=%d)", args.out, cal.n_cal)
    return EXIT_OK


def cmd_run(args):
    spec = _spec(args)
    ctx = _context(args, spec)
    alpha = spec.alpha if args.alpha is None else args.alpha
    if not 0 <= alpha < 1:
        raise ConfigError("--alpha must lie in [0, 1)")
    m = run_closed_loop(ctx, args.variant, args.seed, alpha, eta=args.eta, T=args.steps,
                        record_timing=args.timing)
    if args.trace:
        Path(args.trace).write_text(m.trace_csv)
    else:
        sys.stdout.write(m.trace_csv)
    J_lqr = run_closed_loop(ctx, "lqr", args.seed, alpha, eta=args.eta, T=args.steps).J
    m.J_lqr = J_lqr
    s = m.summary()
    log.info("%s alpha=%g seed=%d: V_T=%.4f max_V=%.4f J=%.3f J/J_LQR=%.4f", args.variant,
             alpha, args.seed, s["V_T"], s["max_V"], s["J"], s["J_over_J_lqr"])
    return EXIT_OK


def cmd_sweep(args):
    from .report import build_report, table_markdown, write_report

    spec = _spec(args)
    ctx = _context(args, spec)
    alphas = parse_floats(args.alphas)
    if any(not 0 <= a < 1 for a in alphas):
        raise ConfigError("alphas must lie in [0, 1)")
    seeds = parse_seeds(args.seeds) if args.seeds else spec.seeds
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variant(s): {', '.join(bad)}")

    def progress(key, fault):
        log.info("%-8s alpha=%-4g seed=%-3d %s", *key, fault or "ok")

    res = sweep(ctx, variants, alphas, seeds, eta=args.eta, T=args.steps, progress=progress)
    rep = build_report(res, spec, alphas, seeds, eta=args.eta)
    write_report(rep, args.out)
    sys.stdout.write(table_markdown(rep))
    if res.faults:
        log.error("%d run(s) faulted", len(res.faults))
        return EXIT_FAULT
    return EXIT_OK


def cmd_report(args):
    from .report import load_report, table_csv, table_markdown, write_series

    try:
        rep = load_report(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    sys.stdout.write(table_markdown(rep) if args.format == "md" else table_csv(rep))
    out_dir = Path(args.out_dir) if args.out_dir else Path(args.input).parent
    paths = write_series(rep, out_dir)
    if args.figures:
        from .plotting import render_figures
        try:
            paths += render_figures(rep, out_dir, alpha=args.figure_alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def _add_config(p):
    p.add_argument("--config", help="JSON config file (keys override the benchmark defaults)")
    p.add_argument("--paper", action="store_true", help="use the benchmark defaults verbatim")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors")
    ap = argparse.ArgumentParser(prog="dadmpc", description="Disturbance-adaptive MPC benchmark")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute-sets", parents=[common], help="build X_r and the invariant-set ladder")
    _add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compute_sets)

    p = sub.add_parser("calibrate", parents=[common], help="LQR calibration trace and residuals")
    _add_config(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", parents=[common], help="one closed-loop run")
    _add_config(p)
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eta", type=float, help="override the eta rule")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--steps", type=int, help="override run.T")
    p.add_argument("--sets")
    p.add_argument("--cal")
    p.add_argument("--trace", help="CSV output (stdout if omitted)")
    p.add_argument("--timing", action="store_true", help="fill the solve_ms column")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="variants x alphas x seeds")
    _add_config(p)
    p.add_argument("--alphas", default="0,0.1,0.2,0.3,0.4")
    p.add_argument("--seeds", help="e.g. 1..10 (defaults to run.seeds)")
    p.add_argument("--variants", help="comma list, default all")
    p.add_argument("--eta", type=float, help="override the eta rule")
    p.add_argument("--steps", type=int, help="override run.T")
    p.add_argument("--sets")
    p.add_argument("--cal")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", parents=[common], help="render a sweep report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.add_argument("--out-dir", help="where series files and figures go")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.add_argument("--figure-alpha", type=float)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except FeasibilityFault as exc:
        log.error("feasibility fault: %s %s", exc, json.dumps(exc.diagnostics or {}))
        return EXIT_FAULT
    except (SolverFailure, NoConvergence, EmptyRci) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except DadMpcError as exc:
        log.error("%s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
