"""Command line interface: ``bdlab speed|simulate|fb-solve|wave|validate``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .fbsolver import boundary_speed, solve_fb
from .harness import validate
from .kernels import parse_kernel
from .output import write_csv, write_manifest
from .particles import InitialCondition, empirical_tail, simulate
from .speed import compute_lambda_star, parse_speed, rate_function
from .wave import (critical_report, critical_wave, nonexistence_demo, spitzer_iterate,
                   tail_report)


def _times(text: str) -> list[float]:
    """``0,1,2`` or ``start:stop:step`` (stop included)."""
    text = text.strip().rstrip(",. ")
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        return list(np.round(np.arange(a, b + 0.5 * s, s), 12))
    return [float(v) for v in text.split(",") if v.strip() and v.strip() != "..."]


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "kernel", None):
        cfg.kernel = args.kernel
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_speed(args) -> int:
    kernel = parse_kernel(args.kernel)
    rep = compute_lambda_star(kernel, tol=args.tol)
    lo, hi, n = args.x_min, args.x_max or 2 * rep.a, args.points
    xs = np.linspace(lo, hi, n)
    lam = rate_function(kernel, xs)
    out = sys.stdout
    out.write(f"# kernel: {kernel.spec}\n# lambda_star: {rep.lambda_star!r}\n# a: {rep.a!r}\n")
    out.write(f"# lambda_golden: {rep.lambda_golden!r}\n# bracket: {rep.bracket}\n")
    out.write("x,Lambda\n")
    for x, v in zip(xs, lam):
        out.write(f"{float(x)!r},{float(v)!r}\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    kernel = parse_kernel(cfg.kernel)
    init = InitialCondition.parse(args.init)
    times = _times(args.observe_at) if args.observe_at else [0.0, args.T]
    res = simulate(args.N, kernel, args.T, mode=args.mode, init=init, seed=cfg.seed, observe_at=times)
    snaps = res.snapshots
    header = {"kernel": kernel.spec, "N": args.N, "T": args.T, "mode": args.mode,
              "init": init.spec, "seed": cfg.seed}
    write_csv(args.out, {"time": [s.time for s in snaps], "min": [s.min for s in snaps],
                         "max": [s.max for s in snaps],
                         "mean": [float(np.mean(s.positions)) for s in snaps],
                         "size": [s.positions.size for s in snaps]}, header)
    if args.tail_out:
        rows_t, rows_x, rows_f = [], [], []
        for s in snaps:
            xs = np.linspace(s.min, s.max, args.tail_points)
            rows_t += [s.time] * xs.size
            rows_x += list(xs)
            rows_f += list(empirical_tail(s, xs))
        write_csv(args.tail_out, {"time": rows_t, "x": rows_x, "F_N": rows_f}, header)
    write_manifest(Path(args.out), sys.argv, cfg.to_dict() | {"run": vars_clean(args)}, cfg.seed,
                   {"events": res.events})
    return 0


def cmd_fb(args) -> int:
    kernel = parse_kernel(args.kernel)
    init = InitialCondition.parse(args.init)
    x_max = args.x_max or (40.0 / init.param if init.kind == "exponential" else init.param)
    f0 = init.density_grid(args.dx, x_max)
    sol = solve_fb(f0, kernel, args.T, args.k, substeps=args.substeps, store_every=args.store_every)
    t, x, f = [], [], []
    for m, g in zip(sol.stored_index, sol.densities):
        t += [sol.times[m]] * len(g)
        x += list(g.x)
        f += list(g.values)
    header = {"kernel": kernel.spec, "init": init.spec, "T": args.T, "k": args.k, "dx": args.dx,
              "substeps": args.substeps}
    write_csv(args.out, {"t": t, "x": x, "f": f}, header)
    bpath = Path(args.boundary_out) if args.boundary_out else Path(args.out).with_name(
        Path(args.out).stem + "_gamma.csv")
    write_csv(bpath, {"t": sol.times, "gamma": sol.boundary_values}, header)
    summary = {"final_boundary": float(sol.boundary_values[-1])}
    if sol.times[-1] > 0:
        summary["boundary_speed"] = boundary_speed(sol)
    write_manifest(Path(args.out), sys.argv, {"run": vars_clean(args)}, None, summary)
    return 0


def cmd_wave(args) -> int:
    kernel = parse_kernel(args.kernel)
    sr = compute_lambda_star(kernel)
    if args.nonexistence:
        c = parse_speed(args.c or "0.5a", sr.a)
        rep = nonexistence_demo(kernel, c, T=args.T, k=args.k, dx=args.fb_dx, report=sr)
        summary = {"c": c, "a": sr.a, "T": rep.T, "final_ratio": rep.final_ratio,
                   "crossing_time": rep.crossing_time, "exceeds": rep.exceeds}
        if args.out:
            write_csv(args.out, {"t": rep.times, "gamma_over_t": rep.ratios},
                      {"kernel": kernel.spec} | summary)
            write_manifest(Path(args.out), sys.argv, {"run": vars_clean(args)}, None, summary)
        print(json.dumps(summary, indent=2))
        return 0 if rep.exceeds else 1
    if args.critical:
        wv = critical_wave(kernel, tol=args.tol, report=sr)
        cr = critical_report(wv)
        summary = {"c": wv.c, "lambda": wv.lam, "iterations": wv.iterations, "residual": wv.residual,
                   "integral_r2": cr.integral_r2, "integral_slope": cr.integral_slope,
                   "tilted_r2": cr.tilted_r2, "scaled_tail_ratio": cr.scaled_tail_ratio}
    else:
        c = parse_speed(args.c or "1.5a", sr.a)
        wv = spitzer_iterate(kernel, c, tol=args.tol, report=sr)
        tr = tail_report(wv)
        summary = {"c": wv.c, "lambda": wv.lam, "iterations": wv.iterations, "residual": wv.residual,
                   "tail_slope": tr.slope, "tail_slope_error": tr.slope_error}
    if args.out:
        write_csv(args.out, {"x": wv.x, "w": wv.w.values, "u": wv.tilted, "W": wv.tail_mass()},
                  {"kernel": kernel.spec} | summary)
        write_manifest(Path(args.out), sys.argv, {"run": vars_clean(args)}, None, summary)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    if args.suite == "acceptance":
        from .acceptance import validate_acceptance
        reports = [validate_acceptance(cfg)]
    else:
        reports = validate(args.suite, cfg)
    ok = True
    for rep in reports:
        print(rep.to_text())
        ok &= rep.ok
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps([r.summary() for r in reports], indent=2, default=str) + "\n")
        write_manifest(path, sys.argv, cfg.to_dict(), cfg.seed, {"ok": ok})
    return 0 if ok else 1


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bdlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("speed", help="critical rate, front speed and rate-function table")
    p.add_argument("--kernel", default="uniform(1.0)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--x-min", type=float, default=0.05)
    p.add_argument("--x-max", type=float, default=None)
    p.add_argument("--points", type=int, default=40)
    p.set_defaults(func=cmd_speed)

    p = sub.add_parser("simulate", help="particle simulation")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--kernel", default=None)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--mode", choices=["selection", "free"], default="selection")
    p.add_argument("--init", default="exp(1.0)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--observe-at", default=None, help="comma list or start:stop:step")
    p.add_argument("--out", required=True)
    p.add_argument("--tail-out", default=None)
    p.add_argument("--tail-points", type=int, default=200)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fb-solve", help="dyadic free boundary solver")
    p.add_argument("--kernel", default="uniform(1.0)")
    p.add_argument("--init", default="exp(1.0)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--dx", type=float, default=0.005)
    p.add_argument("--x-max", type=float, default=None)
    p.add_argument("--substeps", type=int, default=8)
    p.add_argument("--store-every", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--boundary-out", default=None)
    p.set_defaults(func=cmd_fb)

    p = sub.add_parser("wave", help="traveling waves")
    p.add_argument("--kernel", default="uniform(1.0)")
    p.add_argument("--c", default=None, help="speed, e.g. 1.5a or 1.2")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--critical", action="store_true")
    p.add_argument("--nonexistence", action="store_true")
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--fb-dx", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_wave)

    p = sub.add_parser("validate", help="cross-validation suites")
    p.add_argument("suite", choices=["hydro", "speed", "wave", "all", "acceptance"])
    p.add_argument("--config", default=None)
    p.add_argument("--kernel", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
