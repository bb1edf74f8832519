"""The acceptance suite: one named check per criterion, each with a time budget.

Every criterion function returns ``(observed, expected, passed, details)``;
:func:`run_criterion` times it and folds the time budget into the verdict.
"""

from __future__ import annotations

import functools
import math
import time

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .fbsolver import evolve_free, solve_fb
from .grid import exponential_density
from .harness import Check, ValidationReport, validate_hydrodynamic, validate_speed_limit
from .kernels import Gaussian, Laplace, Uniform
from .particles import InitialCondition, stationary_gap_sample
from .replicas import replica_rng
from .speed import compute_lambda_star, rate_function
from .wave import (build_tilted_kernel, critical_report, critical_wave, ladder_chain_mc,
                   nonexistence_demo, run_wave_in_fb, spitzer_iterate, tail_report)

CLOSED = (Uniform(1.0), Gaussian(1.0), Laplace(1.0))
WAVE_TOL = 1e-9


@functools.lru_cache(maxsize=None)
def _wave(kernel, multiple: float, tol: float = WAVE_TOL, start_rate: float = 1.0):
    sr = compute_lambda_star(kernel)
    return spitzer_iterate(kernel, multiple * sr.a, tol=tol, report=sr, start_rate=start_rate)


def mass_identity(config):
    kernel = Uniform(1.0)
    f0 = exponential_density(1.0, 0.005, 40.0)
    # midpoint steps of at most 1/32; the mass error per unit time is about h^2/6
    errs = {t: abs(evolve_free(f0, kernel, t, substeps=max(8, math.ceil(32 * t))).cell_mass()
                   / math.exp(t) - 1)
            for t in (0.25, 0.5, 1.0)}
    worst = max(errs.values())
    return worst, "relative mass error < 1e-3 at t = 0.25, 0.5, 1", worst < 1e-3, {
        f"t={t}": e for t, e in errs.items()}


def tilted_normalization(config):
    errs = {}
    for k in CLOSED:
        ls = compute_lambda_star(k).lambda_star
        for lam in (ls / 2, ls):
            errs[f"{k.spec} lam={lam:.6g}"] = abs(build_tilted_kernel(k, lam).normalization - 1)
    worst = max(errs.values())
    return worst, "|integral of k - 1| < 1e-6", worst < 1e-6, errs


def drift_signs(config):
    means = {}
    ok = True
    worst = 0.0
    for k in CLOSED:
        ls = compute_lambda_star(k).lambda_star
        half = build_tilted_kernel(k, ls / 2).mean
        crit = build_tilted_kernel(k, ls).mean
        means[f"{k.spec} half"] = half
        means[f"{k.spec} critical"] = crit
        ok &= half < 0 and abs(crit) < 1e-5
        worst = max(worst, abs(crit))
    return worst, "mean < 0 at lam*/2 and |mean| < 1e-5 at lam*", ok, means


def speed_rate_duality(config):
    det = {}
    worst_rate = worst_gap = 0.0
    for k in CLOSED:
        sr = compute_lambda_star(k)
        r = abs(rate_function(k, sr.a) + 1)
        g = abs(sr.lambda_golden - sr.lambda_newton)
        det[f"{k.spec} |Lambda(a)+1|"] = r
        det[f"{k.spec} |golden-newton|"] = g
        worst_rate, worst_gap = max(worst_rate, r), max(worst_gap, g)
    return worst_rate, "|Lambda(a) + 1| < 1e-6 and golden/Newton agree to 1e-8", \
        worst_rate < 1e-6 and worst_gap < 1e-8, det


def wave_residual(config):
    wv = _wave(Uniform(1.0), 1.5)
    other = _wave(Uniform(1.0), 1.5, start_rate=2.0)
    mass = wv.w.integral() + wv.beyond_mass()
    diff = float(np.max(np.abs(wv.w.values - other.w.values)))
    ok = wv.residual < 1e-4 and abs(mass - 1) < 1e-6 and diff < 10 * wv.tol
    return wv.residual, "residual < 1e-4, mass 1 within 1e-6, two starts within 10 tol", ok, {
        "mass": mass, "start_difference": diff, "iterations": wv.iterations}


def ladder_oracle(config):
    det = {}
    for i, (k, mult) in enumerate(((Uniform(1.0), 1.5), (Gaussian(1.0), 1.3))):
        wv = _wave(k, mult)
        tk = build_tilted_kernel(k, wv.lam)
        res = ladder_chain_mc(tk, 10 ** 6, replica_rng(config.seed, 7000 + i))
        det[f"{k.spec} c={mult}a"] = res.ks_distance(wv.distribution())
    worst = max(det.values())
    return worst, "KS < 0.02 for both pairs", worst < 0.02, det


def tail_exponent(config):
    rep = tail_report(_wave(Uniform(1.0), 1.5))
    ok = rep.slope_error < 0.05 and rep.steeper_increasing
    return rep.slope_error, "slope within 5% of -lam and e^{1.2 lam x} W increasing", ok, {
        "slope": rep.slope, "window": rep.window, "steeper_increasing": rep.steeper_increasing}


def critical_case(config):
    rep = critical_report(critical_wave(Uniform(1.0), tol=WAVE_TOL))
    ok = rep.integral_r2 > 0.99 and rep.integral_slope > 0 and rep.scaled_tail_ratio < 3
    return rep.integral_r2, "R^2 > 0.99 with positive slope, max/median < 3", ok, {
        "slope": rep.integral_slope, "scaled_tail_ratio": rep.scaled_tail_ratio}


def monotone_scheme(config):
    kernel = Uniform(1.0)
    xs = np.linspace(-1.0, 12.0, 2601)
    f0 = exponential_density(1.0, 0.005, 40.0)
    # one midpoint step size (1/128) for all levels
    F = {k: solve_fb(f0, kernel, 1.0, k, substeps=2 ** (7 - k)).tail(2 ** k, xs) for k in (3, 4, 5)}
    fine = solve_fb(exponential_density(1.0, 0.0025, 40.0), kernel, 1.0, 4, substeps=8).tail(16, xs)
    err = float(np.max(np.abs(fine - F[4])))
    worst = float(min(np.min(F[3] - F[4]), np.min(F[4] - F[5])))
    return worst, f">= -2 x quadrature error ({-2 * err:.3g})", worst >= -2 * err, {
        "quadrature_error": err}


def hydrodynamic_limit(config):
    rep = validate_hydrodynamic(config)
    top = rep.checks[0]
    return top.observed, top.expected + " and decreasing in N", rep.ok, rep.diagnostics


def finite_speeds(config):
    rep = validate_speed_limit(config)
    gated = [c for c in rep.checks if c.name != "speed.min_max_agree"]
    det = {c.name: c.observed for c in rep.checks}
    det["relative_gap"] = rep.diagnostics[next(k for k in rep.diagnostics if k.startswith("relative_gap"))]
    a1 = gated[0]
    return a1.observed, "a_1 = 1/4 within 4 SE, nondecreasing, a_64 <= a + 3 SE", \
        all(c.passed for c in gated), det


def nonexistence(config):
    kernel = Uniform(1.0)
    sr = compute_lambda_star(kernel)
    ne = nonexistence_demo(kernel, 0.5 * sr.a, T=20.0, report=sr)
    wv = _wave(kernel, 1.5)
    sol = run_wave_in_fb(wv, 20.0, store_every=1 << 20)
    contrast = abs(sol.shave_points[-1] / sol.times[-1] / wv.c - 1)
    return ne.final_ratio, f"gamma(T)/T > {ne.c:.6g}; wave run within 2% of c", \
        ne.exceeds and contrast < 0.02, {"crossing_time": ne.crossing_time,
                                         "contrast_relative_error": contrast}


def stationary_gaps(config):
    kernel = Uniform(1.0)
    a = stationary_gap_sample(8, kernel, 20.0, 10000, 1.0, rng=replica_rng(config.seed, 9001),
                              init=InitialCondition("point", 0.0))
    b = stationary_gap_sample(8, kernel, 20.0, 10000, 1.0, rng=replica_rng(config.seed, 9002),
                              init=InitialCondition("uniform", 20.0))
    d1a = np.array([g.gaps[0] for g in a])
    d1b = np.array([g.gaps[0] for g in b])
    ks = float(stats.ks_2samp(d1a, d1b).statistic)
    # coincident particles inside a sample would show up as a zero gap step
    ties = sum(int(np.any(np.diff(g.gaps) == 0)) for g in a + b)
    return ks, "KS < 0.05 and no coincident particles", ks < 0.05 and ties == 0, {"ties": ties}


CRITERIA = [
    (1, "mass_identity", 10.0, mass_identity),
    (2, "tilted_normalization", 1.0, tilted_normalization),
    (3, "drift_signs", 1.0, drift_signs),
    (4, "speed_rate_duality", 1.0, speed_rate_duality),
    (5, "wave_residual", 30.0, wave_residual),
    (6, "ladder_oracle", 60.0, ladder_oracle),
    (7, "tail_exponent", 5.0, tail_exponent),
    (8, "critical_case", 60.0, critical_case),
    (9, "monotone_scheme", 60.0, monotone_scheme),
    (10, "hydrodynamic_limit", 300.0, hydrodynamic_limit),
    (11, "finite_speeds", 300.0, finite_speeds),
    (12, "nonexistence", 120.0, nonexistence),
    (13, "stationary_gaps", 120.0, stationary_gaps),
]


def run_criterion(number: int, config: ExperimentConfig | None = None) -> Check:
    config = config or ExperimentConfig()
    _, name, budget, func = CRITERIA[number - 1]
    t0 = time.perf_counter()
    observed, expected, passed, details = func(config)
    runtime = time.perf_counter() - t0
    details = dict(details, runtime=runtime)
    return Check(f"criterion{number:02d}.{name}", float(observed), f"{expected}; runtime < {budget:g} s",
                 None, bool(passed) and runtime < budget, details)


def validate_acceptance(config: ExperimentConfig | None = None) -> ValidationReport:
    config = config or ExperimentConfig()
    rep = ValidationReport("acceptance", config.seed)
    t0 = time.perf_counter()
    for number, *_ in CRITERIA:
        rep.checks.append(run_criterion(number, config))
    rep.runtime = time.perf_counter() - t0
    return rep
