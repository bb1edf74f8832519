import math

import numpy as np
import pytest

from bdlab.kernels import Gaussian, Laplace, Uniform
from bdlab.speed import SpeedBelowCritical, compute_lambda_star
from bdlab.wave import (TransientWarning, build_tilted_kernel, critical_report, critical_wave,
                        iterate_map, ladder_chain_mc, nonexistence_demo, run_wave_in_fb,
                        shape_deviation, spitzer_iterate, tail_report, tilt_residual)
from bdlab.fbsolver import boundary_speed

import oracles

U1 = Uniform(1.0)
CLOSED = [U1, Gaussian(1.0), Laplace(1.0)]


@pytest.fixture(scope="module")
def uniform_wave():
    return spitzer_iterate(U1, 1.5 * oracles.UNIFORM_A)


@pytest.fixture(scope="module")
def gaussian_wave():
    return spitzer_iterate(Gaussian(1.0), 1.3 * oracles.GAUSSIAN_A)


@pytest.fixture(scope="module")
def uniform_critical():
    return critical_wave(U1)


@pytest.mark.parametrize("k", CLOSED, ids=str)
@pytest.mark.parametrize("frac", [0.5, 1.0])
def test_tilted_kernel_is_a_probability(k, frac):
    lam = frac * compute_lambda_star(k).lambda_star
    tk = build_tilted_kernel(k, lam)
    assert abs(tk.normalization - 1) < 1e-6
    # independent route: lam/mgf(lam) * integral of e^{lam x} R(x)
    q = oracles.quad_integral(oracles.tilted(k.tail, lam), -math.inf, k.support_radius,
                              k.support_radius)
    assert abs(lam / float(k.mgf(lam)) * q - 1) < 1e-6
    assert tk.cdf(tk.z_hi) == pytest.approx(1.0, abs=1e-12)
    if frac < 1:
        assert tk.mean < 0
    else:
        assert abs(tk.mean) < 1e-5


def test_tilted_mean_increases_with_rate():
    means = [build_tilted_kernel(U1, lam).mean for lam in np.linspace(0.2, 4.0, 12)]
    assert np.all(np.diff(means) > 0)


def test_wave_residual_and_mass(uniform_wave):
    wv = uniform_wave
    assert abs(wv.lam - oracles.UNIFORM_LAMBDA_1P5A) < 1e-12
    assert wv.residual < 1e-4
    assert abs(wv.w.integral() + wv.beyond_mass() - 1) < 1e-6
    assert np.all(wv.w.values >= 0) and wv.x[0] == 0.0
    assert abs(wv.tail_fn()(0.0) - 1) < 1e-6 and wv.tail_fn()(-1.0) == 1.0


def test_wave_is_unique(uniform_wave):
    other = spitzer_iterate(U1, 1.5 * oracles.UNIFORM_A, start_rate=2.0)
    assert np.max(np.abs(other.w.values - uniform_wave.w.values)) < 10 * uniform_wave.tol


def test_wave_map_is_linear(uniform_wave):
    w0 = uniform_wave.w.values * (1 + 0.3 * np.sin(uniform_wave.x))
    c = uniform_wave.c
    one = iterate_map(U1, c, w0, steps=3)
    scaled = iterate_map(U1, c, 2.5 * w0, steps=3)
    assert np.max(np.abs(scaled - 2.5 * one)) <= 1e-13 * np.max(np.abs(scaled))


def test_derivative_has_no_grid_scale_oscillation():
    c = 1.5 * oracles.UNIFORM_A
    tv = []
    for dx in (0.01, 0.005):
        wv = spitzer_iterate(U1, c, dx=dx, tol=1e-10)
        x, w = wv.x, wv.w.values
        d = np.gradient(w, dx)
        sel = x > 0.1
        assert np.max(np.abs(d[sel])) < 10
        tv.append(np.sum(np.abs(np.diff(d[sel]))))
    assert abs(tv[1] / tv[0] - 1) < 0.1


def test_speed_below_minimum_is_rejected():
    with pytest.raises(SpeedBelowCritical):
        spitzer_iterate(U1, 0.5 * oracles.UNIFORM_A)


def test_tilt_round_trip(uniform_wave):
    assert tilt_residual(uniform_wave) < 1e-4


@pytest.mark.parametrize("which", ["uniform", "gaussian"])
def test_ladder_chain_matches_wave(which, uniform_wave, gaussian_wave):
    wv = uniform_wave if which == "uniform" else gaussian_wave
    tk = build_tilted_kernel(wv.kernel, wv.lam)
    res = ladder_chain_mc(tk, 10 ** 6, np.random.default_rng(17))
    assert res.ks_distance(wv.distribution()) < 0.02
    assert res.samples[0] >= 0
    assert res.zero_fraction > 0
    assert res.step_mean < 0


def test_ladder_chain_warns_when_transient():
    tk = build_tilted_kernel(U1, 1.3 * oracles.UNIFORM_LAMBDA_STAR)
    assert tk.mean > 0
    with pytest.warns(TransientWarning):
        ladder_chain_mc(tk, 1000, np.random.default_rng(0))


def test_tail_exponent(uniform_wave):
    rep = tail_report(uniform_wave)
    assert rep.slope_error < 0.05
    assert rep.steeper_increasing


def test_weighted_integral_grows_linearly(uniform_wave):
    # e^{lam x} w(x) tends to a positive constant, so its integral grows like x
    rep = tail_report(uniform_wave)
    assert abs(rep.weighted_integral / rep.weighted_integral_80 - 1.25) < 0.02


@pytest.mark.xfail(strict=True, reason="e^{lam x} w tends to a positive constant, so the integral keeps growing")
def test_weighted_integral_stable_under_grid_extension(uniform_wave):
    rep = tail_report(uniform_wave)
    assert abs(rep.weighted_integral / rep.weighted_integral_80 - 1) < 0.01


def test_critical_wave(uniform_critical):
    wv = uniform_critical
    assert wv.critical and wv.c == pytest.approx(oracles.UNIFORM_A, rel=1e-14)
    assert abs(wv.w.integral() + wv.beyond_mass() - 1) < 1e-6
    rep = critical_report(wv)
    assert rep.integral_slope > 0 and rep.integral_r2 > 0.99
    assert rep.scaled_tail_ratio < 3
    # at zero drift e^{lam x} w itself is close to linear on the resolved range
    assert rep.tilted_slope > 0 and rep.tilted_r2 > 0.9999


def test_nonexistence_half_speed():
    rep = nonexistence_demo(U1, 0.5 * oracles.UNIFORM_A, T=20.0)
    assert rep.exceeds and rep.final_ratio > rep.c
    assert rep.crossing_time <= 20


def test_nonexistence_close_to_minimum():
    rep = nonexistence_demo(U1, 0.9 * oracles.UNIFORM_A, T=20.0)
    assert rep.exceeds and math.isfinite(rep.crossing_time)


def test_wave_keeps_its_shape_and_speed(uniform_wave):
    sol = run_wave_in_fb(uniform_wave, 20.0, k=6, dx=0.01, substeps=4, store_every=32)
    for m in (32, 64):
        assert shape_deviation(sol, uniform_wave, m) < 0.02
    c = uniform_wave.c
    assert abs(boundary_speed(sol, (10.0, 20.0)) / c - 1) < 0.02
    assert abs(sol.shave_points[-1] / 20.0 / c - 1) < 0.02
