import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdlab.grid import GridFunction, exponential_density
from bdlab.kernels import Gaussian, Laplace, Uniform
from bdlab.fbsolver import (InsufficientMass, MassEscape, boundary_speed, cell_tail, evolve_free,
                            shave, solve_fb, tail_of)
from bdlab.speed import compute_lambda_star

import oracles

U1 = Uniform(1.0)


@pytest.fixture(scope="module")
def ladder():
    """F^k at t = 1 for k = 3, 4, 5 from Exponential(1), on dx = 0.005.

    Every level uses the same midpoint step 1/128, so the levels differ only
    in how often they shave.
    """
    f0 = exponential_density(1.0, 0.005, 40.0)
    return {k: solve_fb(f0, U1, 1.0, k, substeps=2 ** (7 - k)) for k in (3, 4, 5)}


def _final_tails(sols, xs):
    return {k: s.tail(2 ** k, xs) for k, s in sols.items()}


def test_zero_is_a_fixed_point():
    z = GridFunction(0.0, 0.01, np.zeros(200))
    out = evolve_free(z, U1, 0.5)
    assert np.all(out.values == 0)


@pytest.mark.parametrize("t", [0.25, 0.5, 1.0])
def test_free_mass_grows_exponentially(t):
    f0 = exponential_density(1.0, 0.005, 40.0)
    out = evolve_free(f0, U1, t, substeps=max(8, int(32 * t)))
    assert abs(out.cell_mass() / math.exp(t) - 1) < 1e-3


def test_mass_after_unit_time_is_e():
    f0 = GridFunction.from_tail(lambda e: np.clip(1 - e / 2, 0, 1), 0.0, 2.0, 0.01)
    assert abs(evolve_free(f0, Laplace(0.5), 1.0, substeps=32).cell_mass() / math.e - 1) < 1e-3


def test_symmetric_kernel_keeps_the_mean():
    x = 3.0 + 0.01 * np.arange(-600, 601)
    g = GridFunction(x[0], 0.01, np.exp(-0.5 * ((x - 3.0) / 0.7) ** 2))
    out = evolve_free(g, U1, 0.5)
    assert abs(out.mean() - g.mean()) < 1e-8
    v = out.values
    assert np.max(np.abs(v - v[::-1])) < 1e-12 * v.max()


def test_direct_and_fft_convolution_agree():
    f0 = exponential_density(1.0, 0.005, 30.0)
    a = evolve_free(f0, Gaussian(0.5), 0.25, method="direct").values
    b = evolve_free(f0, Gaussian(0.5), 0.25, method="fft").values
    assert np.max(np.abs(a - b)) < 1e-10


def test_mass_escape_without_room():
    f0 = GridFunction.from_tail(lambda e: np.clip(1 - e, 0, 1), 0.0, 1.0, 0.01)
    with pytest.raises(MassEscape):
        evolve_free(f0, U1, 0.5, grow=False)


def test_shave_uniform_on_zero_two():
    f = GridFunction.from_tail(lambda e: np.clip(1 - e / 2, 0, 1), 0.0, 2.0, 0.01).scaled(2.0)
    g, x = shave(f)
    assert abs(x - 1.0) < 1e-12
    assert abs(g.cell_mass() - 1) < 1e-14
    assert np.all(g.values[g.x < 1.0 - 0.01] == 0)


def test_shave_doubled_exponential():
    f = exponential_density(1.0, 0.001, 40.0).scaled(2.0)
    g, x = shave(f)
    assert abs(x - math.log(2)) < 1e-6
    assert abs(g.cell_mass() - 1) < 1e-14


def test_shave_unit_mass_is_identity():
    f = exponential_density(1.0, 0.01, 60.0)
    g, x = shave(f)
    assert g is f and abs(x) < 1e-12


def test_shave_rejects_small_mass():
    with pytest.raises(InsufficientMass):
        shave(exponential_density(1.0, 0.01, 60.0).scaled(0.5))


@given(st.floats(1.0, 20.0), st.floats(0.1, 3.0))
@settings(max_examples=80, deadline=None)
def test_shave_leaves_unit_mass(mass, rate):
    f = exponential_density(rate, 0.01, 40.0 / rate).scaled(mass)
    g, x = shave(f)
    assert abs(g.cell_mass() - 1) < 1e-12
    assert abs(x - math.log(mass) / rate) < 0.01


def test_tail_examples():
    f = exponential_density(1.0, 0.001, 40.0)
    assert tail_of(f, -5.0) == pytest.approx(f.integral(), rel=1e-14)
    assert tail_of(f, 50.0) == 0.0
    assert abs(tail_of(f, 1.0) - math.exp(-1)) < 1e-6
    assert abs(cell_tail(f, 1.0) - math.exp(-1)) < 1e-12
    xs = np.linspace(-1, 45, 500)
    assert np.all(np.diff(tail_of(f, xs)) <= 0)


def test_zero_horizon():
    f0 = exponential_density(1.0, 0.01, 40.0)
    sol = solve_fb(f0, U1, 0.0, 4)
    assert sol.shave_points.size == 0 and sol.final is f0
    assert np.isnan(sol.boundary(0.0))


def test_solution_invariants(ladder):
    sol = ladder[5]
    dt = 2.0 ** -5
    for m, g in zip(sol.stored_index[1:], sol.densities[1:]):
        assert abs(g.cell_mass() - 1) < 1e-6
        assert np.all(g.values >= 0)
        # nothing survives in cells lying fully left of the cut
        x = sol.shave_points[m - 1]
        assert np.all(g.values[g.x + 0.5 * g.dx <= x] == 0)
    assert np.all(np.diff(sol.boundary_values) >= 0)
    assert np.max(np.abs(sol.pre_shave_mass / math.exp(dt) - 1)) < 1e-4
    assert sol.boundary(0.5) == pytest.approx(sol.shave_points[15])


def test_tails_are_ordered_in_level(ladder):
    xs = np.linspace(-1, 12, 2601)
    F = _final_tails(ladder, xs)
    # the quadrature error estimate is the change under halving dx
    f0 = exponential_density(1.0, 0.0025, 40.0)
    fine = solve_fb(f0, U1, 1.0, 4, substeps=8).tail(16, xs)
    err = np.max(np.abs(fine - F[4]))
    assert np.min(F[3] - F[4]) >= -2 * err
    assert np.min(F[4] - F[5]) >= -2 * err


def test_refinement_differences_shrink(ladder):
    xs = np.linspace(-1, 12, 2601)
    F = _final_tails(ladder, xs)
    d34 = np.max(np.abs(F[3] - F[4]))
    d45 = np.max(np.abs(F[4] - F[5]))
    assert d34 > d45 > 0


def test_grid_refinement_converges():
    xs = np.linspace(-1, 12, 2601)
    F = {dx: solve_fb(exponential_density(1.0, dx, 40.0), U1, 1.0, 3).tail(8, xs)
         for dx in (0.02, 0.01, 0.005)}
    d1 = np.max(np.abs(F[0.02] - F[0.01]))
    d2 = np.max(np.abs(F[0.01] - F[0.005]))
    # second-order quadrature: halving dx should cut the change by about 4
    assert 3.0 < d1 / d2 < 5.0


def test_exponential_start_moves_at_its_own_decay_speed():
    # an initial tail e^{-x} spreads at mgf(1)/1 = sinh(1) rather than at the minimal speed
    f0 = exponential_density(1.0, 0.01, 60.0)
    sol = solve_fb(f0, U1, 20.0, 6, substeps=4)
    s = boundary_speed(sol, (10.0, 20.0))
    assert abs(s - math.sinh(1.0)) < 0.01
    assert s > oracles.UNIFORM_A * 0.95


def test_steep_start_approaches_minimal_speed():
    f0 = exponential_density(5.0, 0.01, 10.0)
    sol = solve_fb(f0, U1, 40.0, 6, substeps=4, store_every=1 << 20)
    s = boundary_speed(sol, (30.0, 40.0))
    assert abs(s / compute_lambda_star(U1).a - 1) < 0.05
    assert np.all(np.diff(sol.boundary_values) >= 0)
