"""Traveling waves of the free boundary problem.

A wave moving at speed ``c`` with boundary at 0 satisfies

    w(x) = (1/c) * integral_0^inf w(y) R(x - y) dy,   x > 0,

with ``R`` the kernel's right tail.  Writing ``lam`` for the root of
``mgf(lam)/lam = c`` in (0, lam_star] and ``U(x) = e^{lam x} w(x)``, the
equation becomes ``U(x) = integral_0^inf U(y) k(x - y) dy`` where

    k(z) = (lam / mgf(lam)) e^{lam z} R(z)

is a probability density: the law of ``Y - E`` with ``Y`` drawn from the
kernel tilted by ``e^{lam y}`` and ``E ~ Exp(lam)`` independent.  Its
half-line equation is solved by the stationary distribution function of the
reflected walk ``X <- max(X + xi, 0)`` with steps ``xi ~ k``.  That function
has an atom at 0 and tends to a constant, so ``w ~ const * e^{-lam x}``.

The solver iterates the tilted equation starting from a distribution
function.  Working with ``U`` rather than ``w`` keeps every grid value of order
one, and the region beyond the grid is closed by linear extrapolation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from .fbsolver import FbSolution, solve_fb
from .grid import GridFunction
from .kernels import TRUNCATION, DisplacementKernel
from .speed import SpeedBelowCritical, SpeedReport, compute_lambda_star, lambda_for_speed


class NoConvergence(RuntimeError):
    """The iteration did not reach the requested tolerance."""


class TransientWarning(UserWarning):
    """The ladder steps have non-negative mean; the reflected walk is not positive recurrent."""


# ---------------------------------------------------------------------------
# tilted kernel

def _tilted_weight(kernel, lam, z):
    """e^{lam z} R(z), computed without overflow where R vanishes."""
    z = np.asarray(z, dtype=float)
    r = np.asarray(kernel.tail(z), dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(lam * z[pos] + np.log(r[pos]))
    return out


def tilted_cdf(kernel: DisplacementKernel, lam: float, z):
    """CDF of k: P(Y - E <= z) = e^{lam z} R(z) / mgf(lam) + P(Y <= z)."""
    z = np.asarray(z, dtype=float)
    return _tilted_weight(kernel, lam, z) / float(kernel.mgf(lam)) + kernel.tilted_cdf(lam, z)


@dataclass(frozen=True)
class TiltedKernel:
    kernel: DisplacementKernel
    lam: float
    z: np.ndarray          # sample points of k
    values: np.ndarray     # k(z)
    normalization: float   # quadrature of k over the line
    mean: float            # quadrature of z k(z)
    z_lo: float
    z_hi: float

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return self.lam / float(self.kernel.mgf(self.lam)) * _tilted_weight(self.kernel, self.lam, z)

    def cdf(self, z):
        return tilted_cdf(self.kernel, self.lam, z)

    def cell_weights(self, dx: float, m_lo: int, m_hi: int) -> np.ndarray:
        """Probability of each cell [(m-1/2)dx, (m+1/2)dx), m = m_lo..m_hi."""
        m = np.arange(m_lo, m_hi + 2)
        return np.diff(self.cdf((m - 0.5) * dx))

    def sample(self, rng: np.random.Generator, size=None):
        y = self.kernel.sample_tilted(self.lam, rng, size)
        return y - rng.standard_exponential(size) / self.lam


def build_tilted_kernel(kernel: DisplacementKernel, lam: float, points: int = 4001) -> TiltedKernel:
    """Sample k on the range where it exceeds TRUNCATION of its peak; integrate by quad."""
    if not 0 < lam < kernel.theta_max:
        raise ValueError(f"lam={lam} outside (0, {kernel.theta_max})")
    scale = lam / float(kernel.mgf(lam))
    kd = lambda z: scale * float(_tilted_weight(kernel, lam, z))
    kv = lambda z: scale * _tilted_weight(kernel, lam, z)
    r = kernel.support_radius
    probe = np.linspace(-r - 5 / lam, r + 5 / lam, 2001)
    peak = float(np.max(kv(probe)))
    floor = TRUNCATION * peak
    z_lo = -r + math.log(TRUNCATION) / lam
    z_hi = r
    while kd(z_hi) > floor:
        z_hi = 2 * z_hi + 1
    lo_pts = sorted({p for p in (-r, 0.0, r) if z_lo < p < z_hi})
    norm = integrate.quad(kd, z_lo, z_hi, points=lo_pts, limit=1000, epsabs=1e-13, epsrel=1e-12)[0]
    mean = integrate.quad(lambda z: z * kd(z), z_lo, z_hi, points=lo_pts, limit=1000,
                          epsabs=1e-13, epsrel=1e-12)[0]
    z = np.linspace(z_lo, z_hi, points)
    vals = kv(z)
    return TiltedKernel(kernel, float(lam), z, vals, norm, mean, float(z_lo), float(z_hi))


# ---------------------------------------------------------------------------
# wave solver

@dataclass(frozen=True)
class TravelingWave:
    kernel: DisplacementKernel
    c: float
    lam: float
    w: GridFunction            # unit-mass profile on [0, x_max]
    tilted: np.ndarray         # e^{lam x} w(x) on the same grid
    closure_slope: float       # slope of the tilted profile used beyond x_max
    iterations: int
    residual: float            # sup |w - (1/c) int w R| on the grid
    tol: float
    critical: bool = False
    history: np.ndarray = field(default=None, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.w.x

    @property
    def x_max(self) -> float:
        return self.w.x_end

    def beyond_mass(self) -> float:
        """Mass of the extrapolated profile to the right of the grid."""
        lam, L = self.lam, self.x_max
        uL = self.tilted[-1]
        return math.exp(-lam * L) * (uL / lam + self.closure_slope / lam ** 2)

    def tail_mass(self) -> np.ndarray:
        """W(x) = integral of w over [x, inf) at the grid points."""
        return self.w.cumulative_tail() + self.beyond_mass()

    def tail_fn(self):
        """Callable W(x), extended beyond the grid with the closure tail."""
        x, W = self.x, self.tail_mass()
        lam, L, uL, s = self.lam, self.x_max, self.tilted[-1], self.closure_slope

        def F(z):
            z = np.asarray(z, dtype=float)
            zz = np.maximum(z, L)
            far = np.exp(-lam * zz) * (uL + s * (zz - L) + s / lam) / lam
            return np.where(z <= 0, 1.0, np.where(z < L, np.interp(z, x, W), far))
        return F

    def distribution(self):
        """Tilted profile divided by its value at x_max: an estimate of the
        stationary distribution function of the ladder chain (for c > a)."""
        U = self.tilted / self.tilted[-1]
        x = self.x

        def F(z):
            z = np.asarray(z, dtype=float)
            return np.where(z < 0, 0.0, np.interp(z, x, U, right=1.0))
        return F

    def density_fn(self):
        x, v = self.x, self.w.values
        return lambda z: np.interp(np.asarray(z, dtype=float), x, v, left=0.0, right=0.0)


def wave_grid(lam: float, dx: float | None = None, x_max: float | None = None):
    dx = min(0.005, 0.01 / lam) if dx is None else dx
    x_max = 40.0 / lam if x_max is None else x_max
    n = int(round(x_max / dx)) + 1
    return dx, n


class _TiltedOperator:
    """Discrete U -> integral_0^inf U(y) k(x - y) dy on the grid x_i = i*dx.

    Grid values beyond x_max are extrapolated linearly from the last unit of
    length (slope clipped at zero) over ``extension`` further length.
    """

    def __init__(self, kernel, lam, dx, n, extension=None):
        self.dx, self.n = dx, n
        extension = 36.0 / lam if extension is None else extension
        self.ne = int(math.ceil(extension / dx))
        tk_hi = kernel.support_radius
        z_hi = tk_hi
        fl = lam / float(kernel.mgf(lam))
        while fl * float(_tilted_weight(kernel, lam, z_hi)) > TRUNCATION * fl:
            z_hi = 2 * z_hi + 1
        self.m_lo = -(n + self.ne)
        self.m_hi = int(math.ceil(z_hi / dx)) + 1
        m = np.arange(self.m_lo, self.m_hi + 2)
        self.weights = np.diff(tilted_cdf(kernel, lam, (m - 0.5) * dx))
        self.span = max(1, int(round(1.0 / dx)))

    def slope(self, u):
        j = min(self.span, self.n - 1)
        return max((u[-1] - u[-1 - j]) / (j * self.dx), 0.0)

    def __call__(self, u):
        s = self.slope(u)
        ue = np.concatenate([u, u[-1] + s * self.dx * np.arange(1, self.ne + 1)])
        ue[0] *= 0.5
        full = fftconvolve(ue, self.weights)
        return full[-self.m_lo:-self.m_lo + self.n]


def tw_residual(kernel, c, x, w) -> float:
    """sup_x |w(x) - (1/c) int_0^inf w(y) R(x - y) dy| by the trapezoid rule on the grid."""
    dx = x[1] - x[0]
    n = x.size
    wt = w.copy()
    wt[0] *= 0.5
    rk = kernel.tail(dx * np.arange(-(n - 1), n))
    conv = fftconvolve(wt, rk)[n - 1:2 * n - 1] * dx / c
    return float(np.max(np.abs(w - conv)))


def _finish(kernel, c, lam, x, u, op, its, tol, critical, hist):
    dx = x[1] - x[0]
    w = np.exp(-lam * x) * u
    s = op.slope(u)
    beyond = math.exp(-lam * x[-1]) * (u[-1] / lam + s / lam ** 2)
    mass = dx * (w.sum() - 0.5 * (w[0] + w[-1])) + beyond
    w = w / mass
    u = u / mass
    res = tw_residual(kernel, c, x, w)
    return TravelingWave(kernel=kernel, c=float(c), lam=float(lam), w=GridFunction(0.0, dx, w),
                         tilted=u, closure_slope=s / mass, iterations=its, residual=res,
                         tol=tol, critical=critical, history=np.array(hist))


def spitzer_iterate(kernel: DisplacementKernel, c: float, dx: float | None = None,
                    x_max: float | None = None, tol: float = 1e-9, max_iter: int = 20000,
                    start_rate: float = 1.0, report: SpeedReport | None = None,
                    start=None) -> TravelingWave:
    """Traveling wave of speed c > a by fixed-point iteration of the tilted equation.

    The iteration starts from the distribution function of Exponential(start_rate)
    (or ``start``, values of a non-decreasing function on the grid) and stops
    when the sup-norm change of ``w = e^{-lam x} U`` relative to its maximum
    falls below ``tol``.
    """
    report = report or compute_lambda_star(kernel)
    if c <= report.a:
        if c < report.a:
            raise SpeedBelowCritical(f"no traveling wave below a={report.a}")
        return critical_wave(kernel, dx=dx, x_max=x_max, tol=tol, max_iter=max_iter, report=report)
    lam = lambda_for_speed(kernel, c, report)
    dx, n = wave_grid(lam, dx, x_max)
    x = dx * np.arange(n)
    op = _TiltedOperator(kernel, lam, dx, n)
    u = np.array(start, dtype=float) if start is not None else 1 - np.exp(-start_rate * x)
    decay = np.exp(-lam * x)
    hist = []
    for it in range(1, max_iter + 1):
        un = op(u)
        wn = decay * un
        d = float(np.max(np.abs(wn - decay * u)) / np.max(np.abs(wn)))
        hist.append(d)
        u = un
        if d < tol:
            return _finish(kernel, c, lam, x, u, op, it, tol, False, hist)
    raise NoConvergence(f"no convergence after {max_iter} iterations (last change {d:.3g})")


def iterate_map(kernel: DisplacementKernel, c: float, w0, steps: int = 1, report=None,
                dx=None, x_max=None) -> np.ndarray:
    """Apply the wave map ``steps`` times to grid values ``w0`` (no normalisation)."""
    report = report or compute_lambda_star(kernel)
    lam = lambda_for_speed(kernel, c, report)
    dx, n = wave_grid(lam, dx, x_max)
    x = dx * np.arange(n)
    op = _TiltedOperator(kernel, lam, dx, n)
    u = np.exp(lam * x) * np.asarray(w0, dtype=float)
    for _ in range(steps):
        u = op(u)
    return np.exp(-lam * x) * u


def critical_wave(kernel: DisplacementKernel, dx: float | None = None, x_max: float | None = None,
                  tol: float = 1e-9, max_iter: int = 50000,
                  report: SpeedReport | None = None) -> TravelingWave:
    """Wave at the minimal speed a, iterating with the mass rescaled to one each step."""
    report = report or compute_lambda_star(kernel)
    lam = report.lambda_star
    dx, n = wave_grid(lam, dx, x_max)
    x = dx * np.arange(n)
    op = _TiltedOperator(kernel, lam, dx, n)
    decay = np.exp(-lam * x)
    u = 1 - np.exp(-x)
    hist = []
    for it in range(1, max_iter + 1):
        un = op(u)
        wn = decay * un
        un = un / (dx * (wn.sum() - 0.5 * (wn[0] + wn[-1])))
        d = float(np.max(np.abs(decay * (un - u))) / np.max(decay * un))
        hist.append(d)
        u = un
        if d < tol:
            return _finish(kernel, report.a, lam, x, u, op, it, tol, True, hist)
    raise NoConvergence(f"no convergence after {max_iter} iterations (last change {d:.3g})")


# ---------------------------------------------------------------------------
# diagnostics

def _r_squared(x, y):
    p = np.polyfit(x, y, 1)
    fit = np.polyval(p, x)
    ss = np.sum((y - y.mean()) ** 2)
    return float(p[0]), float(1 - np.sum((y - fit) ** 2) / ss) if ss > 0 else 1.0


@dataclass(frozen=True)
class TailReport:
    weighted_integral: float       # integral of e^{lam x} w over the grid
    weighted_integral_80: float    # same over the first 80% of the grid
    slope: float                   # regression slope of log W on the window
    slope_error: float             # |slope / -lam - 1|
    steeper_increasing: bool       # e^{1.2 lam x} W(x) increasing on the window
    window: tuple[float, float]


def tail_report(wave: TravelingWave, floor: float = 1e-12, factor: float = 1.2) -> TailReport:
    """Tail diagnostics on the last resolved decade, W in [floor, 10*floor]."""
    x, w = wave.x, wave.w.values
    W = wave.tail_mass()
    sel = (W >= floor) & (W <= 10 * floor)
    if sel.sum() < 3:
        raise ValueError("tail never reaches the requested decade on this grid")
    slope = float(np.polyfit(x[sel], np.log(W[sel]), 1)[0])
    g = np.exp(factor * wave.lam * x[sel]) * W[sel]
    ew = np.exp(wave.lam * x) * w
    dx = wave.w.dx
    cum = dx * (np.cumsum(ew) - 0.5 * (ew[0] + ew))
    k80 = int(0.8 * (x.size - 1))
    return TailReport(weighted_integral=float(cum[-1]), weighted_integral_80=float(cum[k80]),
                      slope=slope, slope_error=abs(slope / -wave.lam - 1),
                      steeper_increasing=bool(np.all(np.diff(g) > 0)),
                      window=(float(x[sel][0]), float(x[sel][-1])))


@dataclass(frozen=True)
class CriticalReport:
    integral_slope: float         # fit of integral_0^x e^{lam y} w dy on the last half
    integral_r2: float
    tilted_slope: float           # fit of e^{lam x} w on the last half
    tilted_r2: float
    scaled_tail_ratio: float      # max / median of e^{lam x} W(x) over the grid


def critical_report(wave: TravelingWave) -> CriticalReport:
    x = wave.x
    dx = wave.w.dx
    ew = wave.tilted
    cum = dx * (np.cumsum(ew) - 0.5 * (ew[0] + ew))
    half = x >= 0.5 * x[-1]
    s1, r1 = _r_squared(x[half], cum[half])
    s2, r2 = _r_squared(x[half], ew[half])
    B = np.exp(wave.lam * x) * wave.tail_mass()
    return CriticalReport(s1, r1, s2, r2, float(B.max() / np.median(B)))


def tilt_residual(wave: TravelingWave, tk: TiltedKernel | None = None) -> float:
    """sup |u(x) - int_0^L u(y) k(x - y) dy| / sup u on [0, x_max/2], k point-sampled."""
    tk = tk or build_tilted_kernel(wave.kernel, wave.lam)
    x = wave.x
    dx = wave.w.dx
    n = x.size
    u = wave.tilted.copy()
    ut = u.copy()
    ut[0] *= 0.5
    kv = tk.density(dx * np.arange(-(n - 1), n))
    conv = fftconvolve(ut, kv)[n - 1:2 * n - 1] * dx
    half = x <= 0.5 * x[-1]
    return float(np.max(np.abs(u[half] - conv[half])) / np.max(np.abs(u)))


# ---------------------------------------------------------------------------
# ladder chain

@dataclass(frozen=True)
class LadderChainResult:
    samples: np.ndarray   # visited states after burn-in, sorted
    zero_fraction: float
    step_mean: float

    def ecdf(self, x):
        return np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right") / self.samples.size

    def ks_distance(self, cdf) -> float:
        """sup |F_emp - F| allowing F to jump (the chain has an atom at 0).

        ``cdf`` must be right-continuous and vanish below 0; left limits are
        taken as cdf(v) for v > 0 and 0 at v = 0.
        """
        s = self.samples
        vals = np.unique(s)
        right = np.searchsorted(s, vals, side="right") / s.size
        left = np.searchsorted(s, vals, side="left") / s.size
        fv = np.asarray(cdf(vals), dtype=float)
        fl = np.where(vals > 0, fv, 0.0)
        return float(max(np.max(np.abs(right - fv)), np.max(np.abs(left - fl))))


def ladder_chain_mc(tk: TiltedKernel, steps: int = 10 ** 6, rng: np.random.Generator | None = None,
                    burn_frac: float = 0.1, block: int = 1 << 16) -> LadderChainResult:
    """Simulate X <- max(X + xi, 0) from X = 0 with xi drawn from the tilted kernel."""
    rng = rng if rng is not None else np.random.default_rng()
    if tk.mean >= 0:
        warnings.warn(f"ladder steps have mean {tk.mean:.3g} >= 0; the chain is not "
                      "positive recurrent", TransientWarning, stacklevel=2)
    out = np.empty(steps)
    x0 = 0.0
    total = 0.0
    for start in range(0, steps, block):
        m = min(block, steps - start)
        xi = tk.sample(rng, m)
        total += xi.sum()
        # X_n = P_n - min(0, min_{j<=n} P_j) with P the walk started at x0
        p = x0 + np.cumsum(xi)
        low = np.minimum.accumulate(p)
        x = p - np.minimum(low, 0.0)
        x[x < 0] = 0.0
        out[start:start + m] = x
        x0 = x[-1]
    kept = np.sort(out[int(burn_frac * steps):])
    return LadderChainResult(kept, float(np.mean(kept == 0)), total / steps)


# ---------------------------------------------------------------------------
# coupling with the free boundary solver

def wave_initial_density(wave: TravelingWave, dx: float, x_hi: float, pad: float = 0.0) -> GridFunction:
    """Cell averages of the wave on an FB grid with 0 on a cell edge."""
    pad = dx * math.ceil(pad / dx)
    return GridFunction.from_tail(wave.tail_fn(), -pad, x_hi, dx)


def run_wave_in_fb(wave: TravelingWave, T: float, k: int = 6, dx: float = 0.01,
                   substeps: int = 4, store_every: int = 1) -> FbSolution:
    """Solve the free boundary problem started from the wave profile."""
    x_hi = wave.c * T + 45.0 / wave.lam
    f0 = wave_initial_density(wave, dx, x_hi)
    return solve_fb(f0, wave.kernel, T, k, substeps=substeps, store_every=store_every)


def shape_deviation(solution: FbSolution, wave: TravelingWave, m: int, skip: int = 2) -> float:
    """sup_x |f(t_m, x + gamma(t_m)) - w(x)| over x >= skip FB cells past the boundary."""
    f = solution.density_at(m)
    g = solution.boundary_values[m]
    xs = f.x
    sel = xs >= g + skip * f.dx
    return float(np.max(np.abs(f.values[sel] - wave.density_fn()(xs[sel] - g))))


@dataclass(frozen=True)
class NonexistenceReport:
    c: float
    a: float
    T: float
    times: np.ndarray
    ratios: np.ndarray            # gamma(t) / t
    crossing_time: float          # first checked time with gamma(t)/t > c (inf if none)
    final_ratio: float

    @property
    def exceeds(self) -> bool:
        return self.final_ratio > self.c


def nonexistence_demo(kernel: DisplacementKernel, c: float, T: float = 20.0, k: int = 6,
                      dx: float = 0.01, substeps: int = 4, f0: GridFunction | None = None,
                      report: SpeedReport | None = None, x_max: float = 40.0) -> NonexistenceReport:
    """Run the free boundary solver from a candidate profile and compare gamma(t)/t with c < a."""
    report = report or compute_lambda_star(kernel)
    if not c < report.a:
        raise ValueError(f"speed {c} is not below a={report.a}")
    if f0 is None:
        f0 = GridFunction.from_tail(lambda e: np.exp(-np.maximum(e, 0.0)), 0.0, x_max, dx)
    sol = solve_fb(f0, kernel, T, k, substeps=substeps, store_every=2 ** k)
    t = sol.times[1:]
    ratios = sol.shave_points / t
    checks = np.arange(1, int(math.floor(T)) + 1, dtype=float)
    idx = np.searchsorted(sol.times, checks) - 1
    over = checks[ratios[idx] > c]
    return NonexistenceReport(c=c, a=report.a, T=float(sol.times[-1]), times=checks,
                              ratios=ratios[idx], crossing_time=float(over[0]) if over.size else math.inf,
                              final_ratio=float(ratios[-1]))
