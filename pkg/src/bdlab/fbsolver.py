"""Dyadic shaving scheme for the free boundary problem.

On each interval of length 2**-k the density grows by ``f' = rho * f``
(explicit midpoint steps, discrete convolution with exact cell
probabilities); at the end of the interval mass is removed from the left until
one unit remains.  The cut positions trace the moving boundary.

Grid values are cell averages (see :mod:`bdlab.grid`), so the discrete mass is
``dx * sum(values)``.  The convolution weights sum to one, which makes the
free step multiply that mass by exactly ``1 + h + h**2/2`` per substep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .grid import GridFunction
from .kernels import DisplacementKernel, cell_weights

# relative level below which the right end of a density is trimmed
TRIM = 1e-30


class MassEscape(RuntimeError):
    """More than mass_tol of mass left the grid on the right."""


class InsufficientMass(ValueError):
    """Shaving needs at least one unit of mass."""


def _convolve(f, w, method):
    if method == "fft":
        return signal.oaconvolve(f, w)
    if method == "direct":
        return np.convolve(f, w)
    return signal.convolve(f, w)


def evolve_free(f: GridFunction, kernel: DisplacementKernel, dt: float, substeps: int = 8,
                method: str = "direct", mass_tol: float = 1e-6, weights: np.ndarray | None = None,
                grow: bool = True, return_escape: bool = False):
    """Advance ``f' = rho * f`` by ``dt`` with ``substeps`` midpoint steps.

    With ``grow`` the grid is first extended on both sides by the distance the
    kernel can carry mass in ``dt`` (eight kernel radii per unit time, at least
    one radius).  Without it, mass pushed off the right end raises
    :class:`MassEscape` once it exceeds ``mass_tol``; mass lost on the left is
    only reported.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")
    dx = f.dx
    w = cell_weights(kernel, dx) if weights is None else weights
    M = (w.size - 1) // 2
    vals = np.asarray(f.values, dtype=float)
    x0 = f.x0
    if grow:
        reach = int(math.ceil(max(1.0, 8.0 * dt) * M))
        vals = np.concatenate([np.zeros(reach), vals, np.zeros(reach)])
        x0 -= reach * dx
    n = vals.size
    h = dt / substeps
    esc_left = esc_right = 0.0
    for _ in range(substeps):
        k1 = _convolve(vals, w, method)
        mid = vals + 0.5 * h * k1[M:M + n]
        k2 = _convolve(mid, w, method)
        esc_left += h * dx * (k2[:M].sum() + 0.5 * h * k1[:M].sum())
        esc_right += h * dx * (k2[M + n:].sum() + 0.5 * h * k1[M + n:].sum())
        vals = vals + h * k2[M:M + n]
        peak = vals.max() if n else 0.0
        neg = vals < 0
        if neg.any():
            if vals.min() < -1e-14 * max(peak, 1e-300):
                raise FloatingPointError("negative density produced by the time step")
            vals[neg] = 0.0
    if esc_right > mass_tol:
        raise MassEscape(f"{esc_right:.3g} of mass left the grid on the right")
    out = GridFunction(x0, dx, vals)
    return (out, esc_left, esc_right) if return_escape else out


def shave(f: GridFunction, mass_tol: float = 1e-6) -> tuple[GridFunction, float]:
    """Remove mass from the left until one unit remains; return (density, cut point).

    The cut falls inside the cell whose right part completes the unit mass; that
    cell keeps the fraction it needs and everything to its left is zeroed, so
    ``dx * sum`` of the result is exactly one.  Within the cell the density is
    treated as constant, so the cut is linearly interpolated.
    """
    v = np.asarray(f.values, dtype=float)
    dx = f.dx
    tail = dx * np.cumsum(v[::-1])[::-1]  # mass of cells j, j+1, ...
    total = tail[0] if v.size else 0.0
    nz = np.flatnonzero(v > 0)
    left_edge = f.x0 + (nz[0] - 0.5) * dx if nz.size else f.x0
    if total < 1 - mass_tol:
        raise InsufficientMass(f"total mass {total:.8g} is below one")
    if total <= 1 + 1e-13:
        return f, float(left_edge)
    j = int(np.flatnonzero(tail >= 1)[-1])
    rest = tail[j + 1] if j + 1 < v.size else 0.0
    keep = (1 - rest) / dx
    frac = keep / v[j]
    out = v.copy()
    out[:j] = 0.0
    out[j] = keep
    x_cut = f.x0 + (j + 0.5) * dx - frac * dx
    return GridFunction(f.x0, dx, out), float(x_cut)


def tail_of(f: GridFunction, xs) -> np.ndarray:
    """Trapezoid integral of ``f`` over [x, inf) at each x."""
    return f.tail(xs)


def cell_tail(f: GridFunction, xs, cut: float | None = None) -> np.ndarray:
    """Exact tail of the piecewise-constant (cell-average) reading of ``f``.

    With ``cut`` (a shave point) the mass of the cell containing the cut is
    placed on the part of that cell right of the cut, which is where the
    unshaved density put it.
    """
    xs = np.asarray(xs, dtype=float)
    v = np.asarray(f.values, dtype=float)
    edges = f.x0 - 0.5 * f.dx + f.dx * np.arange(v.size + 1)
    at_edges = np.concatenate([f.dx * np.cumsum(v[::-1])[::-1], [0.0]])
    if cut is not None and edges[0] <= cut < edges[-1]:
        j = min(int((cut - edges[0]) // f.dx), v.size - 1)
        edges = edges.copy()
        edges[j] = cut
    return np.interp(xs, edges, at_edges)


def trim(f: GridFunction, keep_left: float = 0.0, keep_right: float = 0.0,
         level: float = TRIM) -> GridFunction:
    """Drop leading zero cells and a right end below ``level`` times the peak.

    ``keep_left`` and ``keep_right`` are margins (in length units) of zero
    cells to keep or add beyond the retained support.
    """
    v = np.asarray(f.values, dtype=float)
    if not v.size or v.max() <= 0:
        return f
    nz = np.flatnonzero(v > 0)
    big = np.flatnonzero(v > level * v.max())
    i0, i1 = nz[0], big[-1]
    ml, mr = int(math.ceil(keep_left / f.dx)), int(math.ceil(keep_right / f.dx))
    core = v[i0:i1 + 1]
    lo = max(i0 - ml, 0)
    vals = np.concatenate([np.zeros(ml - (i0 - lo)), v[lo:i0], core, np.zeros(mr)])
    return GridFunction(f.x0 + (i0 - ml) * f.dx, f.dx, vals)


@dataclass(frozen=True)
class FbSolution:
    level_k: int
    times: np.ndarray          # dyadic times m / 2**k, starting at 0
    densities: list            # GridFunction after shaving at each stored time
    stored_index: np.ndarray   # index m of each stored density
    shave_points: np.ndarray   # cut points X_m, m = 1..len(times)-1
    initial_edge: float        # left edge of the initial support
    pre_shave_mass: np.ndarray = field(repr=False)
    left_escape: float = 0.0
    substeps: int = 8

    @property
    def boundary_times(self) -> np.ndarray:
        return self.times

    @property
    def boundary_values(self) -> np.ndarray:
        return np.concatenate([[self.initial_edge], self.shave_points])

    def boundary(self, t):
        """Piecewise-linear interpolation of the cut points, starting from the initial edge."""
        if self.shave_points.size == 0:
            return np.full(np.shape(t), np.nan) if np.ndim(t) else float("nan")
        return np.interp(t, self.times, self.boundary_values)

    def density_at(self, m: int) -> GridFunction:
        i = int(np.searchsorted(self.stored_index, m))
        if i >= self.stored_index.size or self.stored_index[i] != m:
            raise KeyError(f"density at step {m} was not stored")
        return self.densities[i]

    def tail(self, m: int, xs) -> np.ndarray:
        cut = self.shave_points[m - 1] if m > 0 else None
        return cell_tail(self.density_at(m), xs, cut)

    @property
    def final(self) -> GridFunction:
        return self.densities[-1]


def solve_fb(f0: GridFunction, kernel: DisplacementKernel, T: float, k: int, substeps: int = 8,
             mass_tol: float = 1e-6, method: str = "direct", store_every: int = 1,
             margin: float | None = None) -> FbSolution:
    """Alternate free growth over 2**-k and shaving, for ceil(T * 2**k) intervals.

    ``f0`` must carry unit mass and vanish at negative nodes.  Densities after
    every ``store_every``-th shave (and the last one) are kept.  ``margin`` is
    the zero padding added around the support before each interval; by default
    it is enough for the kernel's reach over one interval.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    mass0 = f0.cell_mass()
    if abs(mass0 - 1) > mass_tol:
        raise InsufficientMass(f"initial mass {mass0:.10g} differs from one")
    if np.any(f0.values[f0.x < 0] > 0):
        raise ValueError("initial density must vanish on the negative half-line")
    dt = 2.0 ** -k
    n_int = int(math.ceil(T / dt - 1e-12))
    w = cell_weights(kernel, f0.dx)
    r = kernel.support_radius
    if margin is None:
        margin = r * (2.0 + 8.0 * dt) + 2 * f0.dx
    nz = np.flatnonzero(f0.values > 0)
    edge0 = f0.x0 + (nz[0] - 0.5) * f0.dx if nz.size else f0.x0
    f = f0
    dens, idx, cuts, pre = [f0], [0], [], []
    lost = 0.0
    for m in range(1, n_int + 1):
        f = trim(f, keep_left=margin, keep_right=margin)
        while True:
            try:
                g, el, er = evolve_free(f, kernel, dt, substeps, method=method, mass_tol=mass_tol,
                                        weights=w, grow=False, return_escape=True)
                break
            except MassEscape:
                margin *= 2
                f = trim(f, keep_left=margin, keep_right=margin)
        f = g
        lost += el
        pre.append(f.cell_mass())
        f, x = shave(f, mass_tol=mass_tol)
        cuts.append(x)
        if m % store_every == 0 or m == n_int:
            dens.append(trim(f))
            idx.append(m)
    return FbSolution(level_k=k, times=dt * np.arange(n_int + 1), densities=dens,
                      stored_index=np.array(idx), shave_points=np.array(cuts),
                      initial_edge=float(edge0), pre_shave_mass=np.array(pre),
                      left_escape=lost, substeps=substeps)


def boundary_speed(solution: FbSolution, window: tuple[float, float] | None = None) -> float:
    """Least-squares slope of the boundary samples whose times fall in ``window``."""
    t = solution.times
    g = solution.boundary_values
    if window is None:
        window = (0.5 * t[-1], t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 2:
        raise ValueError("window holds fewer than two boundary samples")
    return float(np.polyfit(t[sel], g[sel], 1)[0])
