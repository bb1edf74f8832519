"""Symmetric displacement laws for the branching walk.

Every kernel exposes its density, right tail ``R(x) = P(X >= x)``, moment
generating function and its first two derivatives, an inverse CDF, and the
same objects for the exponentially tilted law ``e^{lam*y} rho(y) / mgf(lam)``.
Closed forms are used wherever they exist.  MGF evaluations keep the floating
type of their argument so ``np.longdouble`` inputs stay in extended precision.
"""

from __future__ import annotations

import abc
import csv
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .grid import GridFunction

# densities below this fraction of the peak are treated as zero
TRUNCATION = 1e-14


def _as_float_array(x):
    a = np.asarray(x)
    if a.dtype.kind != "f":
        a = a.astype(float)
    return a


def _out(a, like):
    return a if np.ndim(like) else a[()]


class DisplacementKernel(abc.ABC):
    """Base class for symmetric, absolutely continuous displacement laws."""

    theta_max: float = np.inf

    @abc.abstractmethod
    def density(self, x): ...

    @abc.abstractmethod
    def tail(self, x):
        """P(X >= x)."""

    @abc.abstractmethod
    def mgf(self, theta): ...

    @abc.abstractmethod
    def mgf_prime(self, theta): ...

    @abc.abstractmethod
    def mgf_second(self, theta): ...

    @abc.abstractmethod
    def ppf(self, u):
        """Inverse CDF on (0, 1)."""

    @abc.abstractmethod
    def tilted_cdf(self, lam: float, y):
        """CDF of the law with density e^{lam*y} rho(y) / mgf(lam)."""

    @abc.abstractmethod
    def tilted_ppf(self, lam: float, u): ...

    @property
    @abc.abstractmethod
    def support_radius(self) -> float:
        """Radius beyond which the density is below TRUNCATION of its peak."""

    @property
    @abc.abstractmethod
    def spec(self) -> str:
        """Round-trippable specification string, e.g. ``uniform(1.0)``."""

    def cdf(self, x):
        # symmetry keeps precision in the left tail
        return self.tail(-_as_float_array(x))

    def sample(self, rng: np.random.Generator, size=None):
        return self.ppf(rng.random(size))

    def sample_tilted(self, lam: float, rng: np.random.Generator, size=None):
        return self.tilted_ppf(lam, rng.random(size))

    def speed_of(self, lam):
        """c(lam) = mgf(lam) / lam."""
        return self.mgf(lam) / lam

    def half_mean(self) -> float:
        """Integral of x*rho(x) over x > 0, the speed of a single selected particle."""
        from scipy.integrate import quad
        r = self.support_radius
        return quad(lambda x: x * self.density(x), 0.0, r, limit=200)[0]

    def __repr__(self) -> str:
        return self.spec


@dataclass(frozen=True, repr=False)
class Uniform(DisplacementKernel):
    """Uniform law on [-half_width, half_width]."""

    half_width: float = 1.0
    theta_max: float = field(default=np.inf, init=False)

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    @property
    def spec(self) -> str:
        return f"uniform({self.half_width!r})"

    @property
    def support_radius(self) -> float:
        return self.half_width

    def density(self, x):
        x = _as_float_array(x)
        h = self.half_width
        return _out(np.where(np.abs(x) <= h, 0.5 / h, 0.0), x)

    def tail(self, x):
        x = _as_float_array(x)
        h = self.half_width
        return _out(np.clip((h - x) / (2 * h), 0.0, 1.0), x)

    def ppf(self, u):
        u = _as_float_array(u)
        h = self.half_width
        return _out(h * (2 * u - 1), u)

    # the series branches keep full accuracy near theta = 0
    def mgf(self, theta):
        t = _as_float_array(theta)
        s = self.half_width * t
        small = np.abs(s) < 1e-2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            big = np.sinh(s) / s
        s2 = s * s
        ser = 1 + s2 / 6 + s2 * s2 / 120 + s2 ** 3 / 5040
        return _out(np.where(small, ser, big), t)

    def mgf_prime(self, theta):
        t = _as_float_array(theta)
        h = self.half_width
        s = h * t
        small = np.abs(s) < 1e-2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            big = h * (s * np.cosh(s) - np.sinh(s)) / (s * s)
        s2 = s * s
        ser = h * s * (1 / 3 + s2 / 30 + s2 * s2 / 840)
        return _out(np.where(small, ser, big), t)

    def mgf_second(self, theta):
        t = _as_float_array(theta)
        h = self.half_width
        s = h * t
        small = np.abs(s) < 1e-2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            big = h * h * ((s * s + 2) * np.sinh(s) - 2 * s * np.cosh(s)) / s ** 3
        s2 = s * s
        ser = h * h * (1 / 3 + s2 / 10 + s2 * s2 / 168)
        return _out(np.where(small, ser, big), t)

    def tilted_cdf(self, lam, y):
        y = _as_float_array(y)
        h = self.half_width
        q = math.exp(-2 * lam * h)
        z = np.clip(y, -h, h)
        return _out((np.exp(lam * (z - h)) - q) / (1 - q), y)

    def tilted_ppf(self, lam, u):
        u = _as_float_array(u)
        h = self.half_width
        q = math.exp(-2 * lam * h)
        return _out(h + np.log(u + (1 - u) * q) / lam, u)


@dataclass(frozen=True, repr=False)
class Gaussian(DisplacementKernel):
    """Centred normal law with standard deviation sigma."""

    sigma: float = 1.0
    theta_max: float = field(default=np.inf, init=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def spec(self) -> str:
        return f"gaussian({self.sigma!r})"

    @property
    def support_radius(self) -> float:
        return self.sigma * math.sqrt(-2 * math.log(TRUNCATION))

    def density(self, x):
        x = _as_float_array(x)
        s = self.sigma
        return _out(np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2 * math.pi)), x)

    def tail(self, x):
        x = _as_float_array(x)
        return _out(0.5 * special.erfc(x / (self.sigma * math.sqrt(2))), x)

    def ppf(self, u):
        u = _as_float_array(u)
        return _out(self.sigma * special.ndtri(u), u)

    def mgf(self, theta):
        t = _as_float_array(theta)
        return _out(np.exp(0.5 * (self.sigma * t) ** 2), t)

    def mgf_prime(self, theta):
        t = _as_float_array(theta)
        s2 = self.sigma ** 2
        return _out(s2 * t * np.exp(0.5 * s2 * t * t), t)

    def mgf_second(self, theta):
        t = _as_float_array(theta)
        s2 = self.sigma ** 2
        return _out((s2 + s2 * s2 * t * t) * np.exp(0.5 * s2 * t * t), t)

    def tilted_cdf(self, lam, y):
        y = _as_float_array(y)
        s = self.sigma
        return _out(special.ndtr((y - lam * s * s) / s), y)

    def tilted_ppf(self, lam, u):
        u = _as_float_array(u)
        s = self.sigma
        return _out(lam * s * s + s * special.ndtri(u), u)


@dataclass(frozen=True, repr=False)
class Laplace(DisplacementKernel):
    """Two-sided exponential law with density exp(-|x|/scale) / (2 scale)."""

    scale: float = 1.0
    theta_max: float = field(default=np.inf, init=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "theta_max", 1.0 / self.scale)

    @property
    def spec(self) -> str:
        return f"laplace({self.scale!r})"

    @property
    def support_radius(self) -> float:
        return -self.scale * math.log(TRUNCATION)

    def density(self, x):
        x = _as_float_array(x)
        b = self.scale
        return _out(np.exp(-np.abs(x) / b) / (2 * b), x)

    def tail(self, x):
        x = _as_float_array(x)
        b = self.scale
        e = 0.5 * np.exp(-np.abs(x) / b)
        return _out(np.where(x >= 0, e, 1 - e), x)

    def ppf(self, u):
        u = _as_float_array(u)
        b = self.scale
        with np.errstate(divide="ignore"):
            lo = b * np.log(2 * u)
            hi = -b * np.log(2 * (1 - u))
        return _out(np.where(u < 0.5, lo, hi), u)

    def _inside(self, t):
        return np.abs(self.scale * t) < 1

    def mgf(self, theta):
        t = _as_float_array(theta)
        q = (self.scale * t) ** 2
        with np.errstate(divide="ignore"):
            v = 1 / (1 - q)
        return _out(np.where(self._inside(t), v, np.inf), t)

    def mgf_prime(self, theta):
        t = _as_float_array(theta)
        b2 = self.scale ** 2
        q = b2 * t * t
        with np.errstate(divide="ignore"):
            v = 2 * b2 * t / (1 - q) ** 2
        return _out(np.where(self._inside(t), v, np.inf), t)

    def mgf_second(self, theta):
        t = _as_float_array(theta)
        b2 = self.scale ** 2
        q = b2 * t * t
        with np.errstate(divide="ignore"):
            v = 2 * b2 * (1 + 3 * q) / (1 - q) ** 3
        return _out(np.where(self._inside(t), v, np.inf), t)

    # tilted law: mass (1 + b*lam)/2 on an Exp(1/b - lam) right half, the rest
    # on a reflected Exp(1/b + lam) left half
    def tilted_cdf(self, lam, y):
        y = _as_float_array(y)
        b = self.scale
        p_right = 0.5 * (1 + b * lam)
        with np.errstate(over="ignore"):
            left = (1 - p_right) * np.exp((1 / b + lam) * np.minimum(y, 0.0))
            right = 1 - p_right * np.exp(-(1 / b - lam) * np.maximum(y, 0.0))
        return _out(np.where(y < 0, left, right), y)

    def tilted_ppf(self, lam, u):
        u = _as_float_array(u)
        b = self.scale
        p_left = 0.5 * (1 - b * lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.log(u / p_left) / (1 / b + lam)
            right = -np.log((1 - u) / (1 - p_left)) / (1 / b - lam)
        return _out(np.where(u < p_left, left, right), u)


class Tabulated(DisplacementKernel):
    """Piecewise-linear density through tabulated values on a symmetric grid.

    The table is symmetrised and renormalised by the trapezoid rule.  Tails,
    moments and the inverse CDF are exact for the piecewise-linear interpolant,
    except MGF derivatives which use central differences.  The decay rate
    cannot be read off finite data, so it is declared by the caller.
    """

    def __init__(self, grid: GridFunction, theta_max: float | None = None, source: str | None = None):
        x = grid.x
        if not np.isclose(x[0], -x[-1], rtol=0, atol=1e-9 * max(1.0, abs(x[-1]))):
            raise ValueError("tabulation grid must be symmetric about 0")
        v = np.asarray(grid.values, dtype=float)
        if np.any(v < 0):
            raise ValueError("tabulated density must be non-negative")
        scale = max(v.max(), 1e-300)
        if np.max(np.abs(v - v[::-1])) > 1e-9 * scale:
            raise ValueError("tabulated density is not symmetric")
        v = 0.5 * (v + v[::-1])
        g = GridFunction(grid.x0, grid.dx, v)
        mass = g.integral()
        if abs(mass - 1) > 1e-6:
            warnings.warn(f"tabulated density integrates to {mass:.8g}; renormalising", stacklevel=2)
        self.grid = GridFunction(grid.x0, grid.dx, v / mass)
        if theta_max is None:
            warnings.warn("no decay rate declared for tabulated kernel; assuming infinity", stacklevel=2)
            theta_max = np.inf
        self.theta_max = float(theta_max)
        self.source = source
        self._x = self.grid.x
        self._v = self.grid.values
        self._tail_nodes = self.grid.cumulative_tail()
        big = self._v >= TRUNCATION * self._v.max()
        self._radius = float(np.max(np.abs(self._x[big]))) if big.any() else 0.0

    @property
    def spec(self) -> str:
        return f"tabulated({self.source})" if self.source else "tabulated(<memory>)"

    @property
    def support_radius(self) -> float:
        return self._radius

    def density(self, x):
        x = _as_float_array(x)
        return _out(np.interp(x, self._x, self._v, left=0.0, right=0.0), x)

    def tail(self, x):
        x = _as_float_array(x)
        xs, v, dx = self._x, self._v, self.grid.dx
        xc = np.clip(x, xs[0], xs[-1])
        i = np.clip(np.floor((xc - xs[0]) / dx).astype(int), 0, xs.size - 2)
        right = xs[i + 1]
        rho = np.interp(xc, xs, v)
        val = self._tail_nodes[i + 1] + 0.5 * (right - xc) * (rho + v[i + 1])
        val = np.where(x <= xs[0], 1.0, np.where(x >= xs[-1], 0.0, val))
        return _out(val, x)

    def ppf(self, u):
        u = _as_float_array(u)
        cdf = 1 - self._tail_nodes
        keep = _rising(cdf)
        return _out(np.interp(u, cdf[keep], self._x[keep]), u)

    def _moment(self, theta, power):
        t = np.asarray(theta, dtype=float)
        e = np.exp(np.multiply.outer(t, self._x)) * self._x ** power * self._v
        dx = self.grid.dx
        return _out(dx * (e.sum(axis=-1) - 0.5 * (e[..., 0] + e[..., -1])), t)

    def mgf(self, theta):
        t = np.asarray(theta, dtype=float)
        val = self._moment(t, 0)
        return _out(np.where(np.abs(t) < self.theta_max, val, np.inf), t)

    def _step(self, t):
        return np.maximum(1e-5 * np.abs(t), 1e-6)

    def mgf_prime(self, theta):
        t = np.asarray(theta, dtype=float)
        h = self._step(t)
        return _out((self._moment(t + h, 0) - self._moment(t - h, 0)) / (2 * h), t)

    def mgf_second(self, theta):
        t = np.asarray(theta, dtype=float)
        h = self._step(t)
        return _out((self._moment(t + h, 0) - 2 * self._moment(t, 0) + self._moment(t - h, 0)) / h ** 2, t)

    def _tilted_nodes(self, lam):
        e = np.exp(lam * (self._x - self._x[-1])) * self._v
        c = np.concatenate([[0.0], np.cumsum(0.5 * self.grid.dx * (e[1:] + e[:-1]))])
        return c / c[-1]

    def tilted_cdf(self, lam, y):
        y = _as_float_array(y)
        return _out(np.interp(y, self._x, self._tilted_nodes(lam)), y)

    def tilted_ppf(self, lam, u):
        u = _as_float_array(u)
        c = self._tilted_nodes(lam)
        keep = _rising(c)
        return _out(np.interp(u, c[keep], self._x[keep]), u)


def _rising(cdf):
    """Nodes bordering a strictly increasing step, so flat ends are dropped."""
    up = np.diff(cdf) > 0
    return np.concatenate([[False], up]) | np.concatenate([up, [False]])


def load_tabulated(path, theta_max: float | None = None) -> Tabulated:
    """Read a two-column ``x,rho`` CSV on a uniform grid."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                if rows:
                    raise
                continue  # header line
    arr = np.array(rows)
    if arr.shape[0] < 3:
        raise ValueError(f"{path}: need at least three tabulation points")
    dx = np.diff(arr[:, 0])
    if np.ptp(dx) > 1e-9 * abs(dx.mean()) or dx.mean() <= 0:
        raise ValueError(f"{path}: x column must be a uniform increasing grid")
    grid = GridFunction(arr[0, 0], float(dx.mean()), arr[:, 1])
    return Tabulated(grid, theta_max=theta_max, source=str(path))


_SPEC = re.compile(r"^\s*([a-zA-Z_]+)\s*\(\s*([^)]*)\)\s*$")


def parse_kernel(spec: str) -> DisplacementKernel:
    """Build a kernel from strings such as ``uniform(1.0)`` or ``tabulated(k.csv, 2.0)``."""
    m = _SPEC.match(spec)
    if not m:
        raise ValueError(f"cannot parse kernel spec {spec!r}")
    name, args = m.group(1).lower(), [a.strip() for a in m.group(2).split(",") if a.strip()]
    if name == "tabulated":
        if not args:
            raise ValueError("tabulated kernel needs a CSV path")
        theta = float(args[1]) if len(args) > 1 else None
        return load_tabulated(Path(args[0]), theta_max=theta)
    families = {"uniform": Uniform, "gaussian": Gaussian, "normal": Gaussian, "laplace": Laplace}
    if name not in families:
        raise ValueError(f"unknown kernel family {name!r}")
    vals = [float(a) for a in args] or [1.0]
    if len(vals) != 1:
        raise ValueError(f"{name} takes one parameter")
    return families[name](vals[0])


def cell_weights(kernel: DisplacementKernel, dx: float) -> np.ndarray:
    """Probabilities of the cells ``[(m - 1/2) dx, (m + 1/2) dx)``, m = -M..M.

    The weights are built from the tail so they sum to one exactly (up to
    rounding) and are mirrored so the discrete kernel is exactly symmetric.
    """
    M = int(np.ceil(kernel.support_radius / dx + 0.5))
    m = np.arange(0, M + 1)
    r = kernel.tail((m + 0.5) * dx)
    right = np.empty(M + 1)
    right[0] = 1 - 2 * r[0]
    right[1:] = r[:-1] - r[1:]
    right = np.maximum(right, 0.0)
    return np.concatenate([right[:0:-1], right])


def mgf_diverges(kernel: DisplacementKernel, steps: int = 6) -> bool:
    """Numerical check that mgf(theta)/theta grows without bound as theta -> theta_max."""
    tm = kernel.theta_max
    if np.isinf(tm):
        ts = 2.0 ** np.arange(0, steps)
    else:
        ts = tm * (1 - 10.0 ** -np.arange(1, steps + 1))
    with np.errstate(over="ignore"):
        c = np.asarray(kernel.mgf(ts), dtype=float) / ts
    tail = c[-3:]
    return bool(np.all(np.diff(tail) > 0) and tail[-1] > 100 * np.min(c))
