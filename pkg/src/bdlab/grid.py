"""Functions sampled on a uniform spatial grid.

Values are read as cell averages: node ``x0 + i*dx`` is the centre of the cell
``[x0 + (i - 1/2) dx, x0 + (i + 1/2) dx)``.  For grids whose end values are
zero the cell sum ``dx * sum(values)`` and the trapezoid rule coincide, which
is how every solver in this package builds its grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class GridFunction:
    """Immutable function on the grid ``x0 + dx * arange(len(values))``."""

    x0: float
    dx: float
    values: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.dx) and self.dx > 0):
            raise ValueError(f"grid spacing must be positive, got {self.dx}")
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "dx", float(self.dx))

    def __len__(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.values.size)

    @property
    def x_end(self) -> float:
        return self.x0 + self.dx * (self.values.size - 1)

    def integral(self) -> float:
        """Trapezoid integral over the whole grid."""
        v = self.values
        if v.size < 2:
            return 0.0
        return float(self.dx * (v.sum() - 0.5 * (v[0] + v[-1])))

    def cell_mass(self) -> float:
        return float(self.dx * self.values.sum())

    def cumulative_tail(self) -> np.ndarray:
        """Trapezoid integral from each node to the right end of the grid."""
        v = self.values
        out = np.zeros_like(v)
        if v.size > 1:
            seg = 0.5 * self.dx * (v[1:] + v[:-1])
            out[:-1] = np.cumsum(seg[::-1])[::-1]
        return out

    def tail(self, xs) -> np.ndarray:
        """F(x) = integral of the function over [x, inf), linearly interpolated."""
        xs = np.asarray(xs, dtype=float)
        return np.interp(xs, self.x, self.cumulative_tail())

    def __call__(self, xs) -> np.ndarray:
        return np.interp(np.asarray(xs, dtype=float), self.x, self.values, left=0.0, right=0.0)

    def mean(self) -> float:
        return float(np.sum(self.x * self.values) / np.sum(self.values))

    def scaled(self, factor: float) -> "GridFunction":
        return GridFunction(self.x0, self.dx, self.values * factor)

    @classmethod
    def from_tail(cls, tail: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
                  dx: float) -> "GridFunction":
        """Cell averages of the density whose tail function is ``tail``.

        Cell edges are ``lo + j*dx``, so ``lo`` itself is an edge.  The result
        integrates to ``tail(lo) - tail(hi)`` up to rounding.
        """
        n = int(round((hi - lo) / dx))
        edges = lo + dx * np.arange(n + 1)
        t = np.asarray(tail(edges), dtype=float)
        return cls(lo + 0.5 * dx, dx, np.maximum(t[:-1] - t[1:], 0.0) / dx)


def exponential_density(rate: float = 1.0, dx: float = 0.005, x_max: float | None = None,
                        pad: float = 0.0) -> GridFunction:
    """Cell-averaged Exponential(rate) density on ``[-pad, x_max]``.

    Zero is a cell edge so that no mass sits left of the origin.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    if x_max is None:
        x_max = 40.0 / rate
    pad = dx * np.ceil(pad / dx)
    return GridFunction.from_tail(lambda e: np.exp(-rate * np.maximum(e, 0.0)), -pad, x_max, dx)
