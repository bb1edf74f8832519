"""Asymptotic front speed, critical decay rate and large-deviation rate.

The speed function ``c(lam) = mgf(lam) / lam`` is strictly convex on
``(0, theta_max)`` and blows up at both ends, so it has a unique minimiser
``lam_star``; the minimum value is the front speed ``a``.  ``lam_star`` is
located twice: by golden-section search on ``c`` and by Newton's method on
``g(lam) = lam * mgf'(lam) - mgf(lam)``, whose root is the same point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .kernels import DisplacementKernel

GOLDEN = (math.sqrt(5) - 1) / 2


class BracketFailure(RuntimeError):
    """No interior minimum of c(lam) was found below the decay-rate cap."""


class SpeedBelowCritical(ValueError):
    """Requested speed is below the minimal speed a."""


@dataclass(frozen=True)
class SpeedReport:
    kernel: DisplacementKernel
    a: float
    lambda_star: float
    bracket: tuple[float, float]
    lambda_golden: float
    lambda_newton: float
    newton_iterations: int = field(default=0, compare=False)

    def c_of_lambda(self, lam):
        return self.kernel.mgf(lam) / lam

    @property
    def slope_at_minimum(self) -> float:
        """c'(lam_star) = g(lam_star) / lam_star**2, zero at an exact minimiser."""
        lam = self.lambda_star
        k = self.kernel
        return float((lam * k.mgf_prime(lam) - k.mgf(lam)) / lam ** 2)


def _c(kernel, lam):
    return kernel.mgf(lam) / lam


def bracket_minimum(kernel: DisplacementKernel, start: float = 1e-3, max_steps: int = 400):
    """Double lam from ``start`` until c has increased twice in a row."""
    cap = kernel.theta_max
    lams = [start]
    cs = [float(_c(kernel, start))]
    rises = 0
    for _ in range(max_steps):
        nxt = 2 * lams[-1]
        if nxt >= cap:
            nxt = 0.5 * (lams[-1] + cap)
            if cap - nxt <= 1e-12 * cap:
                break
        val = float(_c(kernel, nxt))
        lams.append(nxt)
        cs.append(val)
        rises = rises + 1 if val > cs[-2] else 0
        if rises == 2:
            j = int(np.argmin(cs))
            lo = lams[j - 1] if j > 0 else 0.5 * lams[0]
            return lo, lams[j + 1]
    raise BracketFailure(
        f"c(lam) kept decreasing up to lam={lams[-1]:.6g} (cap {cap}); "
        "the kernel violates the mgf(theta)/theta -> inf assumption")


def golden_section(f, lo, hi, xtol: float = 0.0, max_iter: int = 200):
    """Minimise a unimodal ``f`` on [lo, hi]; stops when the bracket stops shrinking."""
    g = GOLDEN
    a, b = lo, hi
    x1 = b - g * (b - a)
    x2 = a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= xtol:
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
        if not (a < x1 < x2 < b):
            break
    return 0.5 * (a + b)


def _newton_root(kernel, lam0, lo, hi, max_iter=60):
    lam = lam0
    for it in range(1, max_iter + 1):
        g = lam * kernel.mgf_prime(lam) - kernel.mgf(lam)
        dg = lam * kernel.mgf_second(lam)
        step = float(g / dg)
        new = lam - step
        if not (lo < new < hi):
            # fall back to a bisection step toward the sign change
            new = 0.5 * (lo + lam) if g > 0 else 0.5 * (lam + hi)
        if abs(new - lam) <= 4 * np.finfo(float).eps * lam:
            return float(new), it
        if g > 0:
            hi = min(hi, lam)
        else:
            lo = max(lo, lam)
        lam = new
    return float(lam), max_iter


def compute_lambda_star(kernel: DisplacementKernel, tol: float = 1e-10) -> SpeedReport:
    """Minimise c(lam) = mgf(lam)/lam over (0, theta_max).

    Golden-section search runs on c evaluated in extended precision, because
    near a minimum c is flat to second order and double precision would stop
    it at a relative error near 1e-8.  Newton's method then polishes the root
    of lam*mgf' - mgf.
    """
    lo, hi = bracket_minimum(kernel)
    ld = np.longdouble
    lam_g = float(golden_section(lambda t: _c(kernel, ld(t)), ld(lo), ld(hi)))
    lam_n, its = _newton_root(kernel, lam_g, lo, hi)
    rep = SpeedReport(kernel=kernel, a=float(_c(kernel, lam_n)), lambda_star=lam_n,
                      bracket=(float(lo), float(hi)), lambda_golden=lam_g,
                      lambda_newton=lam_n, newton_iterations=its)
    if abs(lam_g - lam_n) > max(tol, 1e-8) * max(1.0, lam_n) * 100:
        raise BracketFailure(f"golden ({lam_g}) and Newton ({lam_n}) disagree")
    return rep


def parse_speed(token, a: float) -> float:
    """Read speeds like ``1.5a``, ``a`` or ``0.9``."""
    if isinstance(token, (int, float)):
        return float(token)
    s = str(token).strip().lower().replace("*", "")
    if s.endswith("a"):
        head = s[:-1]
        return (float(head) if head else 1.0) * a
    return float(s)


def lambda_for_speed(kernel: DisplacementKernel, c: float, report: SpeedReport | None = None) -> float:
    """The root lam in (0, lam_star] of mgf(lam)/lam = c, for c >= a."""
    if report is None:
        report = compute_lambda_star(kernel)
    a, ls = report.a, report.lambda_star
    if c < a:
        if c >= a * (1 - 1e-13):
            return ls
        raise SpeedBelowCritical(f"speed {c} is below the minimal speed a={a}")
    f = lambda t: float(_c(kernel, t)) - c
    if f(ls) >= 0:
        return ls
    lo = 0.5 * ls
    while f(lo) < 0:
        lo *= 0.5
        if lo < 1e-300:
            raise BracketFailure("could not bracket lam for the requested speed")
    # c is decreasing on (0, lam_star]
    return brentq(f, lo, ls, xtol=1e-15 * ls, rtol=1e-15, maxiter=500)


def rate_function(kernel: DisplacementKernel, x):
    """Lambda(x) = -(sup_{theta>0} [x*theta - mgf(theta)] + 1) for x > 0.

    The supremum sits where mgf'(theta) = x; it is found by Brent's method.
    Returns -inf when mgf' stays below x up to the decay-rate cap.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    cap = kernel.theta_max
    for i, xv in enumerate(xs):
        if xv <= 0:
            raise ValueError("the rate function is only defined here for x > 0")
        hi = 1.0
        while float(kernel.mgf_prime(hi)) < xv:
            nxt = 2 * hi
            if nxt >= cap:
                nxt = 0.5 * (hi + cap)
                if cap - nxt <= 1e-15 * cap:
                    hi = None
                    break
            hi = nxt
        if hi is None:
            out[i] = -np.inf
            continue
        th = brentq(lambda t: float(kernel.mgf_prime(t)) - xv, 0.0, hi, xtol=1e-15, rtol=1e-15)
        out[i] = -(xv * th - float(kernel.mgf(th)) + 1)
    return out if np.ndim(x) else float(out[0])
