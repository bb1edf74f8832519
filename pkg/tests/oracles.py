"""Independent reference values and checkers used by the tests.

Frozen constants were computed once with mpmath at 50 significant digits
from closed-form characterisations that do not use the package:

* Uniform(1): the minimiser of sinh(l)/l**2 solves tanh(l) = l/2; the
  minimum is sinh(l)/l**2.
* Gaussian(1): c(l) = exp(l**2/2)/l is minimal at l = 1, value sqrt(e).
* Laplace(1): c(l) = 1/(l (1 - l**2)) is minimal at l = 1/sqrt(3), value 1.5*sqrt(3).
* speeds above the minimum: roots of c(l) = target below the minimiser.
"""

import math

import numpy as np
from scipy import integrate

UNIFORM_LAMBDA_STAR = 1.9150080481545374813530030610048156505733625687859
UNIFORM_A = 0.90526173936905825565622147498005711505313172246295
UNIFORM_LAMBDA_1P5A = 0.82227480708379198953619001790902635704262815515286
UNIFORM_LAMBDA_2A = 0.58429469624560958429005782508792815951794736579074
GAUSSIAN_LAMBDA_STAR = 1.0
GAUSSIAN_A = 1.6487212707001281468486507878141635716537761007101
GAUSSIAN_LAMBDA_1P3A = 0.53971190254909946017375020213598392048003496405684
LAPLACE_LAMBDA_STAR = 0.57735026918962576450914878050195745564760175127013
LAPLACE_A = 2.5980762113533159402911695122588085504142078807156
GAUSSIAN_TAIL_AT_1 = 0.1586552539314570514147674543679620775220870332734
# sup over theta of (theta - exp(theta**2/2)), attained at theta*exp(theta**2/2) = 1
GAUSSIAN_SUP_AT_X1 = -0.57477484701549056497328812438348660834852023464462
UNIFORM_HALF_MEAN = 0.25  # integral of x/2 over [0, 1]


def grid_scan_minimum(f, lo, hi, n=10 ** 6):
    """Minimiser of f on an n-point grid followed by a parabola through the
    three points around the discrete minimum."""
    x = np.linspace(lo, hi, n)
    y = f(x)
    i = int(np.clip(np.argmin(y), 1, n - 2))
    x0, x1, x2 = x[i - 1:i + 2]
    y0, y1, y2 = y[i - 1:i + 2]
    h = x1 - x0
    return x1 + 0.5 * h * (y0 - y2) / (y0 - 2 * y1 + y2)


def quad_integral(f, lo, hi, radius):
    """Integral of f over [lo, hi] split at 0 and +-radius (limits may be infinite)."""
    cuts = sorted({lo, hi, *[c for c in (-radius, 0.0, radius) if lo < c < hi]})
    return sum(integrate.quad(f, a, b, limit=400, epsabs=1e-15, epsrel=1e-12)[0]
               for a, b in zip(cuts, cuts[1:]))


def tilted(density, theta):
    """x -> e^{theta x} density(x) without overflow where the density vanishes."""
    def f(x):
        d = float(density(x))
        return math.exp(theta * x + math.log(d)) if d > 0 else 0.0
    return f


def quad_mgf(density, theta, radius):
    return quad_integral(tilted(density, theta), -math.inf, math.inf, radius)


def grid_scan_sup(f, lo, hi, n=10 ** 6):
    x = np.linspace(lo, hi, n)
    y = f(x)
    i = int(np.clip(np.argmax(y), 1, n - 2))
    y0, y1, y2 = y[i - 1:i + 2]
    # parabolic peak value
    return y1 + (y0 - y2) ** 2 / (8 * (2 * y1 - y0 - y2))


def ks_one_sample(samples, cdf):
    s = np.sort(np.asarray(samples))
    n = s.size
    F = cdf(s)
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))


def ks_critical(n, alpha=0.001):
    """Asymptotic one-sample Kolmogorov critical value."""
    return math.sqrt(-0.5 * math.log(alpha / 2)) / math.sqrt(n)
