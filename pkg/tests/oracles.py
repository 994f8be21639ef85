"""Reference computations that do not share code with the package.

Frozen numbers below were produced by these routines (or by hand) and
are compared against the package in the tests.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

# exp(-pi^2 * 0.1)
HEAT_PEAK_T01 = 0.37270783885343794
# int_0^1 (1/2 - x)^2 dx and int_0^1 x(1-x)/2 dx
STATIONARY_GRAD_ENERGY = 1.0 / 12.0
STATIONARY_MASS = 1.0 / 12.0
# 1 + g(1/2) with g(s) = s - s^3 + s^4/2
SMOOTH_TRUNC_AT_1_5 = 1.40625
# max over node spacings s = j/8 of (s/2)|log s| for p = 2 + x/2 on h = 1/8
LOG_HOLDER_HALF_SLOPE_H8 = max((j / 8) / 2 * abs(math.log(j / 8)) for j in range(1, 8))
# first halved radius below 0.05 starting from 0.5 (halving 0.5, 0.25, ...)
COVERING_RADIUS_EPS_01 = 0.03125


def luxemburg_brentq(values, exponents, weights) -> float:
    """Luxemburg norm by root finding on log(lambda); independent of the bisection."""
    values = np.abs(np.asarray(values, dtype=float))
    if not np.any(values > 0):
        return 0.0

    def excess(log_lam):
        return float(np.sum(weights * (values / math.exp(log_lam)) ** exponents)) - 1.0

    lo, hi = -60.0, 60.0
    return math.exp(brentq(excess, lo, hi, xtol=1e-15, rtol=1e-14))


def split_domain_norm() -> float:
    """f = 2 with p = 1 on half the domain and p = 2 on the other half."""
    # y/2 + y^2/2 = 1 with y = 2/lambda
    y = (-1 + math.sqrt(1 + 8)) / 2
    return 2.0 / y


def sin_l1() -> float:
    return quad(lambda x: abs(math.sin(math.pi * x)), 0, 1)[0]


def heat_exact(t, x):
    return np.exp(-np.pi**2 * t) * np.sin(np.pi * x)


def trapezoid_tent_area(n: int, h: float, center: float = 0.5) -> float:
    """Trapezoid rule on nodes of spacing h of the tent of height n, half-width 1/n."""
    x = np.arange(0, 1 + h / 2, h)
    tent = n * np.maximum(0.0, 1 - n * np.abs(x - center))
    return float(np.sum(0.5 * (tent[1:] + tent[:-1])) * h)


def gk_closed(s, k):
    a = abs(s)
    return quad(lambda z: min(z, k), 0, a, points=[k] if k < a else None)[0]
