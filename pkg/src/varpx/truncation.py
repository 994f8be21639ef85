"""Truncations T_k, their C^2 smoothing T_{k,eps}, the primitive G_k and chi_k.

All functions are vectorized over ``z``.

The smoothing uses the quartic transition g(s) = s - s^3 + s^4/2 on
s = (|z| - k)/eps in [0, 1]; it matches value, slope and curvature of the
identity at s = 0 and of the constant k + eps/2 at s = 1, so the result is
C^2, nondecreasing, concave on the positive half line, and has
|T''| <= 1.5/eps.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, UnsupportedError

__all__ = ["t_k", "t_k_eps", "g_k", "chi_k", "SmoothTruncation"]


def _check_level(k) -> None:
    if not np.all(np.asarray(k) > 0):
        raise DomainError("truncation level k must be positive")


def t_k(z, k):
    _check_level(k)
    return np.clip(z, -k, k)


def _g(s, order: int):
    if order == 0:
        return s - s**3 + 0.5 * s**4
    if order == 1:
        return (1 - s) ** 2 * (1 + 2 * s)
    return 6 * s * (s - 1)


def t_k_eps(z, k, eps, order: int = 0):
    """Smoothed truncation or its first/second derivative."""
    _check_level(k)
    if not eps > 0:
        raise DomainError("smoothing width must be positive")
    if order not in (0, 1, 2):
        raise UnsupportedError("only derivative orders 0, 1, 2 are available")
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    sign = np.sign(z)
    s = np.clip((a - k) / eps, 0.0, 1.0)
    band = a <= k
    tail = a >= k + eps
    if order == 0:
        out = sign * (k + eps * _g(s, 0))
        out = np.where(band, z, out)
        out = np.where(tail, sign * (k + eps / 2), out)
    elif order == 1:
        out = np.where(band, 1.0, np.where(tail, 0.0, _g(s, 1)))
    else:
        out = np.where(band | tail, 0.0, sign * _g(s, 2) / eps)
    return out if out.ndim else float(out)


def g_k(s, k):
    """Primitive of T_k vanishing at 0."""
    _check_level(k)
    a = np.abs(s)
    return np.where(a <= k, 0.5 * a * a, k * a - 0.5 * k * k)


def chi_k(z, k):
    """Indicator of the closed band |z| <= k, as floats."""
    _check_level(k)
    return (np.abs(z) <= k).astype(float)


class SmoothTruncation:
    """Callable wrapper around :func:`t_k_eps` for a fixed (k, eps)."""

    curvature_bound = 1.5

    def __init__(self, k: float, eps: float):
        _check_level(k)
        if not eps > 0:
            raise DomainError("smoothing width must be positive")
        self.k = float(k)
        self.eps = float(eps)
        # g(s) = s - s^3 + s^4/2
        self.coefficients = (0.0, 1.0, 0.0, -1.0, 0.5)

    def __call__(self, z, order: int = 0):
        return t_k_eps(z, self.k, self.eps, order)

    def __repr__(self):
        return f"SmoothTruncation(k={self.k}, eps={self.eps})"
