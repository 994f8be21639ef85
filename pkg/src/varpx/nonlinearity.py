"""The operator A(t, x, xi) and numerical checks of its structural assumptions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, UnsupportedError
from .exponent import ExponentField, conjugate
from .grid import Mesh, TimeGrid
from .reports import EstimateReport

__all__ = [
    "Nonlinearity",
    "flux",
    "flux_jacobian",
    "potential_density",
    "check_coercivity_growth",
    "check_monotonicity",
    "check_vanishing",
    "random_samples",
]


def _norm2(xi: np.ndarray) -> np.ndarray:
    return np.sum(xi * xi, axis=-1)


def flux(xi, p, delta: float = 0.0) -> np.ndarray:
    """(delta^2 + |xi|^2)^((p-2)/2) xi, and 0 at xi = 0 when delta = 0."""
    xi = np.asarray(xi, dtype=float)
    p = np.asarray(p, dtype=float)
    s = _norm2(xi) + delta * delta
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(s > 0, np.power(s, 0.5 * (p - 2.0)), 0.0)
    return factor[..., None] * xi


def flux_jacobian(xi, p, delta: float) -> np.ndarray:
    """d flux / d xi, shape (..., d, d); needs delta > 0 where xi may vanish."""
    xi = np.asarray(xi, dtype=float)
    p = np.asarray(p, dtype=float)
    s = _norm2(xi) + delta * delta
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.power(s, 0.5 * (p - 2.0))
        b = np.where((p == 2.0) | (s == 0), 0.0, (p - 2.0) * np.power(s, 0.5 * (p - 4.0)))
    d = xi.shape[-1]
    return (a[..., None, None] * np.eye(d)
            + b[..., None, None] * xi[..., :, None] * xi[..., None, :])


def potential_density(xi, p, delta: float = 0.0) -> np.ndarray:
    """Convex potential whose xi-gradient is :func:`flux`."""
    xi = np.asarray(xi, dtype=float)
    p = np.asarray(p, dtype=float)
    s = _norm2(xi) + delta * delta
    return (np.power(s, 0.5 * p) - delta**p) / p


@dataclass(frozen=True)
class Nonlinearity:
    """A(t, x, xi) with coercivity constant ``c`` and bound ``h``.

    ``h`` is a constant or a callable ``h(t, x)``.  A ``custom`` operator
    supplies ``custom_flux(t, x, xi, p)``; it has no potential.
    """

    field: ExponentField
    kind: str = "prototype"
    delta: float = 0.0
    c: float = 2.0
    h: float | Callable = 0.0
    custom_flux: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("prototype", "regularized", "custom"):
            raise DomainError(f"unknown operator kind {self.kind!r}")
        if self.kind == "regularized" and not self.delta > 0:
            raise DomainError("regularized operator needs delta > 0")
        if self.kind == "custom" and self.custom_flux is None:
            raise DomainError("custom operator needs custom_flux")

    @classmethod
    def prototype(cls, field: ExponentField, **kw) -> "Nonlinearity":
        return cls(field, "prototype", **kw)

    @classmethod
    def regularized(cls, field: ExponentField, delta: float, **kw) -> "Nonlinearity":
        return cls(field, "regularized", delta=delta, **kw)

    @property
    def has_potential(self) -> bool:
        return self.kind != "custom"

    def h_values(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if callable(self.h):
            return np.broadcast_to(self.h(t, x), x.shape[:-1])
        return np.full(x.shape[:-1], float(self.h))

    def h_sup(self, mesh: Mesh, timegrid: TimeGrid) -> float:
        if not callable(self.h):
            return abs(float(self.h))
        t = np.repeat(timegrid.midpoints[:, None], mesh.n_cells, axis=1)
        x = np.broadcast_to(mesh.centroids, (timegrid.steps,) + mesh.centroids.shape)
        return float(np.max(np.abs(self.h_values(t, x))))

    def flux_with_p(self, xi, p, delta: float | None = None) -> np.ndarray:
        """Flux for already-sampled exponents; ``delta`` overrides the operator's."""
        if self.kind == "custom":
            raise UnsupportedError("custom operators need (t, x); use eval")
        return flux(xi, p, self.delta if delta is None else delta)

    def eval(self, t, x, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        x = np.asarray(x, dtype=float)
        p = self.field(t, x)
        if self.kind == "custom":
            return np.asarray(self.custom_flux(t, x, xi, p), dtype=float)
        return flux(xi, p, self.delta)

    def potential(self, t, x, xi) -> np.ndarray:
        if not self.has_potential:
            raise UnsupportedError("custom operators carry no potential")
        return potential_density(xi, self.field(t, np.asarray(x, dtype=float)), self.delta)


def random_samples(field: ExponentField, mesh: Mesh, timegrid: TimeGrid, n: int,
                   rng: np.random.Generator, scale: float = 10.0):
    """Uniform (t, x) in the cylinder and Gaussian xi scaled to ``scale``."""
    d = mesh.dimension
    t = rng.uniform(timegrid.t_start, timegrid.t_final, size=n)
    lo = np.array([e[0] for e in mesh.extent])
    hi = np.array([e[1] for e in mesh.extent])
    x = lo + (hi - lo) * rng.uniform(size=(n, d))
    xi = rng.normal(size=(n, d)) * scale / np.sqrt(d)
    return t, x, xi


def check_coercivity_growth(A: Nonlinearity, t, x, xi, c: float | None = None,
                            h=None, tolerance: float = 1e-10) -> EstimateReport:
    """Largest |xi|^p + |A|^{p'} - c A.xi - h over the samples (should be <= 0).

    The reported value is relative to max(1, c A.xi + h), which keeps the
    floating-point floor independent of the sample scale; the absolute
    worst case is kept in ``params``.
    """
    c = A.c if c is None else float(c)
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p = A.field(t, x)
    a = A.eval(t, x, xi)
    hv = A.h_values(t, x) if h is None else np.broadcast_to(
        h(t, x) if callable(h) else float(h), p.shape)
    work = np.sum(a * xi, axis=-1)
    lhs = (np.power(np.sqrt(_norm2(xi)), p)
           + np.power(np.sqrt(_norm2(a)), conjugate(p)))
    rhs = c * work + hv
    violation = lhs - rhs
    worst = float(np.max(violation))
    relative = float(np.max(violation / np.maximum(1.0, np.abs(rhs))))
    return EstimateReport("A2 coercivity-growth", relative, 0.0, tolerance,
                          {"c": c, "absolute": worst, "samples": int(len(p))})


def check_monotonicity(A: Nonlinearity, t, x, xi, eta,
                       tolerance: float = 1e-12) -> EstimateReport:
    """Smallest (A(xi) - A(eta)).(xi - eta) over the pairs (should be >= 0)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    pairing = np.sum((A.eval(t, x, xi) - A.eval(t, x, eta)) * (xi - eta), axis=-1)
    worst = float(np.min(pairing))
    return EstimateReport("A3 monotonicity", -worst, 0.0, tolerance,
                          {"min_pairing": worst, "samples": int(len(pairing))})


def check_vanishing(A: Nonlinearity, t, x) -> EstimateReport:
    """max |A(t, x, 0)|; passes only when exactly zero."""
    x = np.asarray(x, dtype=float)
    zero = np.zeros_like(x)
    worst = float(np.max(np.abs(A.eval(t, x, zero))))
    return EstimateReport("A4 vanishing", worst, 0.0, 0.0, {"samples": int(len(x))})
