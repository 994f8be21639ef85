"""Modulars, the Luxemburg norm and convergence checks in L^{p(t,x)}.

Every integral here uses the midpoint rule of :mod:`varpx.grid`: the
integrand and the exponent are both sampled at cell centroids and step
midpoints, so an exponent jump placed on a time node never straddles a
quadrature point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .exponent import ExponentField
from .grid import CellField, GridFunction, cell_values
from .mollify import mollify_space
from .reports import EstimateReport

__all__ = [
    "Sampled",
    "sample",
    "modular",
    "luxemburg_norm",
    "holder_check",
    "ModularConvergence",
    "modular_convergence",
    "MollifierCheck",
    "mollifier_modular_check",
    "product_l1_distance",
]

BISECTION_RTOL = 1e-10
BISECTION_MAXITER = 200
BRACKET_LIMIT = 2.0**100


@dataclass(frozen=True)
class Sampled:
    """|f| and p at the quadrature points, plus the quadrature weights."""

    magnitude: np.ndarray    # (steps, n_cells)
    exponent: np.ndarray     # (steps, n_cells)
    weights: np.ndarray      # (n_cells,) cell volume times tau

    def modular(self, lam: float = 1.0) -> float:
        if not lam > 0:
            raise DomainError("scale lambda must be positive")
        with np.errstate(over="ignore"):
            vals = np.power(self.magnitude / lam, self.exponent)
        return float(np.sum(vals @ self.weights))

    def integral(self) -> float:
        return float(np.sum(self.magnitude @ self.weights))


def sample(f, field: ExponentField, time: str = "average") -> Sampled:
    """Sample a GridFunction or CellField together with the exponent."""
    if isinstance(f, GridFunction):
        mag = np.abs(cell_values(f, time))
    elif isinstance(f, CellField):
        mag = f.magnitude()
    else:
        raise DomainError("expected a GridFunction or CellField")
    mesh, tg = f.mesh, f.timegrid
    return Sampled(mag, field.on_cells(mesh, tg), mesh.volumes * tg.tau)


def modular(f, field: ExponentField, lam: float = 1.0, time: str = "average") -> float:
    """Midpoint-rule value of the integral of |f / lam|^p."""
    if not lam > 0:
        raise DomainError("scale lambda must be positive")
    return sample(f, field, time).modular(lam)


def _norm_from_samples(s: Sampled) -> float:
    m = s.modular(1.0)
    if m == 0.0:
        return 0.0
    if not math.isfinite(m):
        raise OverflowError("modular is not finite")
    active = s.exponent[s.magnitude > 0]
    pmin, pmax = float(active.min()), float(active.max())
    a, b = m ** (1 / pmin), m ** (1 / pmax)
    lo, hi = min(a, b), max(a, b)
    while s.modular(hi) > 1.0:
        hi *= 2.0
        if hi > BRACKET_LIMIT * max(1.0, max(a, b)):
            raise OverflowError("Luxemburg bracket expansion overflowed")
    while s.modular(lo) <= 1.0:
        hi = lo
        lo /= 2.0
        if lo < max(a, b) / BRACKET_LIMIT:
            raise OverflowError("Luxemburg bracket contraction underflowed")
    for _ in range(BISECTION_MAXITER):
        if hi - lo <= BISECTION_RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if s.modular(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def luxemburg_norm(f, field: ExponentField, time: str = "average") -> float:
    """inf{lam > 0 : modular(f, lam) <= 1}, by bracketing and bisection.

    The returned value is the upper end of the final bracket, so the
    modular at the returned scale never exceeds one.
    """
    return _norm_from_samples(sample(f, field, time))


def holder_check(f, g, field: ExponentField, time: str = "average") -> EstimateReport:
    """Check  int |f g| <= 2 ||f||_p ||g||_{p'}."""
    sf = sample(f, field, time)
    conj = field.conjugate_field()
    sg = sample(g, conj, time)
    lhs = float(np.sum((sf.magnitude * sg.magnitude) @ sf.weights))
    rhs = 2.0 * _norm_from_samples(sf) * _norm_from_samples(sg)
    return EstimateReport("holder", lhs, rhs, tolerance=1e-12 * max(1.0, rhs))


@dataclass(frozen=True)
class ModularConvergence:
    classification: str                  # "strong", "modular-only" or "none"
    lambdas: tuple[float, ...]
    last_modulars: tuple[float, ...]     # modular of the last difference per lambda
    tolerance: float


def _difference(a, b):
    if isinstance(a, GridFunction):
        return a - b
    return CellField(a.mesh, a.timegrid, a.values - b.values)


def modular_convergence(sequence: Sequence, limit, field: ExponentField,
                        lambdas: Sequence[float] = (4.0, 1.0, 0.25, 0.0625),
                        tolerance: float = 1e-6) -> ModularConvergence:
    """Classify convergence of ``sequence`` to ``limit`` on a finite scale grid.

    A scale counts as converged when the modular of the last difference is
    at most ``tolerance``.  All scales converged means strong convergence;
    some of them, modular convergence only.
    """
    if len(sequence) == 0:
        raise DomainError("empty sequence")
    last = sample(_difference(sequence[-1], limit), field)
    values = tuple(last.modular(lam) for lam in lambdas)
    hits = [v <= tolerance for v in values]
    if all(hits):
        label = "strong"
    elif any(hits):
        label = "modular-only"
    else:
        label = "none"
    return ModularConvergence(label, tuple(float(l) for l in lambdas), values, tolerance)


@dataclass(frozen=True)
class MollifierCheck:
    kappas: tuple[float, ...]
    norms: tuple[float, ...]
    decreasing: bool
    below_tolerance: bool
    tolerance: float


def mollifier_modular_check(f: GridFunction, psi, field: ExponentField,
                            kappas: Sequence[float], tolerance: float = 1e-2
                            ) -> MollifierCheck:
    """Luxemburg norm of (f^kappa - f) psi for each kappa.

    ``psi`` is a nodal array or a callable of the node coordinates; its
    support must keep at least max(kappas) away from the boundary.
    """
    mesh = f.mesh
    psi_vals = np.asarray(psi(mesh.nodes) if callable(psi) else psi, dtype=float)
    support = np.abs(psi_vals) > 0
    if np.any(mesh.distance_to_boundary(mesh.nodes[support]) < max(kappas) * (1 - 1e-12)):
        raise DomainError("cutoff support is closer than kappa to the boundary")
    norms = []
    for kappa in kappas:
        moll = mollify_space(f, kappa)
        diff = f.with_values((moll.values - f.values) * psi_vals[None, :], dirichlet=False)
        norms.append(luxemburg_norm(diff, field))
    decreasing = all(b <= a for a, b in zip(norms, norms[1:]))
    return MollifierCheck(tuple(kappas), tuple(norms), decreasing,
                          norms[-1] <= tolerance, tolerance)


def product_l1_distance(phi_n, psi_n, phi, psi) -> float:
    """Midpoint-rule L1 distance between phi_n psi_n and phi psi."""
    def vals(u):
        if isinstance(u, GridFunction):
            return cell_values(u, "average")
        return u.values
    diff = vals(phi_n) * vals(psi_n) - vals(phi) * vals(psi)
    mesh, tg = phi.mesh, phi.timegrid
    return float(np.sum(np.abs(diff) @ mesh.volumes) * tg.tau)
