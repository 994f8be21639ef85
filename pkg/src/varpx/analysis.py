"""Diagnostics on computed trajectories.

Test functions, residuals of the weak and entropy formulations, the
a-priori estimates as :class:`EstimateReport` objects, the truncation
Cauchy gap, the G_k uniqueness distance and the boundary cutoff family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import DomainError
from .exponent import ExponentField, classify
from .grid import AtomicMeasure, CellField, GridFunction, Mesh, TimeGrid
from .mollify import bump, extend, mollify_space, mollify_time
from .nonlinearity import Nonlinearity
from .reports import EstimateReport
from .solver import SolveReport, cell_fluxes, step_gradients
from .truncation import chi_k, g_k, t_k

__all__ = [
    "mollify_space",
    "mollify_time",
    "extend",
    "BumpProfile",
    "RampProfile",
    "gamma_ramp",
    "TestFunction",
    "default_basis",
    "WeakResidual",
    "weak_residual",
    "entropy_residual",
    "entropy_residual_series",
    "estimate_trunc_energy",
    "estimate_weighted_energy",
    "estimate_interpolation_bounds",
    "interpolation_exponents",
    "calibrate",
    "truncation_cauchy_gap",
    "gap_integrand",
    "gk_distance",
    "cutoff_family",
    "VanishingCheck",
    "vanishing_check",
]

# max of |d/ds (1 - s^2)^2| on [-1, 1], attained at s = 1/sqrt(3)
_BUMP_SLOPE = 8.0 / (3.0 * math.sqrt(3.0))


def _bump_deriv(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, -4.0 * s * (1.0 - s * s), 0.0)


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class BumpProfile:
    """(1 - ((t - center)/half_width)^2)^2 on the support, zero elsewhere."""

    center: float
    half_width: float

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("bump half-width must be positive")

    def __call__(self, t):
        return bump((np.asarray(t, dtype=float) - self.center) / self.half_width)

    def derivative(self, t):
        s = (np.asarray(t, dtype=float) - self.center) / self.half_width
        return _bump_deriv(s) / self.half_width

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width

    @property
    def sup(self) -> float:
        return 1.0

    @property
    def slope_sup(self) -> float:
        return _BUMP_SLOPE / self.half_width


@dataclass(frozen=True)
class RampProfile:
    """0 outside [eta - tau, beta + tau], 1 on [eta, beta], affine in between."""

    eta: float
    beta: float
    tau: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        up = (t - (self.eta - self.tau)) / self.tau
        down = ((self.beta + self.tau) - t) / self.tau
        return np.clip(np.minimum(up, down), 0.0, 1.0)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        rising = (t > self.eta - self.tau) & (t < self.eta)
        falling = (t > self.beta) & (t < self.beta + self.tau)
        return np.where(rising, 1.0 / self.tau, np.where(falling, -1.0 / self.tau, 0.0))

    @property
    def support(self) -> tuple[float, float]:
        return self.eta - self.tau, self.beta + self.tau

    @property
    def sup(self) -> float:
        return 1.0

    @property
    def slope_sup(self) -> float:
        return 1.0 / self.tau


def gamma_ramp(eta: float, beta: float, tau: float, t_end: float | None = None) -> RampProfile:
    """Piecewise affine approximation of the indicator of [eta, beta].

    With ``t_end`` given, the ramps must stay inside (-t_end, t_end).
    """
    if not tau > 0 or not eta < beta:
        raise DomainError("ramp needs tau > 0 and eta < beta")
    if t_end is not None and not (-t_end < eta - tau and beta + tau < t_end):
        raise DomainError("ramp window leaves (-T, T)")
    return RampProfile(float(eta), float(beta), float(tau))


@dataclass(frozen=True)
class TestFunction:
    """Separable phi(t, x) = time(t) * prod_a bump((x_a - c_a)/w_a)."""

    __test__ = False  # not a pytest class

    time: BumpProfile | RampProfile
    centers: tuple[float, ...]
    half_widths: tuple[float, ...]

    def _factors(self, x):
        x = np.asarray(x, dtype=float)
        return [(x[..., a] - c) / w for a, (c, w) in enumerate(zip(self.centers, self.half_widths))]

    def space(self, x) -> np.ndarray:
        out = 1.0
        for s in self._factors(x):
            out = out * bump(s)
        return np.asarray(out)

    def space_gradient(self, x) -> np.ndarray:
        s = self._factors(x)
        vals = [bump(si) for si in s]
        grads = []
        for a, (si, w) in enumerate(zip(s, self.half_widths)):
            g = _bump_deriv(si) / w
            for b, v in enumerate(vals):
                if b != a:
                    g = g * v
            grads.append(g)
        return np.stack(grads, axis=-1)

    def __call__(self, t: float, x) -> np.ndarray:
        return float(self.time(t)) * self.space(x)

    def dt(self, t, x) -> np.ndarray:
        return float(self.time.derivative(t)) * self.space(x)

    def grad(self, t, x) -> np.ndarray:
        return float(self.time(t)) * self.space_gradient(x)

    def w1inf_norm(self) -> float:
        """sup|phi| + sup|d_t phi| + sum_a sup|d_a phi| for the separable form."""
        space_slope = sum(_BUMP_SLOPE / w for w in self.half_widths)
        return self.time.sup + self.time.slope_sup + self.time.sup * space_slope

    def supported_in(self, mesh: Mesh, t_end: float) -> bool:
        inside = all(lo < c - w and c + w < hi
                     for (lo, hi), c, w in zip(mesh.extent, self.centers, self.half_widths))
        return inside and self.time.support[1] < t_end


def default_basis(mesh: Mesh, timegrid: TimeGrid) -> list[TestFunction]:
    """Tensor bumps on a 3-point lattice per axis (time included) with two widths."""
    T = timegrid.t_end
    t0 = timegrid.t_start
    basis = []
    for wt, wx in ((0.15, 0.15), (0.3, 0.25)):
        for ct in (0.0, 0.3, 0.6):
            time = BumpProfile(t0 + ct * T, wt * T)
            axes = [[lo + f * (hi - lo) for f in (0.3, 0.5, 0.7)] for lo, hi in mesh.extent]
            widths = tuple(wx * (hi - lo) for lo, hi in mesh.extent)
            for centers in product(*axes):
                basis.append(TestFunction(time, tuple(centers), widths))
    return basis


# ---------------------------------------------------------------------------
# residuals


def _flux_field(u: GridFunction, flux) -> np.ndarray:
    if isinstance(flux, CellField):
        return flux.values
    if isinstance(flux, Nonlinearity):
        return cell_fluxes(flux, u.mesh, u.timegrid, step_gradients(u.mesh, u.values[1:]))
    return np.asarray(flux, dtype=float)


def _pair_source(f, phi: TestFunction, mesh: Mesh, tg: TimeGrid) -> float:
    if f is None:
        return 0.0
    if isinstance(f, AtomicMeasure):
        return f.pair(lambda t, *x: float(phi(t, np.array(x))))
    vals = np.asarray(f.step_average() if isinstance(f, GridFunction) else f, dtype=float)
    if vals.ndim == 1:
        vals = np.broadcast_to(vals, (tg.steps, mesh.n_nodes))
    total = 0.0
    for m, t in enumerate(tg.midpoints):
        total += tg.tau * float((vals[m] * phi(float(t), mesh.nodes)) @ mesh.lumped_mass)
    return total


def _pair_initial(u0, phi: TestFunction, mesh: Mesh, t0: float) -> float:
    if u0 is None:
        return 0.0
    if isinstance(u0, AtomicMeasure):
        return u0.pair(lambda *x: float(phi(t0, np.array(x))))
    return float((np.asarray(u0, dtype=float) * phi(t0, mesh.nodes)) @ mesh.lumped_mass)


@dataclass(frozen=True)
class WeakResidual:
    residuals: np.ndarray    # raw r(phi) per basis element
    norms: np.ndarray        # W^{1,inf} norms of the basis elements
    basis_size: int

    @property
    def normalized(self) -> np.ndarray:
        return np.abs(self.residuals) / self.norms

    @property
    def max_normalized(self) -> float:
        return float(self.normalized.max(initial=0.0))


def weak_residual(u: GridFunction, flux, f=None, u0=None,
                  basis: Sequence[TestFunction] | None = None) -> WeakResidual:
    """r(phi) = -int u d_t phi + int Abar . grad phi - <f, phi> - <u0, phi(0)>.

    ``flux`` is a CellField / array of shape (steps, n_cells, d), or the
    operator, in which case it is evaluated from the gradients of ``u``.
    The trajectory is read right-continuously, test functions and the
    flux at step midpoints; ``f`` and ``u0`` may be atomic.
    """
    mesh, tg = u.mesh, u.timegrid
    basis = default_basis(mesh, tg) if basis is None else list(basis)
    A = _flux_field(u, flux)
    u_right = u.step_right()
    res = np.empty(len(basis))
    for i, phi in enumerate(basis):
        total = 0.0
        for m, t in enumerate(tg.midpoints):
            t = float(t)
            total -= tg.tau * float((u_right[m] * phi.dt(t, mesh.nodes)) @ mesh.lumped_mass)
            total += tg.tau * float(np.einsum("cd,cd,c->", A[m], phi.grad(t, mesh.centroids),
                                              mesh.volumes))
        total -= _pair_source(f, phi, mesh, tg)
        total -= _pair_initial(u0, phi, mesh, tg.t_start)
        res[i] = total
    norms = np.array([phi.w1inf_norm() for phi in basis])
    return WeakResidual(res, norms, len(basis))


def entropy_residual_series(u: GridFunction, operator: Nonlinearity, phi, k: float,
                            f: GridFunction | None = None, u0=None) -> np.ndarray:
    """Entropy residual at every time node.

    Uses the quadrature of the scheme: lumped mass for G_k and for the
    source, the time derivative of phi as differences of nodal levels, and
    the flux of the level closing each step.  ``phi`` is a TestFunction or
    None (phi = 0).  The flux is taken from grad T_K(u) with K above
    sup|u| + sup|phi| + k, which on the grid is grad u itself.
    """
    mesh, tg = u.mesh, u.timegrid
    if u0 is None:
        u0 = u.values[0]
    u0 = np.asarray(u0, dtype=float)
    if phi is None:
        phis = np.zeros((tg.steps + 1, mesh.n_nodes))
    else:
        phis = np.stack([phi(float(t), mesh.nodes) for t in tg.times])
        phis[:, mesh.boundary] = 0.0
    K = float(np.abs(u.values).max() + np.abs(phis).max() + k + 1.0)
    uK = t_k(u.values[1:], K)
    A = cell_fluxes(operator, mesh, tg, step_gradients(mesh, uK))
    w = t_k(u.values[1:] - phis[1:], k)
    loads = (np.zeros((tg.steps, mesh.n_nodes)) if f is None
             else f.step_average() * mesh.lumped_mass[None, :])
    dphi = (phis[1:] - phis[:-1]) * mesh.lumped_mass[None, :]
    per_step = (np.sum(w * dphi, axis=1)
                + tg.tau * np.einsum("mcd,mcd,c->m", A, step_gradients(mesh, w), mesh.volumes)
                - tg.tau * np.sum(loads * w, axis=1))
    g_now = g_k(u.values - phis, k) @ mesh.lumped_mass
    g_init = float(g_k(u0 - phis[0], k) @ mesh.lumped_mass)
    return (g_now - g_init) + np.concatenate([[0.0], np.cumsum(per_step)])


def entropy_residual(u: GridFunction, f, u0, phi, k: float, t: float,
                     operator: Nonlinearity) -> float:
    """Signed entropy residual at the time node ``t``; <= 0 for entropy solutions."""
    m = u.timegrid.node_at(t)
    return float(entropy_residual_series(u, operator, phi, k, f, u0)[m])


def report_entropy_residual(report: SolveReport, phi, k: float) -> float:
    """Largest entropy residual over all time nodes of a solve."""
    return float(np.max(entropy_residual_series(
        report.trajectory, report.problem.operator, phi, k, report.f_n, report.u0_n)))


# ---------------------------------------------------------------------------
# a-priori estimates


def _data_l1(report: SolveReport) -> tuple[float, float]:
    mesh, tg = report.mesh, report.timegrid
    f_l1 = float(tg.tau * np.sum(np.abs(report.f_n.step_average()) @ mesh.lumped_mass))
    u0_l1 = float(np.abs(report.u0_n) @ mesh.lumped_mass)
    return f_l1, u0_l1


def _cells_right(report: SolveReport, nodal_steps: np.ndarray) -> np.ndarray:
    return (report.mesh.centroid_matrix @ nodal_steps.T).T


def _modular_cells(vals: np.ndarray, expo: np.ndarray, mesh: Mesh, tg: TimeGrid) -> float:
    with np.errstate(divide="ignore"):
        integrand = np.where(vals > 0, np.power(np.abs(vals), expo), 0.0)
    return float(tg.tau * np.sum(integrand @ mesh.volumes))


def estimate_trunc_energy(report: SolveReport, k: float,
                          constant: float | None = None) -> EstimateReport:
    """sup_t ||u||_1 + int |grad T_k u|^p + int |A chi_k|^{p'} against its bound.

    Without ``constant`` the report carries only the raw left side; the
    bound is constant * (1 + k) * (1 + ||f||_1 + ||u0||_1 + ||h||_inf |Omega_T|).
    """
    mesh, tg = report.mesh, report.timegrid
    if not k > 0:
        raise DomainError("k must be positive")
    u = report.trajectory.values
    op = report.problem.operator
    p = op.field.on_cells(mesh, tg)
    sup_l1 = float(np.max(np.abs(u) @ mesh.lumped_mass))
    grad_tk = step_gradients(mesh, t_k(u[1:], k))
    grad_term = _modular_cells(np.linalg.norm(grad_tk, axis=-1), p, mesh, tg)
    A = cell_fluxes(op, mesh, tg, step_gradients(mesh, u[1:]))
    chi = chi_k(_cells_right(report, u[1:]), k)
    pc = np.where(p > 1, p / np.maximum(p - 1, 1e-300), np.inf)
    a_norm = np.linalg.norm(A, axis=-1) * chi
    flux_term = _modular_cells(a_norm, pc, mesh, tg) if np.all(p > 1) else math.inf
    lhs = sup_l1 + grad_term + flux_term
    f_l1, u0_l1 = _data_l1(report)
    scale = (1 + k) * (1 + f_l1 + u0_l1 + op.h_sup(mesh, tg) * mesh.measure * tg.t_end)
    params = {"k": float(k), "n": report.n, "scale": scale, "sup_l1": sup_l1,
              "grad": grad_term, "flux": flux_term}
    rep = EstimateReport("trunc_energy", lhs, None, 0.0, params)
    return rep if constant is None else rep.with_rhs(constant * scale)


def estimate_weighted_energy(report: SolveReport, lam: float,
                             constant: float | None = None) -> EstimateReport:
    """int A . grad u / (1 + |u|)^lam against constant * lam/(lam-1) * (||f||_1 + ||u0||_1 + 1)."""
    if not lam > 1:
        raise DomainError("weighted energy needs lambda > 1")
    mesh, tg = report.mesh, report.timegrid
    u = report.trajectory.values
    op = report.problem.operator
    grads = step_gradients(mesh, u[1:])
    A = cell_fluxes(op, mesh, tg, grads)
    weight = (1.0 + np.abs(_cells_right(report, u[1:]))) ** (-lam)
    work = np.einsum("mcd,mcd->mc", A, grads) * weight
    lhs = float(tg.tau * np.sum(work @ mesh.volumes))
    f_l1, u0_l1 = _data_l1(report)
    scale = lam / (lam - 1) * (f_l1 + u0_l1 + 1)
    params = {"lambda": float(lam), "n": report.n, "scale": scale}
    rep = EstimateReport("weighted_energy", lhs, None, 0.0, params)
    return rep if constant is None else rep.with_rhs(constant * scale)


def interpolation_exponents(p, lam: float, d: int):
    """(p - lam + p/d, zeta, xi) with zeta = p - lam d/(d+1) and xi = zeta/(p-1)."""
    p = np.asarray(p, dtype=float)
    zeta = p - lam * d / (d + 1)
    return p - lam + p / d, zeta, zeta / (p - 1)


def estimate_interpolation_bounds(report: SolveReport, lam: float
                                  ) -> tuple[EstimateReport, EstimateReport, EstimateReport]:
    """Space-time modulars of |u|^{p-lam+p/d}, |grad u|^zeta and |A|^xi."""
    field = report.problem.field
    mesh, tg = report.mesh, report.timegrid
    d = mesh.dimension
    if not 1 < lam < field.p_min:
        raise DomainError(f"lambda must lie in (1, p_min={field.p_min})")
    if not classify(field, d).weak_ii:
        raise DomainError("exponent is not weak-II admissible")
    u = report.trajectory.values
    p = field.on_cells(mesh, tg)
    e_u, zeta, xi = interpolation_exponents(p, lam, d)
    grads = step_gradients(mesh, u[1:])
    A = cell_fluxes(report.problem.operator, mesh, tg, grads)
    values = (
        ("interp_u", _modular_cells(np.abs(_cells_right(report, u[1:])), e_u, mesh, tg)),
        ("interp_grad", _modular_cells(np.linalg.norm(grads, axis=-1), zeta, mesh, tg)),
        ("interp_flux", _modular_cells(np.linalg.norm(A, axis=-1), xi, mesh, tg)),
    )
    return tuple(EstimateReport(name, val, None, 0.0, {"lambda": float(lam), "n": report.n})
                 for name, val in values)


def calibrate(reports: Sequence[EstimateReport], safety: float = 5.0) -> float:
    """Constant from the first (coarsest) report: safety * lhs / scale."""
    first = reports[0]
    scale = first.params["scale"]
    return safety * first.lhs / scale if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# truncation gap, uniqueness distance


def _cutoff_cells(mesh: Mesh, psi) -> np.ndarray:
    if callable(psi):
        return np.asarray(psi(mesh.centroids), dtype=float)
    psi = np.asarray(psi, dtype=float)
    if psi.shape == (mesh.n_nodes,):
        return mesh.centroid_matrix @ psi
    if psi.shape == (mesh.n_cells,):
        return psi
    raise DomainError("cutoff does not match the mesh")


def gap_integrand(u_a: GridFunction, u_b: GridFunction, k: float, psi,
                  operator: Nonlinearity) -> np.ndarray:
    """(A(grad T_k u_a) - A(grad T_k u_b)) . (grad T_k u_a - grad T_k u_b) psi per cell."""
    mesh, tg = u_a.mesh, u_a.timegrid
    if u_b.mesh != mesh or u_b.timegrid != tg:
        raise DomainError("trajectories live on different grids")
    ga = step_gradients(mesh, t_k(u_a.values[1:], k))
    gb = step_gradients(mesh, t_k(u_b.values[1:], k))
    Aa = cell_fluxes(operator, mesh, tg, ga)
    Ab = cell_fluxes(operator, mesh, tg, gb)
    return np.einsum("mcd,mcd->mc", Aa - Ab, ga - gb) * _cutoff_cells(mesh, psi)[None, :]


def truncation_cauchy_gap(u_a: GridFunction, u_b: GridFunction, k: float, mu: float, psi,
                          operator: Nonlinearity) -> float:
    """int |(A(grad T_k u_a) - A(grad T_k u_b)) . (grad T_k u_a - grad T_k u_b) psi|^mu."""
    if not 0 < mu < 1:
        raise DomainError("mu must lie in (0, 1)")
    vals = np.abs(gap_integrand(u_a, u_b, k, psi, operator)) ** mu
    tg = u_a.timegrid
    return float(tg.tau * np.sum(vals @ u_a.mesh.volumes))


def gk_distance(u_a: GridFunction, u_b: GridFunction, k: float, t: float) -> float:
    """int_Omega G_k(u_a(t) - u_b(t)) with lumped quadrature."""
    if u_a.mesh != u_b.mesh:
        raise DomainError("trajectories live on different meshes")
    diff = u_a.at_time(t) - u_b.at_time(t)
    return float(g_k(diff, k) @ u_a.mesh.lumped_mass)


# ---------------------------------------------------------------------------
# boundary cutoffs


def _ramp(s):
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - (1.0 - s * s) ** 2


def cutoff_family(mesh: Mesh, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodal psi_j and the node mask of Omega_j = {dist(x, boundary) > 1/j}.

    psi_j is the product over axes of a quartic ramp rising from 0 at
    distance 1/(2j) to 1 at distance 1/j from the faces of that axis.
    """
    if j < 1:
        raise DomainError("j must be a positive integer")
    width = 1.0 / (2 * j)
    if width < 2 * mesh.h * (1 - 1e-12):
        raise DomainError(f"cutoff layer 1/(2j)={width} is not resolved by two cells")
    if any(hi - lo <= 2.0 / j for lo, hi in mesh.extent):
        raise DomainError("Omega_j is empty")
    psi = np.ones(mesh.n_nodes)
    for a, (lo, hi) in enumerate(mesh.extent):
        x = mesh.nodes[:, a]
        dist = np.minimum(x - lo, hi - x)
        psi *= _ramp((dist - width) / width)
    inner = mesh.distance_to_boundary(mesh.nodes) > 1.0 / j
    return psi, inner


@dataclass(frozen=True)
class VanishingCheck:
    js: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.values, self.values[1:]))


def vanishing_check(u: GridFunction, field: ExponentField, js: Sequence[int]) -> VanishingCheck:
    """int int |u grad psi_j|^p for every j."""
    mesh, tg = u.mesh, u.timegrid
    p = field.on_cells(mesh, tg)
    u_cells = (mesh.centroid_matrix @ u.step_right().T).T
    values = []
    for j in js:
        psi, _ = cutoff_family(mesh, j)
        grad = np.linalg.norm((mesh.gradient_matrix @ psi).reshape(mesh.n_cells, -1), axis=-1)
        values.append(_modular_cells(np.abs(u_cells) * grad[None, :], p, mesh, tg))
    return VanishingCheck(tuple(int(j) for j in js), tuple(values))
