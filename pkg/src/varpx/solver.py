"""Implicit Euler / P1 solver for  u_t - div A(t, x, grad u) = f  with zero Dirichlet data.

Each time step m solves the Galerkin system

    M (u_m - u_{m-1}) / tau + sum_cells |K| A(t_{m-1/2}, x_K, grad u_m) . grad phi = M f_m

for all interior P1 basis functions phi.  ``M`` is the lumped mass, the
flux uses one-point quadrature per cell with the exponent sampled at the
cell centroid and the step midpoint, and ``f_m`` is the step average of
the nodal source.  The nonlinear system is the gradient of a strictly
convex energy whenever A has a potential, which the damped Newton line
search exploits.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve

from .errors import DomainError, SolverError
from .exponent import ExponentField, classify
from .grid import AtomicMeasure, GridFunction, Mesh, TimeGrid, spacetime_l1
from .nonlinearity import Nonlinearity, flux, flux_jacobian, potential_density
from .truncation import g_k, t_k

__all__ = [
    "Problem",
    "SolveReport",
    "LedgerEntry",
    "regularize_data",
    "solve",
    "energy_ledger",
    "approximation_sequence",
    "ApproximationSequence",
    "cell_fluxes",
    "DELTA_SCHEDULE",
]

log = logging.getLogger(__name__)

DELTA_SCHEDULE = (1e-2, 1e-4, 1e-6, 1e-8)
MAX_NEWTON = 50
MAX_HALVINGS = 8


# ---------------------------------------------------------------------------
# data regularization


def _tent_1d(s, n):
    return n * np.maximum(0.0, 1.0 - n * np.abs(s))


def _discrete_delta(mesh: Mesh, point) -> np.ndarray:
    """Nodal values whose lumped-mass pairing with P1 functions is evaluation at ``point``."""
    point = np.asarray(point, dtype=float)
    out = np.zeros(mesh.n_nodes)
    verts = mesh.nodes[mesh.cells]
    for c, v in enumerate(verts):
        edges = (v[1:] - v[:1]).T
        bary_tail = np.linalg.solve(edges, point - v[0])
        bary = np.concatenate([[1 - bary_tail.sum()], bary_tail])
        if np.all(bary >= -1e-12):
            out[mesh.cells[c]] = np.clip(bary, 0, 1) / mesh.lumped_mass[mesh.cells[c]]
            return out
    raise DomainError(f"point {point} is outside the mesh")


def _atom_profile(mesh: Mesh, x0, n: int) -> np.ndarray:
    vals = np.ones(mesh.n_nodes)
    for a in range(mesh.dimension):
        vals *= _tent_1d(mesh.nodes[:, a] - x0[a], n)
    return vals


def _renormalize(vals: np.ndarray, mass: float, weight: float) -> np.ndarray:
    return vals * (abs(weight) / mass) * np.sign(weight) if mass > 0 else vals


def _tent_smooth(mesh: Mesh, nodal: np.ndarray, n: int) -> np.ndarray:
    """Discrete convolution with a normalized tent of half-width 1/n, zero extension."""
    from scipy import ndimage

    kernels = []
    for h in mesh.spacing:
        r = int(math.floor(1.0 / (n * h) + 1e-12))
        w = np.maximum(0.0, 1.0 - n * h * np.abs(np.arange(-r, r + 1)))
        kernels.append(w / w.sum())
    kernel = kernels[0] if mesh.dimension == 1 else np.outer(kernels[1], kernels[0])
    shape = tuple(reversed(mesh.shape))
    rows = np.atleast_2d(nodal)
    out = np.stack([ndimage.correlate(r.reshape(shape), kernel, mode="constant").ravel()
                    for r in rows])
    return out if np.ndim(nodal) == 2 else out[0]


def regularize_data(data, n: int, mesh: Mesh, timegrid: TimeGrid | None = None,
                    method: str = "clamp"):
    """Bounded approximation of level ``n`` of a datum.

    Function data (nodal array for the domain, GridFunction for the
    cylinder) are truncated at height n (``method="clamp"``) or smoothed
    with a tent kernel of half-width 1/n (``method="tent"``).  Atoms
    become tents of half-width 1/n in every direction, clipped to the
    domain and rescaled so that their discrete mass equals |weight|.
    Spatial data return a nodal array with zero boundary values; space-time
    data return a GridFunction.
    """
    if n < 1:
        raise DomainError("regularization level must be >= 1")
    if method not in ("clamp", "tent"):
        raise DomainError(f"unknown regularization {method!r}")
    if data is None:
        return np.zeros(mesh.n_nodes) if timegrid is None else GridFunction.zeros(mesh, timegrid)
    if isinstance(data, AtomicMeasure):
        data.validate(mesh, timegrid)
        if data.location_dimension == mesh.dimension or not data.atoms:
            out = np.zeros(mesh.n_nodes)
            for loc, w in data.atoms:
                prof = _atom_profile(mesh, loc, n)
                prof[mesh.boundary] = 0.0
                mass = float(prof @ mesh.lumped_mass)
                if mass <= 0:
                    prof = _discrete_delta(mesh, loc)
                    prof[mesh.boundary] = 0.0
                    mass = float(prof @ mesh.lumped_mass)
                out += _renormalize(prof, mass, w)
            if timegrid is None:
                return out
            return GridFunction.constant_in_time(mesh, timegrid, out)
        if timegrid is None:
            raise DomainError("space-time atoms need a time grid")
        vals = np.zeros((timegrid.steps + 1, mesh.n_nodes))
        for loc, w in data.atoms:
            t0, x0 = loc[0], loc[1:]
            space = _atom_profile(mesh, x0, n)
            if float(space @ mesh.lumped_mass) <= 0:
                space = _discrete_delta(mesh, x0)
            time = _tent_1d(timegrid.times - t0, n)
            if np.all(0.5 * (time[1:] + time[:-1]) == 0):
                m = min(max(int(math.ceil((t0 - timegrid.t_start) / timegrid.tau)), 1),
                        timegrid.steps)
                time = np.zeros_like(time)
                time[m - 1: m + 1] = 1.0
            prof = time[:, None] * space[None, :]
            step_mass = timegrid.tau * np.sum(0.5 * (prof[1:] + prof[:-1]) @ mesh.lumped_mass)
            vals += _renormalize(prof, step_mass, w)
        return GridFunction(mesh, timegrid, vals)
    if isinstance(data, GridFunction):
        vals = (np.clip(data.values, -n, n) if method == "clamp"
                else _tent_smooth(mesh, data.values, n))
        return data.with_values(vals, dirichlet=False)
    nodal = np.asarray(data, dtype=float)
    if nodal.shape != (mesh.n_nodes,):
        raise DomainError("nodal data do not match the mesh")
    out = np.clip(nodal, -n, n) if method == "clamp" else _tent_smooth(mesh, nodal, n)
    out = np.array(out)
    out[mesh.boundary] = 0.0
    return out


# ---------------------------------------------------------------------------
# problem and reports


@dataclass(frozen=True)
class Problem:
    """Mesh, time grid, operator and data of one parabolic problem.

    ``f`` is a space-time GridFunction, an AtomicMeasure (space-time atoms)
    or None; ``u0`` a nodal array, an AtomicMeasure on the domain, or None.
    """

    mesh: Mesh
    timegrid: TimeGrid
    operator: Nonlinearity
    f: object = None
    u0: object = None
    mode: str = "entropy"
    regularization: str = "clamp"

    def __post_init__(self):
        if self.mode not in ("weak", "weak-II", "entropy"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if not classify(self.field, self.mesh.dimension).allows(self.mode):
            raise DomainError(f"exponent with p_min={self.field.p_min} does not admit "
                              f"{self.mode} solutions in d={self.mesh.dimension}")
        for datum in (self.f, self.u0):
            if isinstance(datum, AtomicMeasure):
                datum.validate(self.mesh, self.timegrid)

    @property
    def field(self) -> ExponentField:
        return self.operator.field

    def with_regularization(self, method: str) -> "Problem":
        return replace(self, regularization=method)


@dataclass(frozen=True)
class LedgerEntry:
    k: float
    t: float
    lhs: float
    rhs: float

    @property
    def imbalance(self) -> float:
        """lhs - rhs; nonpositive for the implicit scheme up to solver tolerance."""
        return self.lhs - self.rhs


@dataclass(frozen=True)
class SolveReport:
    problem: Problem
    n: int
    trajectory: GridFunction
    f_n: GridFunction
    u0_n: np.ndarray
    iterations: tuple[int, ...]
    residuals: tuple[float, ...]
    tolerance: float
    halvings: tuple[int, ...] = ()
    ledger: tuple[LedgerEntry, ...] = field(default=(), repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.problem.mesh

    @property
    def timegrid(self) -> TimeGrid:
        return self.problem.timegrid

    def residual_contract_holds(self) -> bool:
        sup = np.max(np.abs(self.trajectory.values[1:]), axis=1)
        return bool(np.all(np.asarray(self.residuals) <= self.tolerance * (1 + sup)))


# ---------------------------------------------------------------------------
# one time step


class _Step:
    """Residual, Jacobian and energy of one implicit step on the free nodes."""

    def __init__(self, operator: Nonlinearity, mesh: Mesh, p: np.ndarray, t_mid: float,
                 tau: float, u_prev: np.ndarray, load: np.ndarray):
        self.op = operator
        self.mesh = mesh
        self.p = p
        self.t_mid = t_mid
        self.tau = tau
        self.free = mesh.interior
        self.B = mesh.gradient_matrix[:, self.free].tocsr()
        self.mass = mesh.lumped_mass[self.free]
        self.u_prev = u_prev[self.free]
        self.load = load[self.free]
        self.vol = mesh.volumes
        self.d = mesh.dimension

    def grads(self, v):
        return (self.B @ v).reshape(self.mesh.n_cells, self.d)

    def _flux(self, xi, delta):
        if self.op.kind == "custom":
            return np.asarray(self.op.custom_flux(self.t_mid, self.mesh.centroids, xi, self.p))
        return flux(xi, self.p, delta)

    def residual(self, v, delta):
        a = self._flux(self.grads(v), delta)
        return (self.mass * (v - self.u_prev) / self.tau
                + self.B.T @ (self.vol[:, None] * a).ravel() - self.load)

    def jacobian(self, v, delta):
        xi = self.grads(v)
        if self.op.kind == "custom":
            eps = 1e-7 * (1 + np.abs(xi).max())
            blocks = np.empty((len(xi), self.d, self.d))
            for k in range(self.d):
                e = np.zeros(self.d)
                e[k] = eps
                blocks[:, :, k] = (self._flux(xi + e, delta) - self._flux(xi - e, delta)) / (2 * eps)
        else:
            blocks = flux_jacobian(xi, self.p, delta)
        nc, d = len(xi), self.d
        blocks = self.vol[:, None, None] * blocks
        base = np.arange(nc)[:, None, None] * d
        rows = np.broadcast_to(base + np.arange(d)[None, :, None], blocks.shape)
        cols = np.broadcast_to(base + np.arange(d)[None, None, :], blocks.shape)
        D = sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(nc * d, nc * d))
        return (self.B.T @ D @ self.B + sp.diags(self.mass / self.tau)).tocsc()

    def energy(self, v, delta):
        dens = potential_density(self.grads(v), self.p, delta)
        dv = v - self.u_prev
        return float(dens @ self.vol + 0.5 * np.sum(self.mass * dv * dv) / self.tau
                     - self.load @ v)


def _newton(step: _Step, v: np.ndarray, delta: float, jac_delta: float, tol: float,
            max_iter: int = MAX_NEWTON):
    """Damped Newton with Armijo backtracking; returns (v, iterations, converged)."""
    use_energy = step.op.has_potential
    R = step.residual(v, delta)
    for it in range(max_iter + 1):
        if np.max(np.abs(R), initial=0.0) <= tol * (1 + np.max(np.abs(v), initial=0.0)):
            return v, it, True
        if it == max_iter:
            break
        try:
            dv = spsolve(step.jacobian(v, jac_delta), -R)
        except RuntimeError:
            return v, it, False
        if not np.all(np.isfinite(dv)):
            return v, it, False
        slope = float(R @ dv)
        e0 = step.energy(v, delta) if use_energy else 0.0
        energy_mode = use_energy and -slope > 1e-11 * (1 + abs(e0))
        r0 = float(np.linalg.norm(R))
        s = 1.0
        while True:
            trial = v + s * dv
            if energy_mode:
                ok = step.energy(trial, delta) <= e0 + 1e-4 * s * slope
                R_trial = step.residual(trial, delta) if ok else None
            else:
                R_trial = step.residual(trial, delta)
                ok = np.linalg.norm(R_trial) <= (1 - 1e-4 * s) * r0
            if ok:
                break
            s *= 0.5
            if s < 1e-10:
                return v, it, False
        v, R = trial, R_trial
    return v, max_iter, False


def _minimize(step: _Step, v: np.ndarray, delta: float) -> np.ndarray:
    res = minimize(lambda w: step.energy(w, delta), v,
                   jac=lambda w: step.residual(w, delta), method="L-BFGS-B",
                   options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-12})
    return res.x


def _solve_step(step: _Step, v0: np.ndarray, tol: float) -> tuple[np.ndarray, int, bool]:
    op = step.op
    linear = op.kind != "custom" and np.all(step.p == 2.0)
    target = op.delta
    jac_floor = max(target, DELTA_SCHEDULE[-1])
    v, total = v0.copy(), 0
    if not linear:
        for delta in DELTA_SCHEDULE:
            if delta <= target:
                break
            v_try, it, ok = _newton(step, v, delta, delta, max(tol, 1e-7))
            total += it
            if ok:
                v = v_try
    v_fin, it, ok = _newton(step, v, target, jac_floor if not linear else target, tol)
    total += it
    if not ok and op.has_potential:
        log.debug("Newton failed; trying convex minimization")
        v_min = _minimize(step, v, target)
        v_fin, it, ok = _newton(step, v_min, target, jac_floor, tol)
        total += it
    return v_fin, total, ok


def _advance(problem: Problem, u_prev: np.ndarray, t0: float, tau: float,
             load: np.ndarray, tol: float, depth: int, step_index: int):
    """Advance by tau, halving tau on failure; returns (u, iterations, residual, halvings)."""
    mesh = problem.mesh
    t_mid = t0 + 0.5 * tau
    p = problem.field(np.full(mesh.n_cells, t_mid), mesh.centroids)
    step = _Step(problem.operator, mesh, p, t_mid, tau, u_prev, load)
    v, iters, ok = _solve_step(step, u_prev[mesh.interior], tol)
    if ok:
        u = np.zeros(mesh.n_nodes)
        u[mesh.interior] = v
        res = float(np.max(np.abs(step.residual(v, problem.operator.delta)), initial=0.0))
        return u, iters, res, 0
    if depth >= MAX_HALVINGS:
        raise SolverError(f"time step {step_index} failed after {depth} halvings", step_index)
    log.info("step %d: halving tau to %g", step_index, tau / 2)
    u_half, i1, _, h1 = _advance(problem, u_prev, t0, tau / 2, load, tol, depth + 1, step_index)
    u_full, i2, res, h2 = _advance(problem, u_half, t0 + tau / 2, tau / 2, load, tol,
                                   depth + 1, step_index)
    return u_full, iters + i1 + i2, res, 1 + h1 + h2


def solve(problem: Problem, n: int, tol: float = 1e-9,
          ledger_k: Sequence[float] = (1.0,)) -> SolveReport:
    """Solve the problem with data regularized at level ``n``."""
    mesh, tg = problem.mesh, problem.timegrid
    method = problem.regularization
    f_n = regularize_data(problem.f, n, mesh, tg, method)
    u0_n = regularize_data(problem.u0, n, mesh, None, method)
    loads = f_n.step_average() * mesh.lumped_mass[None, :]
    values = np.zeros((tg.steps + 1, mesh.n_nodes))
    values[0] = u0_n
    iters, resid, halv = [], [], []
    for m in range(1, tg.steps + 1):
        u, it, res, h = _advance(problem, values[m - 1], tg.times[m - 1], tg.tau,
                                 loads[m - 1], tol, 0, m)
        values[m] = u
        iters.append(it)
        resid.append(res)
        halv.append(h)
    traj = GridFunction(mesh, tg, values, dirichlet=True)
    report = SolveReport(problem, n, traj, f_n, u0_n, tuple(iters), tuple(resid), tol,
                         tuple(halv))
    if ledger_k:
        report = replace(report, ledger=tuple(energy_ledger(report, ledger_k)))
    return report


# ---------------------------------------------------------------------------
# energy ledger


def cell_fluxes(operator: Nonlinearity, mesh: Mesh, timegrid: TimeGrid,
                grads: np.ndarray) -> np.ndarray:
    """A(t_{m-1/2}, x_K, grads[m]) for stacked per-step cell gradients (steps, nc, d)."""
    p = operator.field.on_cells(mesh, timegrid)
    if operator.kind == "custom":
        out = np.empty_like(grads)
        for m, t in enumerate(timegrid.midpoints):
            out[m] = operator.custom_flux(t, mesh.centroids, grads[m], p[m])
        return out
    return flux(grads, p, operator.delta)


def step_gradients(mesh: Mesh, nodal_steps: np.ndarray) -> np.ndarray:
    """Cell gradients of stacked nodal rows, shape (rows, n_cells, d)."""
    g = (mesh.gradient_matrix @ np.atleast_2d(nodal_steps).T).T
    return g.reshape(-1, mesh.n_cells, mesh.dimension)


def energy_ledger(report: SolveReport, ks: Sequence[float]) -> list[LedgerEntry]:
    """Both sides of the truncated energy balance at every time node.

    lhs(t) = int G_k(u(t)) - G_k(u_0);  rhs(t) = -int_0^t int A . grad T_k(u)
    + int_0^t int f T_k(u), with the same quadrature as the scheme.
    """
    mesh, tg = report.mesh, report.timegrid
    u = report.trajectory.values
    fluxes = cell_fluxes(report.problem.operator, mesh, tg, step_gradients(mesh, u[1:]))
    loads = report.f_n.step_average() * mesh.lumped_mass[None, :]
    out = []
    for k in ks:
        tk = t_k(u[1:], k)
        work = np.einsum("mcd,mcd,c->m", fluxes, step_gradients(mesh, tk), mesh.volumes)
        source = np.sum(loads * tk, axis=1)
        rhs = np.concatenate([[0.0], np.cumsum(tg.tau * (source - work))])
        g0 = float(g_k(report.u0_n, k) @ mesh.lumped_mass)
        lhs = g_k(u, k) @ mesh.lumped_mass - g0
        out.extend(LedgerEntry(float(k), float(t), float(a), float(b))
                   for t, a, b in zip(tg.times, lhs, rhs))
    return out


# ---------------------------------------------------------------------------
# approximation sequence


@dataclass(frozen=True)
class ApproximationSequence:
    ns: tuple[int, ...]
    reports: tuple[SolveReport, ...]
    distances: tuple[float, ...]

    @property
    def monotone_decrease(self) -> bool:
        return all(b < a for a, b in zip(self.distances, self.distances[1:]))


def _workers() -> int:
    env = os.environ.get("VARPX_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def approximation_sequence(problem: Problem, ns: Sequence[int], tol: float = 1e-9,
                           ledger_k: Sequence[float] = (1.0,),
                           workers: int | None = None) -> ApproximationSequence:
    """Solve at every level of ``ns`` (increasing) and tabulate successive L1 distances."""
    ns = tuple(int(n) for n in ns)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("regularization levels must increase")
    workers = workers or _workers()
    if workers > 1 and len(ns) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = tuple(pool.map(lambda n: solve(problem, n, tol, ledger_k), ns))
    else:
        reports = tuple(solve(problem, n, tol, ledger_k) for n in ns)
    distances = tuple(spacetime_l1(b.trajectory - a.trajectory)
                      for a, b in zip(reports, reports[1:]))
    return ApproximationSequence(ns, reports, distances)
