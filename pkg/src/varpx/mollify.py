"""Discrete mollification in space and time, and the time extension of trajectories."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .grid import GridFunction, TimeGrid

__all__ = ["bump", "space_kernel", "mollify_space", "mollify_time", "extend"]


def bump(y):
    """Quartic bump (1 - |y|^2)^2 on |y| < 1, zero outside."""
    y = np.asarray(y, dtype=float)
    return np.where(np.abs(y) < 1.0, (1.0 - y * y) ** 2, 0.0)


def space_kernel(spacing, kappa: float) -> np.ndarray:
    """Normalized radial quartic-bump stencil sampled on the grid offsets.

    The array axes are ordered (y, x) in 2D to match the nodal layout.
    """
    spacing = np.asarray(spacing, dtype=float)
    radius = [int(np.floor(kappa / h + 1e-12)) for h in spacing]
    offsets = [np.arange(-r, r + 1) * h for r, h in zip(radius, spacing)]
    grids = np.meshgrid(*offsets[::-1], indexing="ij")
    dist = np.sqrt(sum(g * g for g in grids)) / kappa
    weights = bump(dist)
    return weights / weights.sum()


def mollify_space(u: GridFunction, kappa: float, extend: bool = True,
                  nodes=None) -> GridFunction:
    """Convolve every time level with the space kernel of radius ``kappa``.

    With ``extend`` the function is continued by zero outside the domain.
    Without it, only the requested ``nodes`` (default all) are evaluated,
    each must lie at least ``kappa`` away from the boundary, and the other
    nodes are returned as NaN.
    """
    mesh = u.mesh
    if kappa < mesh.h * (1 - 1e-12):
        raise DomainError("kappa must be at least one cell width")
    idx = np.arange(mesh.n_nodes) if nodes is None else np.asarray(nodes)
    if not extend:
        near = mesh.distance_to_boundary(mesh.nodes[idx]) < kappa * (1 - 1e-12)
        if np.any(near):
            raise DomainError("mollification requested within kappa of the boundary")
    kernel = space_kernel(mesh.spacing, kappa)
    shape = tuple(reversed(mesh.shape))
    out = np.empty_like(u.values)
    for m, row in enumerate(u.values):
        out[m] = ndimage.correlate(row.reshape(shape), kernel, mode="constant",
                                   cval=0.0).ravel()
    if nodes is not None or not extend:
        masked = np.full_like(out, np.nan)
        masked[:, idx] = out[:, idx]
        out = masked
    return GridFunction(mesh, u.timegrid, out)


def extend(u: GridFunction, u0=None) -> GridFunction:
    """Continue a trajectory to (-T, 2T]: ``u0`` for t <= 0, zero after T."""
    tg = u.timegrid
    if u0 is None:
        u0 = u.values[0]
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (u.mesh.n_nodes,):
        raise DomainError("initial values do not match the mesh")
    M = tg.steps
    values = np.zeros((3 * M + 1, u.mesh.n_nodes))
    values[: M + 1] = u0
    values[M + 1: 2 * M + 1] = u.values[1:]
    grid = TimeGrid(3 * tg.t_end, 3 * M, tg.t_start - tg.t_end)
    return GridFunction(u.mesh, grid, values)


def mollify_time(u: GridFunction, alpha: float, u0=None) -> GridFunction:
    """Convolve in time with the quartic kernel of radius ``alpha``.

    Values outside [0, T] come from :func:`extend`.
    """
    tg = u.timegrid
    if alpha < tg.tau * (1 - 1e-12):
        raise DomainError("alpha must be at least one time step")
    r = int(np.floor(alpha / tg.tau + 1e-12))
    if r > tg.steps:
        raise DomainError("alpha exceeds the time horizon")
    weights = bump(np.arange(-r, r + 1) * tg.tau / alpha)
    weights /= weights.sum()
    ext = extend(u, u0).values
    M = tg.steps
    out = np.zeros_like(u.values)
    for j, w in zip(range(-r, r + 1), weights):
        out += w * ext[M + j: 2 * M + 1 + j]
    return GridFunction(u.mesh, tg, out)
