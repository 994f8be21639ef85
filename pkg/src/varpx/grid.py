"""Tensor meshes, time grids, P1 grid functions and quadrature.

Spatial domains are boxes with homogeneous Dirichlet boundary.  In 1D the
cells are the intervals between consecutive nodes; in 2D every rectangle of
the tensor grid is split into two triangles, so piecewise-linear functions
have exactly one gradient per cell.

Space-time integrals use the midpoint rule: cell centroids in space and step
midpoints in time.  Spatial integrals of nodal data use the lumped P1 mass
(the nodal trapezoid rule on uniform grids).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

__all__ = [
    "Mesh",
    "TimeGrid",
    "GridFunction",
    "CellField",
    "AtomicMeasure",
    "gradient",
    "integrate_spacetime",
    "spatial_integral",
    "l1_norm",
    "sup_t_l1",
    "spacetime_l1",
    "cell_values",
    "write_csv",
    "read_csv",
    "format_float",
]


def format_float(value: float) -> str:
    """Render a float with 17 significant digits (round-trip exact)."""
    return format(float(value), ".17g")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Mesh:
    """Uniform tensor mesh of an interval or a rectangle.

    Parameters
    ----------
    extent : sequence of (lo, hi)
        Interval bounds per axis.
    cells_per_axis : sequence of int
        Number of cells along each axis, at least 2.
    """

    extent: tuple[tuple[float, float], ...]
    cells_per_axis: tuple[int, ...]

    def __post_init__(self):
        extent = tuple((float(lo), float(hi)) for lo, hi in self.extent)
        cells = tuple(int(n) for n in self.cells_per_axis)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "cells_per_axis", cells)
        if len(extent) not in (1, 2):
            raise DomainError("only 1D and 2D meshes are supported")
        if len(cells) != len(extent):
            raise DomainError("extent and cells_per_axis differ in length")
        for (lo, hi), n in zip(extent, cells):
            if not hi > lo:
                raise DomainError(f"empty interval ({lo}, {hi})")
            if n < 2:
                raise DomainError("cells_per_axis must be >= 2 on every axis")

    @classmethod
    def interval(cls, cells: int, lo: float = 0.0, hi: float = 1.0) -> "Mesh":
        return cls(((lo, hi),), (cells,))

    @classmethod
    def rectangle(cls, cells: tuple[int, int],
                  extent=((0.0, 1.0), (0.0, 1.0))) -> "Mesh":
        return cls(tuple(extent), tuple(cells))

    @property
    def dimension(self) -> int:
        return len(self.extent)

    @cached_property
    def spacing(self) -> np.ndarray:
        return _frozen(np.array([(hi - lo) / n for (lo, hi), n
                                 in zip(self.extent, self.cells_per_axis)]))

    @property
    def h(self) -> float:
        """Largest cell width over the axes."""
        return float(self.spacing.max())

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(_frozen(np.linspace(lo, hi, n + 1)) for (lo, hi), n
                     in zip(self.extent, self.cells_per_axis))

    @cached_property
    def shape(self) -> tuple[int, ...]:
        """Node counts per axis."""
        return tuple(n + 1 for n in self.cells_per_axis)

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (N, d); x varies fastest in 2D."""
        if self.dimension == 1:
            pts = self.axes[0][:, None]
        else:
            X, Y = np.meshgrid(self.axes[0], self.axes[1], indexing="xy")
            pts = np.column_stack([X.ravel(), Y.ravel()])
        return _frozen(pts.copy())

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def node_index(self, *idx: int) -> int:
        if self.dimension == 1:
            return idx[0]
        i, j = idx
        return j * self.shape[0] + i

    @cached_property
    def boundary(self) -> np.ndarray:
        """Boolean mask of Dirichlet-tagged nodes."""
        mask = np.zeros(self.n_nodes, dtype=bool)
        for axis, (lo, hi) in enumerate(self.extent):
            coord = self.nodes[:, axis]
            mask |= np.isclose(coord, lo) | np.isclose(coord, hi)
        return _frozen(mask)

    @cached_property
    def interior(self) -> np.ndarray:
        return _frozen(np.flatnonzero(~self.boundary))

    @cached_property
    def cells(self) -> np.ndarray:
        """Cell connectivity, shape (n_cells, d + 1)."""
        if self.dimension == 1:
            n = self.cells_per_axis[0]
            conn = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        else:
            nx, ny = self.cells_per_axis
            i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
            i, j = i.ravel(), j.ravel()
            n00 = j * (nx + 1) + i
            n10 = n00 + 1
            n01 = n00 + nx + 1
            n11 = n01 + 1
            lower = np.column_stack([n00, n10, n11])
            upper = np.column_stack([n00, n11, n01])
            conn = np.empty((2 * lower.shape[0], 3), dtype=int)
            conn[0::2] = lower
            conn[1::2] = upper
        return _frozen(conn)

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @cached_property
    def _geometry(self):
        verts = self.nodes[self.cells]                      # (nc, d+1, d)
        d = self.dimension
        edges = verts[:, 1:, :] - verts[:, :1, :]           # (nc, d, d)
        det = np.linalg.det(edges)
        inv = np.linalg.inv(edges)                          # (nc, d, d)
        # gradients of barycentric coordinates 1..d are rows of inv^T
        grads = np.empty((self.n_cells, d + 1, d))
        grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        volume = np.abs(det) / math.factorial(d)
        return _frozen(grads), _frozen(volume), _frozen(verts.mean(axis=1))

    @property
    def grad_coeffs(self) -> np.ndarray:
        """Gradients of the local P1 basis, shape (n_cells, d + 1, d)."""
        return self._geometry[0]

    @property
    def volumes(self) -> np.ndarray:
        return self._geometry[1]

    @property
    def centroids(self) -> np.ndarray:
        return self._geometry[2]

    @cached_property
    def gradient_matrix(self) -> sp.csr_matrix:
        """Sparse map from nodal values to stacked cell gradients (n_cells*d, N)."""
        nc, d = self.n_cells, self.dimension
        rows = (np.arange(nc)[:, None, None] * d
                + np.arange(d)[None, None, :]).repeat(d + 1, axis=1)
        cols = np.broadcast_to(self.cells[:, :, None], (nc, d + 1, d))
        return sp.csr_matrix((self.grad_coeffs.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(nc * d, self.n_nodes))

    @cached_property
    def centroid_matrix(self) -> sp.csr_matrix:
        """Sparse map from nodal values to centroid values (n_cells, N)."""
        nc, k = self.n_cells, self.dimension + 1
        rows = np.repeat(np.arange(nc), k)
        return sp.csr_matrix((np.full(nc * k, 1.0 / k), (rows, self.cells.ravel())),
                             shape=(nc, self.n_nodes))

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        k = self.dimension + 1
        mass = np.zeros(self.n_nodes)
        np.add.at(mass, self.cells.ravel(), np.repeat(self.volumes / k, k))
        return _frozen(mass)

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.extent]))

    @property
    def diameter(self) -> float:
        return float(math.hypot(*[hi - lo for lo, hi in self.extent]))

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Closed-domain membership for points of shape (..., d)."""
        pts = np.asarray(points, dtype=float)
        inside = np.ones(pts.shape[:-1], dtype=bool)
        for axis, (lo, hi) in enumerate(self.extent):
            inside &= (pts[..., axis] >= lo - tol) & (pts[..., axis] <= hi + tol)
        return inside

    def distance_to_boundary(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        dist = np.full(pts.shape[:-1], np.inf)
        for axis, (lo, hi) in enumerate(self.extent):
            dist = np.minimum(dist, np.minimum(pts[..., axis] - lo, hi - pts[..., axis]))
        return dist

    def refined(self, factor: int = 2) -> "Mesh":
        return Mesh(self.extent, tuple(n * factor for n in self.cells_per_axis))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [t_start, t_start + t_end]; t_end is the length T."""

    t_end: float
    steps: int
    t_start: float = 0.0

    def __post_init__(self):
        if not self.t_end > 0:
            raise DomainError("t_end must be positive")
        if int(self.steps) < 1:
            raise DomainError("steps must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "t_start", float(self.t_start))

    @property
    def tau(self) -> float:
        return self.t_end / self.steps

    @cached_property
    def times(self) -> np.ndarray:
        return _frozen(self.t_start + self.tau * np.arange(self.steps + 1))

    @cached_property
    def midpoints(self) -> np.ndarray:
        return _frozen(self.t_start + self.tau * (np.arange(self.steps) + 0.5))

    @property
    def t_final(self) -> float:
        return self.t_start + self.t_end

    def node_at(self, t: float) -> int:
        """Index of the time node equal to ``t`` (within rounding)."""
        m = int(round((t - self.t_start) / self.tau))
        if m < 0 or m > self.steps or not math.isclose(self.times[m], t,
                                                        rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError(f"t={t} is not a node of the time grid")
        return m

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_end, self.steps * factor, self.t_start)


@dataclass(frozen=True)
class GridFunction:
    """Nodal values of a space-time function, shape (steps + 1, n_nodes).

    A backward-Euler trajectory is read as piecewise constant in time,
    continuous from the right at nodes: on (t_{m-1}, t_m] it equals the
    level-m values.  Data fields are read at step midpoints instead
    (average of the two bounding levels).
    """

    mesh: Mesh
    timegrid: TimeGrid
    values: np.ndarray
    dirichlet: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.timegrid.steps + 1, self.mesh.n_nodes)
        if values.shape != expected:
            raise DomainError(f"values have shape {values.shape}, expected {expected}")
        if self.dirichlet and np.any(values[:, self.mesh.boundary] != 0.0):
            raise DomainError("Dirichlet-tagged function is nonzero on the boundary")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def from_callable(cls, mesh: Mesh, timegrid: TimeGrid,
                      fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      dirichlet: bool = False) -> "GridFunction":
        """Sample ``fn(t, x)`` at all nodes; x has shape (N, d)."""
        vals = np.empty((timegrid.steps + 1, mesh.n_nodes))
        for m, t in enumerate(timegrid.times):
            vals[m] = np.broadcast_to(fn(t, mesh.nodes), (mesh.n_nodes,))
        if dirichlet:
            vals[:, mesh.boundary] = 0.0
        return cls(mesh, timegrid, vals, dirichlet)

    @classmethod
    def constant_in_time(cls, mesh: Mesh, timegrid: TimeGrid, nodal,
                         dirichlet: bool = False) -> "GridFunction":
        vals = np.tile(np.asarray(nodal, dtype=float), (timegrid.steps + 1, 1))
        if dirichlet:
            vals[:, mesh.boundary] = 0.0
        return cls(mesh, timegrid, vals, dirichlet)

    @classmethod
    def zeros(cls, mesh: Mesh, timegrid: TimeGrid) -> "GridFunction":
        return cls(mesh, timegrid, np.zeros((timegrid.steps + 1, mesh.n_nodes)), True)

    def at_node(self, m: int) -> np.ndarray:
        return self.values[m]

    def at_time(self, t: float) -> np.ndarray:
        tg = self.timegrid
        if t <= tg.t_start:
            return self.values[0]
        m = int(math.ceil((t - tg.t_start) / tg.tau - 1e-9))
        return self.values[min(m, tg.steps)]

    def step_right(self) -> np.ndarray:
        return self.values[1:]

    def step_average(self) -> np.ndarray:
        return 0.5 * (self.values[1:] + self.values[:-1])

    def with_values(self, values, dirichlet: bool | None = None) -> "GridFunction":
        return GridFunction(self.mesh, self.timegrid, values,
                            self.dirichlet if dirichlet is None else dirichlet)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.mesh, self.timegrid, self.values - other.values,
                            self.dirichlet and other.dirichlet)


@dataclass(frozen=True)
class CellField:
    """Per-cell, per-step samples: shape (steps, n_cells) or (steps, n_cells, d)."""

    mesh: Mesh
    timegrid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape[:2] != (self.timegrid.steps, self.mesh.n_cells):
            raise DomainError(f"cell field has shape {values.shape}")
        object.__setattr__(self, "values", values)

    def magnitude(self) -> np.ndarray:
        if self.values.ndim == 3:
            return np.linalg.norm(self.values, axis=-1)
        return np.abs(self.values)


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite sum of weighted Dirac atoms.

    Locations have ``d`` coordinates for a measure on the domain, or ``d + 1``
    coordinates ``(t, x...)`` for a measure on the space-time cylinder.
    """

    atoms: tuple[tuple[tuple[float, ...], float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        atoms = tuple((tuple(float(c) for c in np.atleast_1d(loc)), float(w))
                      for loc, w in self.atoms)
        if len({len(loc) for loc, _ in atoms}) > 1:
            raise DomainError("atoms have mixed dimensions")
        if not all(math.isfinite(w) for _, w in atoms):
            raise DomainError("atom weights must be finite")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def dirac(cls, location, weight: float = 1.0) -> "AtomicMeasure":
        return cls(((tuple(np.atleast_1d(location)), weight),))

    @property
    def location_dimension(self) -> int:
        return len(self.atoms[0][0]) if self.atoms else 0

    @property
    def total_variation(self) -> float:
        return float(sum(abs(w) for _, w in self.atoms))

    def validate(self, mesh: Mesh, timegrid: TimeGrid | None = None) -> None:
        d = mesh.dimension
        for loc, _ in self.atoms:
            if len(loc) == d:
                x = loc
            elif len(loc) == d + 1:
                if timegrid is None:
                    raise DomainError("space-time atom needs a time grid")
                t, x = loc[0], loc[1:]
                if not (timegrid.t_start - 1e-12 <= t <= timegrid.t_final + 1e-12):
                    raise DomainError(f"atom time {t} outside [0, T]")
            else:
                raise DomainError(f"atom location {loc} has wrong dimension")
            if not mesh.contains(np.array(x)):
                raise DomainError(f"atom location {x} outside the closed domain")

    def pair(self, fn: Callable[..., float]) -> float:
        """Duality pairing sum(w * fn(location)); fn receives the coordinates."""
        return float(sum(w * fn(*loc) for loc, w in self.atoms))


def gradient(u: GridFunction, m: int) -> np.ndarray:
    """Constant P1 gradient on every cell at time node ``m``, shape (n_cells, d)."""
    mesh = u.mesh
    return (mesh.gradient_matrix @ u.values[m]).reshape(mesh.n_cells, mesh.dimension)


def cell_values(u: GridFunction, time: str = "right") -> np.ndarray:
    """Centroid values per step, shape (steps, n_cells).

    ``time="right"`` uses the level closing each step (trajectories);
    ``time="average"`` uses the step-midpoint average (data fields).
    """
    if time == "right":
        nodal = u.step_right()
    elif time == "average":
        nodal = u.step_average()
    else:
        raise DomainError(f"unknown time sampling {time!r}")
    return (u.mesh.centroid_matrix @ nodal.T).T


def integrate_spacetime(g, mesh: Mesh, timegrid: TimeGrid) -> float:
    """Midpoint-rule integral over the space-time cylinder.

    ``g`` is a callable ``g(t, x)`` evaluated at step midpoints and cell
    centroids (x of shape (n_cells, d)), an array of shape (steps, n_cells),
    or a :class:`CellField`.
    """
    if isinstance(g, CellField):
        vals = g.values
    elif callable(g):
        vals = np.stack([np.broadcast_to(g(t, mesh.centroids), (mesh.n_cells,))
                         for t in timegrid.midpoints])
    else:
        vals = np.asarray(g, dtype=float)
    if vals.shape != (timegrid.steps, mesh.n_cells):
        raise DomainError(f"integrand has shape {vals.shape}")
    return float(timegrid.tau * np.sum(vals @ mesh.volumes))


def spatial_integral(mesh: Mesh, nodal) -> float | np.ndarray:
    """Lumped-mass integral of nodal values; works on stacked rows too."""
    return np.asarray(nodal) @ mesh.lumped_mass


def l1_norm(u: GridFunction, m: int) -> float:
    return float(np.abs(u.values[m]) @ u.mesh.lumped_mass)


def sup_t_l1(u: GridFunction) -> float:
    return float(np.max(np.abs(u.values) @ u.mesh.lumped_mass))


def spacetime_l1(u: GridFunction) -> float:
    """L1 norm over the cylinder of a backward-Euler trajectory."""
    return float(u.timegrid.tau * np.sum(np.abs(u.step_right()) @ u.mesh.lumped_mass))


def write_csv(u: GridFunction, target) -> None:
    """Write ``t,x[,y],value`` rows, time-major then node order."""
    names = ["t", "x", "y"][: u.mesh.dimension + 1] + ["value"]
    own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
    fh = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        nodes = u.mesh.nodes
        for m, t in enumerate(u.timegrid.times):
            tcol = format_float(t)
            for i in range(u.mesh.n_nodes):
                writer.writerow([tcol, *(format_float(c) for c in nodes[i]),
                                 format_float(u.values[m, i])])
    finally:
        if own:
            fh.close()


def read_csv(source) -> GridFunction:
    """Inverse of :func:`write_csv`; the mesh and time grid are inferred."""
    if isinstance(source, str) and "\n" in source:
        fh = io.StringIO(source)
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        fh = open(source, encoding="utf-8", newline="")
    else:
        fh = source
    with fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(c) for c in row] for row in reader if row])
    d = len(header) - 2
    if header[0] != "t" or header[-1] != "value" or d not in (1, 2):
        raise DomainError(f"unexpected header {header}")
    times = np.unique(rows[:, 0])
    axes = [np.unique(rows[:, 1 + a]) for a in range(d)]
    mesh = Mesh(tuple((ax[0], ax[-1]) for ax in axes), tuple(len(ax) - 1 for ax in axes))
    timegrid = TimeGrid(times[-1] - times[0], len(times) - 1, times[0])
    values = rows[:, -1].reshape(len(times), mesh.n_nodes)
    return GridFunction(mesh, timegrid, values)


def as_points(x: Sequence[float] | np.ndarray, d: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1 and d == 1:
        pts = pts[:, None]
    return pts.reshape(-1, d)
