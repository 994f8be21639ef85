"""Variable exponents p(t, x): representations, admissibility checks, coverings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import CoveringError, DomainError
from .grid import Mesh, TimeGrid

__all__ = [
    "ExponentField",
    "conjugate",
    "LogHolderReport",
    "verify_log_holder",
    "Admissibility",
    "classify",
    "Covering",
    "build_covering",
]


def conjugate(p):
    """Hoelder conjugate p/(p-1); works elementwise on arrays."""
    arr = np.asarray(p, dtype=float)
    if np.any(arr <= 1.0):
        raise DomainError("conjugate exponent needs p > 1")
    out = arr / (arr - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExponentField:
    """An exponent p(t, x) >= 1 with declared bounds and log-Hoelder constant.

    ``evaluator(t, x)`` receives ``t`` broadcastable against ``x[..., 0]`` and
    points ``x`` of shape (..., d); it returns p with shape ``x.shape[:-1]``.
    """

    kind: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    p_min: float
    p_max: float
    log_holder: float = 0.0
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (1.0 <= self.p_min <= self.p_max < math.inf):
            raise DomainError(f"need 1 <= p_min <= p_max < inf, got "
                              f"{self.p_min}, {self.p_max}")
        if self.log_holder < 0:
            raise DomainError("log-Hoelder constant must be nonnegative")

    def __call__(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        return np.broadcast_to(self.evaluator(t, x), x.shape[:-1]).astype(float)

    # constructors -----------------------------------------------------------

    @classmethod
    def constant(cls, p: float) -> "ExponentField":
        p = float(p)
        return cls("constant", lambda t, x: np.full(x.shape[:-1], p), p, p, 0.0,
                   {"kind": "constant", "value": p})

    @classmethod
    def affine(cls, offset: float, slope: Sequence[float],
               extent: Sequence[tuple[float, float]]) -> "ExponentField":
        """p(x) = offset + slope . x on the box ``extent``."""
        slope = np.asarray(slope, dtype=float)
        corners = np.array(np.meshgrid(*[list(e) for e in extent])).reshape(len(extent), -1)
        vals = offset + slope @ corners
        # sup of |a| s |log s| over 0 < s < 1 is |a|/e
        c_lh = float(np.linalg.norm(slope)) / math.e
        return cls("affine", lambda t, x: offset + x @ slope,
                   float(vals.min()), float(vals.max()), c_lh,
                   {"kind": "affine", "offset": float(offset), "slope": slope.tolist()})

    @classmethod
    def piecewise_time(cls, pieces: Sequence[tuple[float, float | "ExponentField"]]
                       ) -> "ExponentField":
        """Pieces ``(until, profile)``: piece i applies for until_{i-1} <= t < until_i.

        The last piece also covers every later time.  A profile is a number or
        a time-independent ExponentField.
        """
        if not pieces:
            raise DomainError("piecewise exponent needs at least one piece")
        untils = np.array([float(u) for u, _ in pieces])
        if np.any(np.diff(untils) <= 0):
            raise DomainError("piece end times must increase")
        profiles = [ExponentField.constant(p) if not isinstance(p, ExponentField) else p
                    for _, p in pieces]

        def evaluate(t, x):
            idx = np.minimum(np.searchsorted(untils, t, side="right"), len(profiles) - 1)
            out = np.empty(x.shape[:-1])
            for i, prof in enumerate(profiles):
                sel = idx == i
                if np.any(sel):
                    out[sel] = prof(t[sel], x[sel])
            return out

        return cls("piecewise_time", evaluate,
                   min(p.p_min for p in profiles), max(p.p_max for p in profiles),
                   max(p.log_holder for p in profiles),
                   {"kind": "piecewise_time",
                    "pieces": [{"until": float(u), "profile": p.spec}
                               for u, p in zip(untils, profiles)]})

    @classmethod
    def tabulated(cls, mesh: Mesh, timegrid: TimeGrid, values,
                  log_holder: float | None = None) -> "ExponentField":
        """Nodal table of shape (steps + 1, N): piecewise constant in time
        (level m on [t_m, t_{m+1})), (bi)linear in space."""
        values = np.asarray(values, dtype=float)
        if values.shape != (timegrid.steps + 1, mesh.n_nodes):
            raise DomainError("tabulated exponent has the wrong shape")
        tables = values.reshape((timegrid.steps + 1,) + tuple(reversed(mesh.shape)))
        interps = [RegularGridInterpolator(tuple(reversed(mesh.axes)), tab,
                                           bounds_error=False, fill_value=None)
                   for tab in tables]

        def evaluate(t, x):
            idx = np.clip(np.floor((t - timegrid.t_start) / timegrid.tau + 1e-9).astype(int),
                          0, timegrid.steps)
            out = np.empty(x.shape[:-1])
            for m in np.unique(idx):
                sel = idx == m
                out[sel] = interps[m](x[sel][:, ::-1])
            return out

        if log_holder is None:
            log_holder = max(verify_log_holder_table(mesh, values), 0.0)
        return cls("tabulated", evaluate, float(values.min()), float(values.max()),
                   float(log_holder), {"kind": "tabulated"})

    @classmethod
    def from_callable(cls, fn, p_min: float, p_max: float, log_holder: float = 0.0,
                      kind: str = "expression", spec: dict | None = None) -> "ExponentField":
        return cls(kind, fn, float(p_min), float(p_max), float(log_holder),
                   spec or {"kind": kind})

    # derived fields ---------------------------------------------------------

    def conjugate_field(self) -> "ExponentField":
        if self.p_min <= 1.0:
            raise DomainError("conjugate field needs p_min > 1")
        base = self.evaluator
        return ExponentField(f"conjugate({self.kind})",
                             lambda t, x: conjugate(np.asarray(base(t, x), dtype=float)),
                             conjugate(self.p_max), conjugate(self.p_min),
                             self.log_holder / (self.p_min - 1.0) ** 2,
                             {"kind": "conjugate", "of": self.spec})

    def mapped(self, fn: Callable[[np.ndarray], np.ndarray], p_min: float,
               p_max: float, kind: str) -> "ExponentField":
        """Exponent obtained by applying ``fn`` to p pointwise."""
        base = self.evaluator
        return ExponentField(kind, lambda t, x: fn(np.asarray(base(t, x), dtype=float)),
                             p_min, p_max, 0.0, {"kind": kind, "of": self.spec})

    def on_cells(self, mesh: Mesh, timegrid: TimeGrid) -> np.ndarray:
        """p at step midpoints and cell centroids, shape (steps, n_cells)."""
        t = np.repeat(timegrid.midpoints[:, None], mesh.n_cells, axis=1)
        x = np.broadcast_to(mesh.centroids, (timegrid.steps,) + mesh.centroids.shape)
        return self(t, x)

    def on_nodes(self, mesh: Mesh, t: float) -> np.ndarray:
        return self(t, mesh.nodes)

    def check_bounds(self, mesh: Mesh, timegrid: TimeGrid, tol: float = 1e-12) -> bool:
        samples = [self.on_cells(mesh, timegrid).ravel()]
        samples += [self.on_nodes(mesh, t) for t in timegrid.times]
        vals = np.concatenate(samples)
        return bool(np.all(vals >= self.p_min - tol) and np.all(vals <= self.p_max + tol))


def verify_log_holder_table(mesh: Mesh, values: np.ndarray) -> float:
    ratios = [_max_log_ratio(mesh.nodes, row, 10**6, np.random.default_rng(0))[0]
              for row in np.atleast_2d(values)]
    return float(max(ratios))


def _max_log_ratio(points: np.ndarray, p: np.ndarray, budget: int,
                   rng: np.random.Generator) -> tuple[float, int, bool]:
    n = len(points)
    n_pairs = n * (n - 1) // 2
    if n_pairs <= budget:
        i, j = np.triu_indices(n, k=1)
        subsampled = False
    else:
        i = rng.integers(0, n, size=budget)
        j = rng.integers(0, n, size=budget)
        keep = i != j
        i, j = i[keep], j[keep]
        subsampled = True
    dist = np.linalg.norm(points[i] - points[j], axis=-1)
    ok = (dist > 0) & (dist < 1)
    if not np.any(ok):
        return 0.0, 0, subsampled
    ratio = np.abs(p[i[ok]] - p[j[ok]]) * np.abs(np.log(dist[ok]))
    return float(ratio.max()), int(ok.sum()), subsampled


@dataclass(frozen=True)
class LogHolderReport:
    max_ratio: float
    declared: float
    passed: bool
    pairs_checked: int
    subsampled: bool


def verify_log_holder(field: ExponentField, mesh: Mesh, timegrid: TimeGrid,
                      pair_budget: int = 10**6, seed: int = 0) -> LogHolderReport:
    """Largest |p(t,x) - p(t,y)| * |log|x - y|| over node pairs at 0 < |x-y| < 1.

    All pairs are checked per time node while their number stays within
    ``pair_budget``; beyond that a seeded uniform subsample is used.
    """
    rng = np.random.default_rng(seed)
    worst, total, sub = 0.0, 0, False
    for t in timegrid.times:
        r, n, s = _max_log_ratio(mesh.nodes, field.on_nodes(mesh, t), pair_budget, rng)
        worst, total, sub = max(worst, r), total + n, sub or s
    passed = worst <= field.log_holder * (1 + 1e-12) + 1e-14
    return LogHolderReport(worst, field.log_holder, passed, total, sub)


@dataclass(frozen=True)
class Admissibility:
    entropy: bool
    weak_ii: bool
    weak: bool

    def allows(self, mode: str) -> bool:
        return {"entropy": self.entropy, "weak-II": self.weak_ii, "weak_ii": self.weak_ii,
                "weak": self.weak}[mode]


def classify(field: ExponentField | float, d: int) -> Admissibility:
    """Which solution notions the lower exponent bound supports in dimension d."""
    p_min = field.p_min if isinstance(field, ExponentField) else float(field)
    return Admissibility(entropy=p_min > 1.0,
                         weak_ii=p_min > 2 * d / (d + 1),
                         weak=p_min > (2 * d + 1) / (d + 1))


@dataclass(frozen=True)
class Covering:
    centers: np.ndarray          # (n_balls, d)
    radius: float
    times: np.ndarray            # time nodes
    lower: np.ndarray            # q_i(t), shape (n_times, n_balls)
    upper: np.ndarray            # r_i(t), shape (n_times, n_balls)
    eps: float

    @property
    def oscillation(self) -> np.ndarray:
        return self.upper - self.lower

    def covers(self, points: np.ndarray) -> bool:
        dist = np.linalg.norm(points[:, None, :] - self.centers[None], axis=-1)
        return bool(np.all(dist.min(axis=1) <= self.radius * (1 + 1e-12)))


def _ball_centers(mesh: Mesh, radius: float) -> np.ndarray:
    spacing = 2 * radius if mesh.dimension == 1 else radius * math.sqrt(2)
    per_axis = []
    for lo, hi in mesh.extent:
        n = max(1, math.ceil((hi - lo) / spacing - 1e-12))
        per_axis.append(lo + (np.arange(n) + 0.5) * (hi - lo) / n)
    grids = np.meshgrid(*per_axis, indexing="xy")
    return np.column_stack([g.ravel() for g in grids])


def _ball_samples(mesh: Mesh, center: np.ndarray, radius: float) -> np.ndarray:
    inside = mesh.nodes[np.linalg.norm(mesh.nodes - center, axis=1) <= radius * (1 + 1e-12)]
    if mesh.dimension == 1:
        rim = np.array([[center[0] - radius], [center[0] + radius]])
    else:
        ang = np.linspace(0, 2 * math.pi, 32, endpoint=False)
        rim = center + radius * np.column_stack([np.cos(ang), np.sin(ang)])
    lo = np.array([e[0] for e in mesh.extent])
    hi = np.array([e[1] for e in mesh.extent])
    rim = np.clip(rim, lo, hi)           # projection onto the box stays in the ball
    return np.vstack([inside, center[None], rim])


def build_covering(field: ExponentField, mesh: Mesh, timegrid: TimeGrid,
                   eps: float) -> Covering:
    """Balls of a common radius on which p oscillates by less than ``eps``.

    The radius starts at the domain diameter and is halved until every
    ball meets the oscillation budget at every time node.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    radius = mesh.diameter
    floor = float(mesh.spacing.min())
    while True:
        centers = _ball_centers(mesh, radius)
        samples = [_ball_samples(mesh, c, radius) for c in centers]
        lower = np.empty((len(timegrid.times), len(centers)))
        upper = np.empty_like(lower)
        for m, t in enumerate(timegrid.times):
            for b, pts in enumerate(samples):
                vals = field(t, pts)
                lower[m, b], upper[m, b] = vals.min(), vals.max()
        osc = upper - lower
        if np.all(osc < eps):
            return Covering(centers, radius, np.array(timegrid.times), lower, upper, eps)
        if radius / 2 < floor:
            m, b = np.unravel_index(int(np.argmax(osc)), osc.shape)
            raise CoveringError(
                f"radius fell below one cell: ball {b} at t={timegrid.times[m]:g} "
                f"oscillates by {osc[m, b]:g} >= {eps:g}",
                ball=int(b), time=float(timegrid.times[m]), oscillation=float(osc[m, b]))
        radius /= 2
