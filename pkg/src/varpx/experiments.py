"""Canned problems used by the acceptance suite, the tests and the sample configs."""

from __future__ import annotations

import numpy as np

from .exponent import ExponentField
from .grid import AtomicMeasure, GridFunction, Mesh, TimeGrid
from .nonlinearity import Nonlinearity
from .solver import Problem

__all__ = [
    "SPIKE_CENTER",
    "SPIKE_POWER",
    "SPIKE_SCALE",
    "spike_density",
    "jump_exponent",
    "heat_problem",
    "stationary_problem",
    "zero_problem",
    "spike_problem",
    "dirac_problem",
]

# off-node location so that no grid node sits on the singularity
SPIKE_CENTER = 0.49
SPIKE_POWER = 2.0 / 3.0
SPIKE_SCALE = 0.5


def spike_density(x, center: float = SPIKE_CENTER, power: float = SPIKE_POWER,
                  scale: float = SPIKE_SCALE) -> np.ndarray:
    """scale * |x - center|^(-power): integrable in 1D, unbounded near ``center``."""
    x = np.asarray(x, dtype=float)
    return scale * np.abs(x - center) ** (-power)


def jump_exponent(switch: float = 0.5, before: float = 1.8, after: float = 2.5) -> ExponentField:
    """p = ``before`` for t < switch and ``after`` from then on."""
    return ExponentField.piecewise_time([(switch, before), (np.inf, after)])


def heat_problem(cells: int = 128, steps: int = 200, t_end: float = 0.1) -> Problem:
    mesh = Mesh.interval(cells)
    tg = TimeGrid(t_end, steps)
    u0 = np.sin(np.pi * mesh.nodes[:, 0])
    u0[mesh.boundary] = 0.0
    return Problem(mesh, tg, Nonlinearity.prototype(ExponentField.constant(2.0)), None, u0)


def stationary_problem(cells: int = 64, steps: int = 20, t_end: float = 0.2) -> Problem:
    mesh = Mesh.interval(cells)
    tg = TimeGrid(t_end, steps)
    x = mesh.nodes[:, 0]
    f = GridFunction.constant_in_time(mesh, tg, np.ones(mesh.n_nodes))
    return Problem(mesh, tg, Nonlinearity.prototype(ExponentField.constant(2.0)), f,
                   0.5 * x * (1 - x))


def zero_problem(cells: int = 16, steps: int = 10, p: float = 2.0) -> Problem:
    mesh = Mesh.interval(cells)
    return Problem(mesh, TimeGrid(1.0, steps), Nonlinearity.prototype(ExponentField.constant(p)))


def spike_problem(cells: int = 128, steps: int = 100, t_end: float = 1.0,
                  regularization: str = "clamp") -> Problem:
    """Time-constant integrable spike source, zero initial data, jump exponent."""
    mesh = Mesh.interval(cells)
    tg = TimeGrid(t_end, steps)
    f = GridFunction.constant_in_time(mesh, tg, spike_density(mesh.nodes[:, 0]))
    op = Nonlinearity.prototype(jump_exponent(0.5 * t_end))
    return Problem(mesh, tg, op, f, None, "entropy", regularization)


def dirac_problem(cells: int = 64, steps: int = 50, t_end: float = 0.05) -> Problem:
    mesh = Mesh.interval(cells)
    tg = TimeGrid(t_end, steps)
    op = Nonlinearity.prototype(ExponentField.constant(2.0))
    return Problem(mesh, tg, op, None, AtomicMeasure.dirac(0.5, 1.0))
