"""Experiment configuration: JSON schema as pydantic models plus builders."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import (AliasChoices, BaseModel, ConfigDict, Field, field_validator,
                      model_validator)

from .errors import DomainError
from .experiments import spike_density
from .exponent import ExponentField
from .expr import parse
from .grid import AtomicMeasure, GridFunction, Mesh, TimeGrid
from .nonlinearity import Nonlinearity
from .solver import Problem

__all__ = ["ExperimentConfig", "load_config", "config_digest"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MeshSpec(_Model):
    extent: list[tuple[float, float]] = Field(default=[(0.0, 1.0)], min_length=1, max_length=2)
    cells: list[Annotated[int, Field(ge=2)]] = Field(default=[64], min_length=1, max_length=2)

    @model_validator(mode="after")
    def _matching(self):
        if len(self.extent) != len(self.cells):
            raise ValueError("extent and cells need one entry per axis")
        if any(hi <= lo for lo, hi in self.extent):
            raise ValueError("every axis needs lo < hi")
        return self

    def build(self) -> Mesh:
        return Mesh(tuple(tuple(e) for e in self.extent), tuple(self.cells))


class TimeSpec(_Model):
    t_end: float = Field(gt=0)
    steps: int = Field(ge=1)

    def build(self) -> TimeGrid:
        return TimeGrid(self.t_end, self.steps)


class ConstantExponent(_Model):
    kind: Literal["constant"]
    value: float = Field(ge=1)


class AffineExponent(_Model):
    kind: Literal["affine"]
    offset: float
    slope: list[float]


class TimePiece(_Model):
    until: Optional[float] = None
    value: float = Field(ge=1, validation_alias=AliasChoices("value", "expr_const"))


class PiecewiseTimeExponent(_Model):
    kind: Literal["piecewise_time"]
    pieces: list[TimePiece] = Field(min_length=1)

    @field_validator("pieces")
    @classmethod
    def _last_open(cls, pieces):
        if any(p.until is None for p in pieces[:-1]):
            raise ValueError("only the last piece may omit 'until'")
        return pieces


class ExpressionExponent(_Model):
    kind: Literal["expression"]
    expr: str
    p_min: float = Field(ge=1)
    p_max: float
    log_holder: float = Field(default=0.0, ge=0)

    @field_validator("expr")
    @classmethod
    def _parses(cls, v):
        try:
            parse(v)
        except DomainError as exc:
            raise ValueError(str(exc)) from None
        return v


class TabulatedExponent(_Model):
    """Nodal values per time node, shape (steps + 1, n_nodes)."""

    kind: Literal["tabulated"]
    values: list[list[float]]
    log_holder: Optional[float] = Field(default=None, ge=0)


ExponentSpec = Annotated[
    Union[ConstantExponent, AffineExponent, PiecewiseTimeExponent, ExpressionExponent,
          TabulatedExponent],
    Field(discriminator="kind"),
]


class OperatorSpec(_Model):
    kind: Literal["prototype", "regularized"] = "prototype"
    delta: float = Field(default=0.0, ge=0)
    c: float = Field(default=2.0, gt=0)
    h: float = Field(default=0.0, ge=0)


class Atom(_Model):
    at: list[float] = Field(min_length=1, max_length=3)
    weight: float


class SpikeSpec(_Model):
    center: float = 0.49
    power: float = Field(default=2.0 / 3.0, gt=0, lt=1)
    scale: float = Field(default=0.5, gt=0)


class DataSpec(_Model):
    """Exactly one of: expression, nodal table, atoms, spike."""

    expr: Optional[str] = None
    nodal: Optional[list[float]] = None
    atoms: Optional[list[Atom]] = None
    spike: Optional[SpikeSpec] = None

    @model_validator(mode="after")
    def _one_of(self):
        given = [k for k in ("expr", "nodal", "atoms", "spike") if getattr(self, k) is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of expr, nodal, atoms, spike")
        if self.expr is not None:
            try:
                parse(self.expr)
            except DomainError as exc:
                raise ValueError(str(exc)) from None
        return self


class DataBlock(_Model):
    f: Optional[DataSpec] = None
    u0: Optional[DataSpec] = None


class SweepSpec(_Model):
    n: list[Annotated[int, Field(ge=1)]] = Field(default=[2, 4, 8, 16, 32], min_length=1)
    k: list[Annotated[float, Field(gt=0)]] = Field(default=[1.0, 2.0, 4.0], min_length=1)
    weighted_lambda: list[Annotated[float, Field(gt=1)]] = Field(default=[1.1, 1.5, 2.0])
    interp_lambda: Optional[Annotated[float, Field(gt=1)]] = 1.5
    mu: list[Annotated[float, Field(gt=0, lt=1)]] = Field(default=[0.5])
    j: list[Annotated[int, Field(ge=1)]] = Field(default=[4, 8, 16, 32])
    eps: list[Annotated[float, Field(gt=0)]] = Field(default=[0.2, 0.1, 0.05])

    @field_validator("n", "j")
    @classmethod
    def _increasing(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("list must be strictly increasing")
        return v


class Tolerances(_Model):
    newton: float = Field(default=1e-9, gt=0)
    assumption: float = Field(default=1e-12, ge=0)
    uniformity_ratio: float = Field(default=10.0, gt=1)
    entropy: float = Field(default=5e-2, ge=0)
    calibration_safety: float = Field(default=5.0, gt=0)


class NormsSpec(_Model):
    fields: list[DataSpec] = Field(default_factory=list)
    lambdas: list[Annotated[float, Field(gt=0)]] = Field(default=[1.0])


class ExperimentConfig(_Model):
    mesh: MeshSpec = MeshSpec()
    time: TimeSpec
    exponent: ExponentSpec
    operator: OperatorSpec = OperatorSpec()
    data: DataBlock = DataBlock()
    mode: Literal["weak", "weak-II", "entropy"] = "entropy"
    regularization: Literal["clamp", "tent"] = "clamp"
    n: int = Field(default=1000, ge=1)
    sweep: SweepSpec = SweepSpec()
    tolerances: Tolerances = Tolerances()
    samples: int = Field(default=10_000, ge=1)
    norms: NormsSpec = NormsSpec()
    seed: int = Field(default=0, ge=0, lt=2**64)
    output: str = "out"

    @model_validator(mode="after")
    def _consistent(self):
        d = len(self.mesh.cells)
        if isinstance(self.exponent, AffineExponent) and len(self.exponent.slope) != d:
            raise ValueError("exponent.slope needs one entry per axis")
        if isinstance(self.exponent, ExpressionExponent) and \
                self.exponent.p_max < self.exponent.p_min:
            raise ValueError("exponent.p_max must be >= p_min")
        if self.operator.kind == "regularized" and not self.operator.delta > 0:
            raise ValueError("operator.delta must be positive for the regularized operator")
        p_min = self.build_exponent().p_min
        lam = self.sweep.interp_lambda
        if lam is not None and not lam < p_min:
            raise ValueError(f"sweep.interp_lambda must lie in (1, p_min={p_min})")
        return self

    # builders ----------------------------------------------------------------

    def build_exponent(self) -> ExponentField:
        e = self.exponent
        if isinstance(e, ConstantExponent):
            return ExponentField.constant(e.value)
        if isinstance(e, AffineExponent):
            return ExponentField.affine(e.offset, e.slope, [tuple(x) for x in self.mesh.extent])
        if isinstance(e, PiecewiseTimeExponent):
            return ExponentField.piecewise_time(
                [(np.inf if p.until is None else p.until, p.value) for p in e.pieces])
        if isinstance(e, TabulatedExponent):
            return ExponentField.tabulated(self.mesh.build(), self.time.build(), e.values,
                                           e.log_holder)
        fn = parse(e.expr)
        return ExponentField.from_callable(fn, e.p_min, e.p_max, e.log_holder,
                                           spec={"kind": "expression", "expr": e.expr})

    def build_operator(self) -> Nonlinearity:
        field = self.build_exponent()
        o = self.operator
        return Nonlinearity(field, o.kind, o.delta, o.c, o.h)

    def _atoms(self, spec: DataSpec) -> AtomicMeasure:
        return AtomicMeasure(tuple((tuple(a.at), a.weight) for a in spec.atoms))

    def build_source(self, mesh: Mesh, tg: TimeGrid, spec: DataSpec | None):
        if spec is None:
            return None
        if spec.atoms is not None:
            return self._atoms(spec)
        if spec.expr is not None:
            return GridFunction.from_callable(mesh, tg, parse(spec.expr))
        return GridFunction.constant_in_time(mesh, tg, self._nodal(mesh, spec))

    def build_initial(self, mesh: Mesh, spec: DataSpec | None):
        if spec is None:
            return None
        if spec.atoms is not None:
            return self._atoms(spec)
        if spec.expr is not None:
            vals = parse(spec.expr)(0.0, mesh.nodes)
        else:
            vals = self._nodal(mesh, spec)
        vals = np.array(vals)
        vals[mesh.boundary] = 0.0
        return vals

    @staticmethod
    def _nodal(mesh: Mesh, spec: DataSpec) -> np.ndarray:
        if spec.spike is not None:
            s = spec.spike
            return spike_density(mesh.nodes[:, 0], s.center, s.power, s.scale)
        vals = np.asarray(spec.nodal, dtype=float)
        if vals.shape != (mesh.n_nodes,):
            raise DomainError(f"nodal table has {vals.size} values, mesh has {mesh.n_nodes}")
        return vals

    def build_problem(self, regularization: str | None = None) -> Problem:
        mesh = self.mesh.build()
        tg = self.time.build()
        return Problem(mesh, tg, self.build_operator(),
                       self.build_source(mesh, tg, self.data.f),
                       self.build_initial(mesh, self.data.u0), self.mode,
                       regularization or self.regularization)

    def build_fields(self) -> list[GridFunction]:
        mesh = self.mesh.build()
        tg = self.time.build()
        out = []
        for spec in self.norms.fields:
            if spec.atoms is not None:
                raise DomainError("norms need function data, not atoms")
            if spec.expr is not None:
                out.append(GridFunction.from_callable(mesh, tg, parse(spec.expr)))
            else:
                out.append(GridFunction.constant_in_time(mesh, tg, self._nodal(mesh, spec)))
        return out


def load_config(path: str | Path) -> tuple[ExperimentConfig, bytes]:
    raw = Path(path).read_bytes()
    data = json.loads(raw.decode("utf-8"))
    return ExperimentConfig.model_validate(data), raw


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()
