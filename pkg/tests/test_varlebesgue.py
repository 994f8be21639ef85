from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varpx.errors import DomainError
from varpx.exponent import ExponentField
from varpx.grid import CellField, GridFunction, Mesh, TimeGrid
from varpx.varlebesgue import (holder_check, luxemburg_norm, modular, modular_convergence,
                               mollifier_modular_check, product_l1_distance, sample)

from oracles import luxemburg_brentq, split_domain_norm

UNIT = [(0.0, 1.0)]


def split_field():
    return ExponentField.from_callable(lambda t, x: np.where(x[..., 0] < 0.5, 1.0, 2.0),
                                       1.0, 2.0, log_holder=0.0)


def const_cells(mesh, tg, c):
    return CellField(mesh, tg, np.full((tg.steps, mesh.n_cells), float(c)))


@pytest.fixture
def grid():
    return Mesh.interval(4), TimeGrid(1.0, 2)


def test_modular_examples(grid):
    m, tg = grid
    assert modular(const_cells(m, tg, 1), ExponentField.affine(2, [1], UNIT)) == 1.0
    assert modular(const_cells(m, tg, 2), ExponentField.constant(2)) == 4.0
    assert np.isclose(modular(const_cells(m, tg, 2), split_field()), 3.0)


def test_modular_rejects_bad_scale(grid):
    m, tg = grid
    with pytest.raises(DomainError):
        modular(const_cells(m, tg, 1), ExponentField.constant(2), 0.0)


def test_modular_zero_iff_zero(grid):
    m, tg = grid
    f = ExponentField.constant(3)
    assert modular(const_cells(m, tg, 0), f) == 0
    vals = np.zeros((tg.steps, m.n_cells))
    vals[1, 2] = 1e-3
    assert modular(CellField(m, tg, vals), f) > 0


def test_norm_examples(grid):
    m, tg = grid
    assert luxemburg_norm(const_cells(m, tg, 0), ExponentField.constant(2)) == 0
    assert np.isclose(luxemburg_norm(const_cells(m, tg, 3), ExponentField.constant(2)), 3,
                      rtol=1e-9)
    norm = luxemburg_norm(const_cells(m, tg, 2), split_field())
    assert np.isclose(norm, 2.0, rtol=1e-9)
    assert np.isclose(norm, split_domain_norm(), rtol=1e-9)


def test_norm_against_brentq_oracle():
    m, tg = Mesh.rectangle((8, 8)), TimeGrid(1.0, 3)
    rng = np.random.default_rng(7)
    field = ExponentField.affine(1.5, [1.0, 0.5], [(0, 1), (0, 1)])
    f = CellField(m, tg, rng.normal(size=(tg.steps, m.n_cells)) * 3)
    s = sample(f, field)
    ref = luxemburg_brentq(s.magnitude.ravel(), s.exponent.ravel(),
                           np.broadcast_to(s.weights, s.magnitude.shape).ravel())
    assert np.isclose(luxemburg_norm(f, field), ref, rtol=1e-9)


def test_constant_exponent_reduction():
    m, tg = Mesh.interval(20), TimeGrid(1.0, 5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.uniform(1.1, 5.0)
        vals = rng.normal(size=(tg.steps, m.n_cells)) * rng.uniform(0.01, 100)
        classical = (np.sum(np.abs(vals) ** p) * m.volumes[0] * tg.tau) ** (1 / p)
        got = luxemburg_norm(CellField(m, tg, vals), ExponentField.constant(p))
        assert abs(got - classical) <= 1e-8 * max(1.0, classical)


@given(st.integers(0, 10_000), st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
def test_unit_ball_homogeneity_tightness(seed, c):
    m, tg = Mesh.interval(8), TimeGrid(1.0, 2)
    field = ExponentField.affine(1.3, [2.0], UNIT)
    f = CellField(m, tg, np.random.default_rng(seed).normal(size=(2, 8)))
    n = luxemburg_norm(f, field)
    assert modular(f, field, n) <= 1 + 1e-8
    assert modular(f, field, 0.99 * n) > 1
    scaled = luxemburg_norm(CellField(m, tg, c * f.values), field)
    assert abs(scaled - abs(c) * n) <= 1e-8 * abs(c) * n


def test_overflow_on_nonfinite(grid):
    m, tg = grid
    vals = np.ones((tg.steps, m.n_cells))
    vals[0, 0] = np.inf
    with pytest.raises(OverflowError):
        luxemburg_norm(CellField(m, tg, vals), ExponentField.constant(2))


def test_holder_examples(grid):
    m, tg = grid
    p2 = ExponentField.constant(2)
    rep = holder_check(const_cells(m, tg, 0), const_cells(m, tg, 1), p2)
    assert rep.lhs == 0 and rep.rhs == 0 and rep.passed
    rep = holder_check(const_cells(m, tg, 1), const_cells(m, tg, 1), p2)
    assert np.isclose(rep.lhs, 1) and np.isclose(rep.rhs, 2) and rep.passed


@given(st.integers(0, 10_000))
def test_holder_random_pairs(seed):
    m, tg = Mesh.rectangle((16, 16)), TimeGrid(1.0, 1)
    field = ExponentField.affine(2.0, [1.0, 0.0], [(0, 1), (0, 1)])
    rng = np.random.default_rng(seed)
    f = CellField(m, tg, rng.standard_cauchy(size=(1, m.n_cells)))
    g = CellField(m, tg, rng.normal(size=(1, m.n_cells)))
    assert holder_check(f, g, field).passed


def test_modular_convergence_strong():
    m, tg = Mesh.interval(8), TimeGrid(1.0, 2)
    f = const_cells(m, tg, 1.5)
    p = ExponentField.affine(2.0, [1.0], UNIT)
    assert modular_convergence([f, f], f, p).classification == "strong"
    seq = [const_cells(m, tg, 1.5 + 1 / n) for n in (10, 100, 1000, 10**6)]
    assert modular_convergence(seq, f, p).classification == "strong"


def test_modular_convergence_modular_only():
    # one spike on a cell of width 1e-3; p = 2, tolerance 1e-6
    m, tg = Mesh.interval(1000), TimeGrid(1.0, 1)
    zero = const_cells(m, tg, 0)
    seq = []
    for height in (0.2, 0.05, 0.02):
        vals = np.zeros((1, m.n_cells))
        vals[0, 500] = height
        seq.append(CellField(m, tg, vals))
    rep = modular_convergence(seq, zero, ExponentField.constant(2.0))
    hand = [(0.02 / lam) ** 2 * 1e-3 for lam in rep.lambdas]
    assert np.allclose(rep.last_modulars, hand, rtol=1e-12)
    assert rep.last_modulars[1] <= 1e-6 < rep.last_modulars[2]
    assert rep.classification == "modular-only"


def test_modular_convergence_none_and_empty():
    m, tg = Mesh.interval(8), TimeGrid(1.0, 1)
    p = ExponentField.constant(2.0)
    assert modular_convergence([const_cells(m, tg, 1)], const_cells(m, tg, 0),
                               p).classification == "none"
    with pytest.raises(DomainError):
        modular_convergence([], const_cells(m, tg, 0), p)


def interior_psi(x):
    return np.where(np.abs(x[:, 0] - 0.5) <= 0.2, 1.0, 0.0)


def test_mollifier_check_constant():
    m, tg = Mesh.interval(64), TimeGrid(1.0, 1)
    f = GridFunction.constant_in_time(m, tg, np.full(m.n_nodes, 2.0))
    rep = mollifier_modular_check(f, interior_psi, ExponentField.constant(2),
                                  [1 / 8, 1 / 16, 1 / 32])
    assert max(rep.norms) <= 1e-12


def test_mollifier_check_linear_and_jump():
    m, tg = Mesh.interval(256), TimeGrid(1.0, 1)
    p = ExponentField.affine(1.5, [1.0], UNIT)
    kappas = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
    lin = GridFunction.from_callable(m, tg, lambda t, x: x[:, 0])
    assert mollifier_modular_check(lin, interior_psi, p, kappas).decreasing
    jump = GridFunction.from_callable(m, tg, lambda t, x: (x[:, 0] > 0.5) * 1.0)
    rep = mollifier_modular_check(jump, interior_psi, p, kappas)
    assert rep.decreasing and rep.norms[-1] < rep.norms[0] / 2


def test_mollifier_support_violation():
    m, tg = Mesh.interval(64), TimeGrid(1.0, 1)
    f = GridFunction.zeros(m, tg)
    with pytest.raises(DomainError):
        mollifier_modular_check(f, np.ones(m.n_nodes), ExponentField.constant(2), [1 / 8])


def test_product_theorem():
    m, tg = Mesh.interval(16), TimeGrid(1.0, 2)
    rng = np.random.default_rng(5)
    phi = CellField(m, tg, rng.normal(size=(2, 16)))
    psi = CellField(m, tg, rng.normal(size=(2, 16)))
    p = ExponentField.affine(1.5, [1.0], UNIT)
    dists, phis, psis = [], [], []
    for n in (10, 1000, 10**6):
        phis.append(CellField(m, tg, phi.values + 1 / n))
        psis.append(CellField(m, tg, psi.values - 2 / n))
        dists.append(product_l1_distance(phis[-1], psis[-1], phi, psi))
    assert modular_convergence(phis, phi, p).classification == "strong"
    assert modular_convergence(psis, psi, p.conjugate_field()).classification == "strong"
    assert dists[0] > dists[1] > dists[2]
    assert dists[-1] < 1e-5
