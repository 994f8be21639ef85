from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varpx.errors import CoveringError, DomainError
from varpx.exponent import ExponentField, build_covering, classify, conjugate, verify_log_holder
from varpx.grid import Mesh, TimeGrid

from oracles import COVERING_RADIUS_EPS_01, LOG_HOLDER_HALF_SLOPE_H8


@pytest.mark.parametrize("p, q", [(2.0, 2.0), (3.0, 1.5), (1.5, 3.0)])
def test_conjugate_values(p, q):
    assert np.isclose(conjugate(p), q)


@pytest.mark.parametrize("p", [1.0, 0.5, -2.0])
def test_conjugate_rejects(p):
    with pytest.raises(DomainError):
        conjugate(p)


@given(st.floats(1.001, 1e3))
def test_conjugate_involution(p):
    assert abs(conjugate(conjugate(p)) - p) <= 1e-12 * p * 10


def test_field_bounds_validated():
    with pytest.raises(DomainError):
        ExponentField.constant(0.5)
    with pytest.raises(DomainError):
        ExponentField.from_callable(lambda t, x: 2 + 0 * t, 3.0, 2.0)


def test_affine_bounds_and_constant():
    f = ExponentField.affine(2.0, [1.0], [(0.0, 1.0)])
    assert (f.p_min, f.p_max) == (2.0, 3.0)
    assert np.isclose(f.log_holder, 1 / np.e)
    assert np.allclose(f(0.3, np.array([[0.0], [0.5], [1.0]])), [2, 2.5, 3])


def test_piecewise_time_jump_on_node():
    f = ExponentField.piecewise_time([(0.5, 1.8), (np.inf, 2.5)])
    x = np.array([[0.2]])
    assert f(0.49, x)[0] == 1.8
    assert f(0.5, x)[0] == 2.5
    assert f(0.7, x)[0] == 2.5
    tg = TimeGrid(1.0, 4)
    mids = f.on_cells(Mesh.interval(4), tg)[:, 0]
    assert np.allclose(mids, [1.8, 1.8, 2.5, 2.5])


def test_tabulated_interpolation():
    m = Mesh.interval(2)
    tg = TimeGrid(1.0, 2)
    vals = np.array([[2.0, 2.5, 3.0], [2.0, 2.0, 2.0], [4.0, 4.0, 4.0]])
    f = ExponentField.tabulated(m, tg, vals)
    assert np.isclose(f(0.1, np.array([[0.25]]))[0], 2.25)
    assert np.isclose(f(0.6, np.array([[0.25]]))[0], 2.0)
    assert (f.p_min, f.p_max) == (2.0, 4.0)


def test_conjugate_field():
    f = ExponentField.affine(2.0, [1.0], [(0.0, 1.0)])
    g = f.conjugate_field()
    x = np.array([[0.0], [1.0]])
    assert np.allclose(g(0.0, x), [2.0, 1.5])
    assert (g.p_min, g.p_max) == (1.5, 2.0)


def test_log_holder_constant_passes():
    rep = verify_log_holder(ExponentField.constant(2.0), Mesh.interval(8), TimeGrid(1, 2))
    assert rep.max_ratio == 0.0 and rep.passed


def test_log_holder_half_slope():
    f = ExponentField.affine(2.0, [0.5], [(0.0, 1.0)])
    rep = verify_log_holder(f, Mesh.interval(8), TimeGrid(1, 1))
    assert np.isclose(rep.max_ratio, LOG_HOLDER_HALF_SLOPE_H8)
    assert np.isclose(rep.max_ratio, 0.1839, atol=1e-4)
    assert rep.passed


def test_log_holder_time_jump_only():
    f = ExponentField.piecewise_time([(0.5, 1.8), (np.inf, 2.5)])
    rep = verify_log_holder(f, Mesh.rectangle((4, 4)), TimeGrid(1, 4))
    assert rep.max_ratio == 0.0 and rep.passed


def test_log_holder_detects_understated_constant():
    f = ExponentField.from_callable(lambda t, x: 2 + x[..., 0], 2, 3, log_holder=0.1)
    assert not verify_log_holder(f, Mesh.interval(16), TimeGrid(1, 1)).passed


def test_log_holder_subsampling_is_seeded():
    f = ExponentField.affine(2.0, [1.0, 0.5], [(0.0, 1.0), (0.0, 1.0)])
    m, tg = Mesh.rectangle((16, 16)), TimeGrid(1, 1)
    a = verify_log_holder(f, m, tg, pair_budget=1000, seed=3)
    b = verify_log_holder(f, m, tg, pair_budget=1000, seed=3)
    assert a.subsampled and a.max_ratio == b.max_ratio
    assert a.max_ratio <= f.log_holder


@pytest.mark.parametrize("p_min, d, flags", [
    (1.2, 1, (True, True, False)),
    (1.6, 1, (True, True, True)),
    (1.3, 2, (True, False, False)),
    (1.0, 1, (False, False, False)),
])
def test_classify_thresholds(p_min, d, flags):
    a = classify(p_min, d)
    assert (a.entropy, a.weak_ii, a.weak) == flags


@given(st.floats(1.0, 4.0), st.floats(0.0, 1.0), st.sampled_from([1, 2]))
def test_classify_monotone(p, bump, d):
    lo, hi = classify(p, d), classify(p + bump, d)
    assert (not lo.entropy or hi.entropy) and (not lo.weak_ii or hi.weak_ii)
    assert not lo.weak or hi.weak


def test_covering_constant_single_ball():
    m = Mesh.interval(16)
    cov = build_covering(ExponentField.constant(2.0), m, TimeGrid(1, 2), 0.1)
    assert len(cov.centers) == 1
    assert np.all(cov.lower == 2.0) and np.all(cov.upper == 2.0)
    assert cov.covers(m.nodes)


def test_covering_radius_for_linear_exponent():
    m = Mesh.interval(128)
    f = ExponentField.affine(2.0, [1.0], [(0.0, 1.0)])
    cov = build_covering(f, m, TimeGrid(1, 2), 0.1)
    assert cov.radius == COVERING_RADIUS_EPS_01
    assert cov.radius <= 0.05


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_covering_invariants(eps):
    m = Mesh.rectangle((64, 64))
    f = ExponentField.affine(2.0, [1.0, 0.0], [(0.0, 1.0), (0.0, 1.0)])
    cov = build_covering(f, m, TimeGrid(1, 2), eps)
    assert np.all(cov.oscillation < eps)
    assert np.all(cov.lower >= f.p_min) and np.all(cov.upper <= f.p_max)
    assert cov.covers(m.nodes)


def test_covering_underflow_names_ball():
    f = ExponentField.from_callable(lambda t, x: 2 + (x[..., 0] > 0.5), 2, 3, log_holder=0)
    with pytest.raises(CoveringError) as info:
        build_covering(f, Mesh.interval(16), TimeGrid(1, 1), 0.1)
    assert info.value.oscillation >= 0.1
    assert info.value.ball >= 0
