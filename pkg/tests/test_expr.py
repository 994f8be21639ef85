from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from varpx.errors import DomainError
from varpx.expr import parse


@pytest.mark.parametrize("src, t, x, out", [
    ("1 + 2*3", 0.0, 0.0, 7.0),
    ("2^3^2", 0.0, 0.0, 512.0),
    ("-x^2", 0.0, 3.0, -9.0),
    ("sin(pi*x)", 0.0, 0.5, 1.0),
    ("exp(-t)*abs(x - 1)", 1.0, 0.0, math.exp(-1)),
    ("sqrt(x) + log(e)", 0.0, 4.0, 3.0),
    ("(1 + x)/(2 - t)", 1.0, 1.0, 2.0),
])
def test_evaluation(src, t, x, out):
    assert np.isclose(parse(src)(t, np.array([[x]]))[0], out)


def test_variables_and_broadcast():
    e = parse("x*y + t")
    assert e.variables == {"x", "y", "t"}
    pts = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(e(0.5, pts), [2.5, 12.5])
    assert np.allclose(parse("2")(0.0, pts), [2.0, 2.0])


@pytest.mark.parametrize("src", ["__import__('os')", "x.real", "foo(x)", "z + 1", "x if t else 1",
                                 "[1, 2]", "'a'", "sin(x, t)", "x // 2", "1 +", "True"])
def test_rejects_unsafe_or_invalid(src):
    with pytest.raises(DomainError):
        parse(src)


def test_y_needs_two_dimensions():
    with pytest.raises(DomainError):
        parse("y")(0.0, np.array([[0.5]]))


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_matches_python_arithmetic(a, b):
    e = parse(f"({a!r}) * x - ({b!r}) + x^2")
    x = np.array([[0.3]])
    assert np.isclose(e(0.0, x)[0], a * 0.3 - b + 0.09)
