from __future__ import annotations

import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from varpx.grid import Mesh, TimeGrid

settings.register_profile(
    "varpx", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("varpx")


@pytest.fixture
def unit_interval():
    return Mesh.interval(16)


@pytest.fixture
def unit_square():
    return Mesh.rectangle((8, 8))


@pytest.fixture
def unit_time():
    return TimeGrid(1.0, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        ok, detail = results[criterion]
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
