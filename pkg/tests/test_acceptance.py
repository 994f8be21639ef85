"""Acceptance criteria 1 to 9.

Each test records one PASS/FAIL line (printed immediately and repeated in
the terminal summary by ``conftest.py``) and then asserts the criterion at
its stated tolerance.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from varpx.analysis import (cutoff_family, default_basis, estimate_interpolation_bounds,
                            estimate_trunc_energy, estimate_weighted_energy, gk_distance,
                            report_entropy_residual, truncation_cauchy_gap, vanishing_check)
from varpx.experiments import (dirac_problem, heat_problem, jump_exponent, spike_problem,
                               stationary_problem)
from varpx.exponent import ExponentField, build_covering
from varpx.grid import CellField, Mesh, TimeGrid
from varpx.nonlinearity import (Nonlinearity, check_coercivity_growth, check_monotonicity,
                                check_vanishing, random_samples)
from varpx.solver import approximation_sequence, solve
from varpx.varlebesgue import holder_check, luxemburg_norm, modular

from oracles import HEAT_PEAK_T01

RESULTS: dict[int, tuple[bool, str]] = {}

SWEEP_NS = (2, 4, 8, 16, 32)
NEWTON_TOL = 1e-9


def record(criterion: int, ok: bool, detail: str) -> None:
    RESULTS[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")


def ratio(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.max() / values.min())


@pytest.fixture(scope="module")
def spike_sweep():
    start = time.perf_counter()
    seq = approximation_sequence(spike_problem(128, 100), SWEEP_NS, NEWTON_TOL, ())
    return seq, time.perf_counter() - start


def test_criterion_1_heat_oracle():
    start = time.perf_counter()
    peak, errors = None, []
    for cells, steps in ((128, 200), (256, 400), (512, 800)):
        r = solve(heat_problem(cells, steps, 0.1), 1, NEWTON_TOL, ())
        x = r.mesh.nodes[:, 0]
        exact = np.exp(-np.pi**2 * 0.1) * np.sin(np.pi * x)
        err = r.trajectory.values[-1] - exact
        errors.append(float(np.sqrt(err**2 @ r.mesh.lumped_mass)))
        if peak is None:
            peak = float(np.abs(r.trajectory.values[-1]).max())
    elapsed = time.perf_counter() - start
    rates = [a / b for a, b in zip(errors, errors[1:])]
    ok = abs(peak - HEAT_PEAK_T01) <= 1e-2 and all(q >= 2 for q in rates) and elapsed < 30
    record(1, ok, f"peak={peak:.6f} L2 ratios={rates[0]:.3f},{rates[1]:.3f} "
                  f"time={elapsed:.1f}s")
    assert ok


def test_criterion_2_stationarity():
    prob = stationary_problem()
    r = solve(prob, 1, NEWTON_TOL, ())
    dev = float(np.abs(r.trajectory.values - prob.u0[None, :]).max())
    record(2, dev <= 1e-8, f"max deviation={dev:.3e}")
    assert dev <= 1e-8


def test_criterion_3_assumption_suite():
    fields = {
        "constant": ExponentField.constant(1.7),
        "affine": ExponentField.affine(2.0, [0.5], [(0.0, 1.0)]),
        "time-jump": jump_exponent(),
    }
    m, tg = Mesh.interval(64), TimeGrid(1.0, 10)
    worst = []
    ok = True
    for name, field in fields.items():
        op = Nonlinearity.prototype(field)
        rng = np.random.default_rng(2024)
        t, x, xi = random_samples(field, m, tg, 10_000, rng)
        eta = rng.normal(size=xi.shape) * 10
        a2 = check_coercivity_growth(op, t, x, xi, c=2.0, tolerance=1e-12)
        a3 = check_monotonicity(op, t, x, xi, eta, tolerance=1e-12)
        a4 = check_vanishing(op, t, x)
        ok &= (a2.lhs <= 1e-12 and a3.params["min_pairing"] >= -1e-12 and a4.lhs == 0.0)
        worst.append(f"{name}: A2={a2.lhs:.1e} A3min={a3.params['min_pairing']:.1e}")
    record(3, ok, "; ".join(worst))
    assert ok


def test_criterion_4_luxemburg_suite():
    rng = np.random.default_rng(11)
    m, tg = Mesh.interval(20), TimeGrid(1.0, 5)
    red_err = 0.0
    for _ in range(100):
        p = rng.uniform(1.1, 5.0)
        vals = rng.normal(size=(tg.steps, m.n_cells)) * rng.uniform(0.01, 100)
        classical = (np.sum(np.abs(vals) ** p) * m.volumes[0] * tg.tau) ** (1 / p)
        got = luxemburg_norm(CellField(m, tg, vals), ExponentField.constant(p))
        red_err = max(red_err, abs(got - classical) / max(1.0, classical))

    field = ExponentField.affine(1.3, [2.0], [(0.0, 1.0)])
    f = CellField(m, tg, rng.normal(size=(tg.steps, m.n_cells)))
    norm = luxemburg_norm(f, field)
    hom_err = abs(luxemburg_norm(CellField(m, tg, -3.7 * f.values), field) - 3.7 * norm) / norm
    tight = modular(f, field, norm) <= 1 + 1e-8 and modular(f, field, 0.99 * norm) > 1

    half = Mesh.interval(4)
    split = ExponentField.from_callable(lambda t, x: np.where(x[..., 0] < 0.5, 1.0, 2.0),
                                        1.0, 2.0, log_holder=0.0)
    split_norm = luxemburg_norm(CellField(half, TimeGrid(1.0, 1), np.full((1, 4), 2.0)), split)

    sq, one = Mesh.rectangle((16, 16)), TimeGrid(1.0, 1)
    p2x = ExponentField.affine(2.0, [1.0, 0.0], [(0, 1), (0, 1)])
    holder_ok = all(
        holder_check(CellField(sq, one, rng.standard_cauchy(size=(1, sq.n_cells))),
                     CellField(sq, one, rng.normal(size=(1, sq.n_cells))), p2x).passed
        for _ in range(1000))

    ok = (red_err <= 1e-8 and hom_err <= 1e-8 and tight and abs(split_norm - 2) <= 1e-8
          and holder_ok)
    record(4, ok, f"reduction={red_err:.1e} homogeneity={hom_err:.1e} tight={tight} "
                  f"split={split_norm:.10f} holder={holder_ok}")
    assert ok


def test_criterion_5_uniform_estimates(spike_sweep):
    seq, solve_time = spike_sweep
    start = time.perf_counter()
    reports = seq.reports
    ratios = {}
    for k in (1, 2, 4):
        ratios[f"trunc[k={k}]"] = ratio([estimate_trunc_energy(r, k).lhs for r in reports])
    for lam in (1.1, 1.5, 2.0):
        ratios[f"weighted[{lam}]"] = ratio([estimate_weighted_energy(r, lam).lhs
                                            for r in reports])
    triples = [estimate_interpolation_bounds(r, 1.5) for r in reports]
    for i, name in enumerate(("interp_u", "interp_grad", "interp_flux")):
        ratios[name] = ratio([t[i].lhs for t in triples])
    elapsed = solve_time + time.perf_counter() - start
    ok = all(v <= 10 for v in ratios.values()) and elapsed < 300
    record(5, ok, f"max ratio={max(ratios.values()):.2f} ({max(ratios, key=ratios.get)}) "
                  f"time={elapsed:.1f}s")
    assert ok


def test_criterion_6_cauchy_and_entropy(spike_sweep):
    seq, _ = spike_sweep
    reports = seq.reports
    mesh, op = reports[0].mesh, reports[0].problem.operator
    psi, _ = cutoff_family(mesh, 4)
    gaps = [truncation_cauchy_gap(a.trajectory, b.trajectory, 1.0, 0.5, psi, op)
            for a, b in zip(reports, reports[1:])]
    gaps_ok = all(b < a for a, b in zip(gaps, gaps[1:]))

    def worst_entropy(report):
        basis = [None] + default_basis(report.mesh, report.timegrid)
        return max(report_entropy_residual(report, phi, k) for phi in basis for k in (1, 2))

    fine = worst_entropy(reports[-1])
    coarse = worst_entropy(solve(spike_problem(64, 100), SWEEP_NS[-1], NEWTON_TOL, ()))
    # the residual is nonpositive in exact arithmetic; compare up to the Newton tolerance
    entropy_ok = fine <= 5e-2 and fine <= coarse + NEWTON_TOL
    ok = seq.monotone_decrease and gaps_ok and entropy_ok
    dist = ",".join(f"{d:.4f}" for d in seq.distances)
    record(6, ok, f"L1 distances={dist} gaps decreasing={gaps_ok} "
                  f"entropy h=1/64:{coarse:.1e} h=1/128:{fine:.1e}")
    assert ok


def test_criterion_7_uniqueness(spike_sweep):
    clamp, _ = spike_sweep
    tent = approximation_sequence(spike_problem(128, 100, regularization="tent"), SWEEP_NS,
                                  NEWTON_TOL, ())
    T = clamp.reports[0].timegrid.t_final
    dists = [gk_distance(a.trajectory, b.trajectory, 1.0, T)
             for a, b in zip(clamp.reports, tent.reports)]
    bound = 3 * clamp.distances[-1]
    tail = dists[-3:]
    ok = dists[-1] <= bound and all(b < a for a, b in zip(tail, tail[1:]))
    record(7, ok, f"gk={', '.join(f'{d:.2e}' for d in dists)} bound={bound:.2e}")
    assert ok


def test_criterion_8_measure_data():
    n = 64
    r = solve(dirac_problem(64, 50, 0.05), n, NEWTON_TOL, ())
    ref = solve(dirac_problem(256, 50, 0.05), n, NEWTON_TOL, ())
    masses = r.trajectory.values @ r.mesh.lumped_mass
    mass_ok = bool(np.all(masses <= 1 + 1e-12) and np.all(np.diff(masses) <= 1e-14))
    gap = float(np.abs(r.trajectory.values[-1] - ref.trajectory.values[-1][::4]).max())
    ok = mass_ok and gap <= 5e-2
    record(8, ok, f"mass {masses[0]:.6f} -> {masses[-1]:.6f} monotone={mass_ok} "
                  f"self-convergence gap={gap:.2e}")
    assert ok


def test_criterion_9_covering_and_cutoff():
    m = Mesh.interval(128)
    field = ExponentField.affine(2.0, [1.0], [(0.0, 1.0)])
    cover_ok = True
    for eps in (0.2, 0.1, 0.05):
        cov = build_covering(field, m, TimeGrid(1.0, 2), eps)
        cover_ok &= bool(np.all(cov.oscillation < eps) and cov.covers(m.nodes))
    heat = solve(heat_problem(), 1, NEWTON_TOL, ())
    chk = vanishing_check(heat.trajectory, heat.problem.field, (4, 8, 16, 32))
    ok = cover_ok and chk.decreasing
    record(9, ok, f"covering={cover_ok} cutoff values="
                  f"{', '.join(f'{v:.4f}' for v in chk.values)}")
    assert ok
