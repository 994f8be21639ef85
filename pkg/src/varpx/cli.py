"""Command line harness: ``varpx <subcommand> --config <path> [--out <dir>] [--seed <u64>]``.

Exit codes: 0 when every pass flag is true, 1 when some check fails,
2 for an invalid config, 3 when the solver gives up (the step is printed).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from . import analysis as an
from .config import ExperimentConfig, config_digest, load_config
from .errors import CoveringError, DomainError, SolverError
from .exponent import build_covering, verify_log_holder
from .grid import format_float, spacetime_l1, write_csv
from .nonlinearity import (check_coercivity_growth, check_monotonicity, check_vanishing,
                           random_samples)
from .reports import EstimateReport
from .solver import approximation_sequence, solve
from .varlebesgue import holder_check, luxemburg_norm, modular

__all__ = ["main", "run"]

log = logging.getLogger("varpx")

SUBCOMMANDS = ("solve", "sweep", "check-assumptions", "uniqueness-test", "norms", "verify")
ESTIMATE_HEADER = ("name", "param", "n", "lhs", "rhs", "margin", "pass")


# ---------------------------------------------------------------------------
# output helpers


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _estimate_row(rep: EstimateReport, param, n) -> tuple:
    return (rep.name, param, n, rep.lhs, rep.rhs, rep.margin, rep.passed)


class _Run:
    """Collects outputs and pass flags of one subcommand."""

    def __init__(self, cfg: ExperimentConfig, raw: bytes, out: Path, seed: int, sub: str):
        self.cfg = cfg
        self.raw = raw
        self.out = out
        self.seed = seed
        self.sub = sub
        self.files: list[str] = []
        self.flags: dict[str, bool] = {}

    def rows(self, name: str, header, rows) -> None:
        _write_rows(self.out / name, header, rows)
        self.files.append(name)

    def trajectory(self, name: str, u) -> None:
        buf = io.StringIO()
        write_csv(u, buf)
        _atomic_write(self.out / name, buf.getvalue())
        self.files.append(name)

    def flag(self, name: str, ok: bool) -> None:
        self.flags[name] = bool(ok)

    def manifest(self) -> None:
        doc = {
            "tool": "varpx",
            "version": __version__,
            "subcommand": self.sub,
            "config_sha256": config_digest(self.raw),
            "seed": self.seed,
            "tolerances": self.cfg.tolerances.model_dump(),
            "outputs": sorted(self.files),
            "checks": dict(sorted(self.flags.items())),
            "passed": self.passed,
        }
        _atomic_write(self.out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @property
    def passed(self) -> bool:
        return all(self.flags.values())


# ---------------------------------------------------------------------------
# subcommands


def _ratio(values: Sequence[float]) -> float:
    lo, hi = min(values), max(values)
    if hi == 0:
        return 1.0
    return hi / lo if lo > 0 else float("inf")


def cmd_solve(run: _Run) -> None:
    cfg = run.cfg
    report = solve(cfg.build_problem(), cfg.n, cfg.tolerances.newton, tuple(cfg.sweep.k))
    run.trajectory("trajectory.csv", report.trajectory)
    run.rows("ledger.csv", ("k", "t", "lhs", "rhs", "imbalance"),
             ((e.k, e.t, e.lhs, e.rhs, e.imbalance) for e in report.ledger))
    run.rows("newton.csv", ("step", "iters", "residual"),
             zip(range(1, len(report.iterations) + 1), report.iterations, report.residuals))
    run.flag("residual_contract", report.residual_contract_holds())


def _uniformity_rows(run: _Run, name: str, param, reports: Sequence[EstimateReport]):
    ratio = _ratio([r.lhs for r in reports])
    limit = run.cfg.tolerances.uniformity_ratio
    rep = EstimateReport(f"{name}_uniformity", ratio, limit)
    run.flag(f"{name}_uniformity[{param}]", rep.passed)
    return _estimate_row(rep, param, "all")


def _calibrated_rows(run: _Run, reports: Sequence[EstimateReport], param, ns):
    c0 = an.calibrate(reports, run.cfg.tolerances.calibration_safety)
    rows = []
    for rep, n in zip(reports, ns):
        full = rep.with_rhs(c0 * rep.params["scale"])
        run.flag(f"{rep.name}[{param},n={n}]", full.passed)
        rows.append(_estimate_row(full, param, n))
    return rows


def cmd_sweep(run: _Run) -> None:
    cfg = run.cfg
    ns = cfg.sweep.n
    seq = approximation_sequence(cfg.build_problem(), ns, cfg.tolerances.newton, ())
    reports = seq.reports
    rows = []
    for k in cfg.sweep.k:
        reps = [an.estimate_trunc_energy(r, k) for r in reports]
        rows += _calibrated_rows(run, reps, k, ns)
        rows.append(_uniformity_rows(run, "trunc_energy", k, reps))
    for lam in cfg.sweep.weighted_lambda:
        reps = [an.estimate_weighted_energy(r, lam) for r in reports]
        rows += _calibrated_rows(run, reps, lam, ns)
        rows.append(_uniformity_rows(run, "weighted_energy", lam, reps))
    lam = cfg.sweep.interp_lambda
    if lam is not None:
        triples = [an.estimate_interpolation_bounds(r, lam) for r in reports]
        for i in range(3):
            reps = [t[i] for t in triples]
            rows += [_estimate_row(rep, lam, n) for rep, n in zip(reps, ns)]
            rows.append(_uniformity_rows(run, reps[0].name, lam, reps))
    op = reports[0].problem.operator
    mesh = reports[0].mesh
    psi = _interior_cutoff(mesh)
    for mu in cfg.sweep.mu:
        gaps = [an.truncation_cauchy_gap(a.trajectory, b.trajectory, 1.0, mu, psi, op)
                for a, b in zip(reports, reports[1:])]
        for (a, b), g in zip(zip(ns, ns[1:]), gaps):
            rows.append(("cauchy_gap", mu, f"{a}-{b}", g, None, None, True))
        ok = all(y < x for x, y in zip(gaps, gaps[1:]))
        run.flag(f"cauchy_gap_decreasing[{mu}]", ok)
        rows.append(("cauchy_gap_decreasing", mu, "all", float(ok), None, None, ok))
    run.rows("cauchy.csv", ("n_a", "n_b", "l1_distance"),
             ((a, b, d) for a, b, d in zip(ns, ns[1:], seq.distances)))
    run.flag("cauchy_decreasing", seq.monotone_decrease)
    rows.append(("cauchy_decreasing", "", "all", float(seq.monotone_decrease), None, None,
                 seq.monotone_decrease))
    run.rows("estimates.csv", ESTIMATE_HEADER, rows)


def _interior_cutoff(mesh):
    """Smallest-j cutoff of the family that the mesh resolves, at least j=4."""
    for j in (4, 8, 16, 32, 64):
        try:
            return an.cutoff_family(mesh, j)[0]
        except DomainError:
            continue
    return np.where(mesh.boundary, 0.0, 1.0)


def cmd_verify(run: _Run) -> None:
    cfg = run.cfg
    report = solve(cfg.build_problem(), cfg.n, cfg.tolerances.newton, tuple(cfg.sweep.k))
    rows = []
    n = cfg.n
    for k in cfg.sweep.k:
        rows.append(_estimate_row(an.estimate_trunc_energy(report, k), k, n))
    for lam in cfg.sweep.weighted_lambda:
        rows.append(_estimate_row(an.estimate_weighted_energy(report, lam), lam, n))
    if cfg.sweep.interp_lambda is not None:
        for rep in an.estimate_interpolation_bounds(report, cfg.sweep.interp_lambda):
            rows.append(_estimate_row(rep, cfg.sweep.interp_lambda, n))
    basis = an.default_basis(report.mesh, report.timegrid)
    allowance = cfg.tolerances.newton * 10
    for k in cfg.sweep.k:
        worst = max(an.report_entropy_residual(report, phi, k) for phi in [None] + basis)
        rep = EstimateReport("entropy_residual", worst, allowance)
        run.flag(f"entropy_residual[{k}]", rep.passed)
        rows.append(_estimate_row(rep, k, n))
    imbalance = max(e.imbalance for e in report.ledger)
    rep = EstimateReport("ledger_imbalance", imbalance, allowance)
    run.flag("ledger_imbalance", rep.passed)
    rows.append(_estimate_row(rep, "", n))
    run.flag("residual_contract", report.residual_contract_holds())
    run.rows("estimates.csv", ESTIMATE_HEADER, rows)


def cmd_check_assumptions(run: _Run) -> None:
    cfg = run.cfg
    problem = cfg.build_problem()
    mesh, tg, op = problem.mesh, problem.timegrid, problem.operator
    rng = np.random.default_rng(run.seed)
    N = cfg.samples
    tol = cfg.tolerances.assumption
    t, x, xi = random_samples(op.field, mesh, tg, N, rng)
    eta = rng.normal(size=xi.shape) * 10 / np.sqrt(mesh.dimension)
    reports = [
        check_coercivity_growth(op, t, x, xi, tolerance=tol),
        check_monotonicity(op, t, x, xi, eta, tolerance=tol),
        check_vanishing(op, t, x),
    ]
    rows = []
    for rep in reports:
        run.flag(rep.name, rep.passed)
        rows.append(_estimate_row(rep, "", ""))
    lh = verify_log_holder(op.field, mesh, tg, seed=run.seed)
    run.flag("log_holder", lh.passed)
    rows.append(("log_holder", lh.declared, "", lh.max_ratio, lh.declared,
                 lh.declared - lh.max_ratio, lh.passed))
    for eps in cfg.sweep.eps:
        try:
            cov = build_covering(op.field, mesh, tg, eps)
            osc = float(cov.oscillation.max())
            ok = osc < eps and cov.covers(mesh.nodes)
            rows.append(("covering", eps, len(cov.centers), osc, eps, eps - osc, ok))
        except CoveringError as exc:
            ok = False
            rows.append(("covering", eps, "", exc.oscillation, eps, eps - exc.oscillation, False))
        run.flag(f"covering[{eps}]", ok)
    run.rows("assumptions.csv", ESTIMATE_HEADER, rows)


def cmd_uniqueness(run: _Run) -> None:
    cfg = run.cfg
    ns = cfg.sweep.n
    clamp = approximation_sequence(cfg.build_problem("clamp"), ns, cfg.tolerances.newton, ())
    tent = approximation_sequence(cfg.build_problem("tent"), ns, cfg.tolerances.newton, ())
    T = clamp.reports[0].timegrid.t_final
    dist = [an.gk_distance(a.trajectory, b.trajectory, 1.0, T)
            for a, b in zip(clamp.reports, tent.reports)]
    l1 = [spacetime_l1(a.trajectory - b.trajectory) for a, b in zip(clamp.reports, tent.reports)]
    cauchy = (None,) + clamp.distances
    run.rows("uniqueness.csv", ("n", "gk_distance", "l1_distance", "cauchy_clamp"),
             zip(ns, dist, l1, cauchy))
    if len(ns) >= 2:
        run.flag("gk_within_cauchy", dist[-1] <= 3 * clamp.distances[-1])
    tail = dist[-3:]
    run.flag("gk_decreasing", all(b < a for a, b in zip(tail, tail[1:])))


def cmd_norms(run: _Run) -> None:
    cfg = run.cfg
    field = cfg.build_exponent()
    fields = cfg.build_fields()
    rows = []
    for i, f in enumerate(fields):
        rows.append((f"norm[{i}]", "", luxemburg_norm(f, field)))
        for lam in cfg.norms.lambdas:
            rows.append((f"modular[{i}]", lam, modular(f, field, lam)))
    if len(fields) >= 2 and field.p_min > 1:
        rep = holder_check(fields[0], fields[1], field)
        rows.append(("holder_lhs", "", rep.lhs))
        rows.append(("holder_rhs", "", rep.rhs))
        run.flag("holder", rep.passed)
    run.rows("norms.csv", ("quantity", "lambda", "value"), rows)


_DISPATCH = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "check-assumptions": cmd_check_assumptions,
    "uniqueness-test": cmd_uniqueness,
    "norms": cmd_norms,
}


# ---------------------------------------------------------------------------
# entry points


def _field_path(err: dict) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def run(subcommand: str, config_path, out: str | None = None, seed: int | None = None) -> int:
    try:
        cfg, raw = load_config(config_path)
    except ValidationError as exc:
        for err in exc.errors():
            print(f"config error at {_field_path(err)}: {err['msg']}", file=sys.stderr)
        return 2
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    seed = cfg.seed if seed is None else seed
    out_dir = Path(out if out is not None else cfg.output)
    job = _Run(cfg, raw, out_dir, seed, subcommand)
    try:
        _DISPATCH[subcommand](job)
    except SolverError as exc:
        print(f"solver failed at step {exc.step}: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    job.manifest()
    for name, ok in sorted(job.flags.items()):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if job.passed else 1


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="varpx", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"varpx {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--seed", type=_seed, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
