"""Batch front end: simulate / validate / groundstate / convergence commands.

Exit codes: 0 ok, 2 config or usage rejection, 3 solver failure,
4 invariant failure.  The output root is taken from --output-root or the
DIRACLAB_OUTPUT_ROOT environment variable (default: current directory).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, groundstate as gs
from .config import ConfigError, build_initial_state, effective_eps, load_config
from .dirac import dirac_matrices
from .hartree import bilinear_estimate_report
from .lattice import (
    charge,
    l2_distance,
    l2_norm,
    make_grid,
    random_smooth_field,
    sobolev_norm,
    write_checkpoint,
)
from .newton import (
    CollisionError,
    FixedPointDivergence,
    coupled_direct,
    coupled_fixed_point,
    energy_breakdown,
    force_breakdown,
    total_momentum,
)
from .potentials import Trajectory
from .propagator import (
    AdmissibilityError,
    ContractionWindowError,
    ConvergenceFailure,
    PropagatorPlan,
    check_contraction_window,
    product_formula_evolve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4

SOLVER_ERRORS = (ConvergenceFailure, FixedPointDivergence, AdmissibilityError, CollisionError)


def _fmt(x) -> str:
    return repr(float(x))


def _output_root(args) -> Path:
    root = args.output_root or os.environ.get("DIRACLAB_OUTPUT_ROOT") or "."
    return Path(root)


def _write_timeseries(path: Path, fsol, traj, eps: float, every: int, sigma: float) -> None:
    n_nuc = traj.n_nuclei if traj is not None else 0
    cols = ["t", "charge", "hsigma",
            "E_field_kinetic", "E_interaction", "E_hartree", "E_nuclear_kinetic",
            "E_internuclear", "E_total", "p_x", "p_y", "p_z"]
    for k in range(n_nuc):
        for name in ("q", "v", "F_field", "F_internuclear", "F_total"):
            cols += [f"{name}{k}_{ax}" for ax in "xyz"]
    lines = [",".join(cols)]
    for j in range(0, len(fsol.times), max(1, every)):
        t = fsol.times[j]
        u = fsol.snapshots[j]
        nuclei = traj.nuclei_at(t) if traj is not None else []
        eb = energy_breakdown(u, nuclei, eps)
        p = total_momentum(u, nuclei)
        row = [_fmt(t), _fmt(fsol.charges[j]), _fmt(sobolev_norm(u, sigma)),
               _fmt(eb.field_kinetic), _fmt(eb.interaction), _fmt(eb.hartree),
               _fmt(eb.nuclear_kinetic), _fmt(eb.internuclear), _fmt(eb.total),
               _fmt(p[0]), _fmt(p[1]), _fmt(p[2])]
        if nuclei:
            fb = force_breakdown(u, nuclei, eps, t=t)
            for k in range(n_nuc):
                for vec in (nuclei[k].q, nuclei[k].qdot, fb.field[k],
                            fb.internuclear[k], fb.total[k]):
                    row += [_fmt(vec[0]), _fmt(vec[1]), _fmt(vec[2])]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _output_root(args) / cfg.output.path
    outdir.mkdir(parents=True, exist_ok=True)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    try:
        grid, u0, nuclei = build_initial_state(cfg)
        if charge(u0) > 0:
            check_contraction_window(cfg.time.T, u0, cfg.solver.sigma,
                                     cfg.solver.contraction_const)
    except (ConfigError, ContractionWindowError, ValueError) as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    eps = effective_eps(cfg)
    plan = PropagatorPlan(
        frame="comoving_single" if cfg.solver.mode == "comoving" else "lab",
        n_slices=cfg.time.n_slices, eps_reg=eps, velocity_cap=cfg.solver.velocity_cap)
    n_steps = max(1, int(round(cfg.time.T / cfg.time.dt)))
    manifest = {
        "version": __version__, "config_hash": cfg.config_hash(), "seed": cfg.seed,
        "config": json.loads(json.dumps(asdict(cfg), default=str)),
        "epsilon_reg": eps, "outputs": [], "solvers": {},
    }
    results = {}
    try:
        if cfg.solver.method in ("fixed_point", "both"):
            t0 = time.time()
            fsol, traj, rep = coupled_fixed_point(
                u0, nuclei, cfg.time.T, tol=cfg.solver.fixedpoint.tol,
                max_outer=cfg.solver.fixedpoint.max_outer, theta=cfg.solver.fixedpoint.damping,
                plan=plan, n_steps=n_steps, eps0=cfg.physics.epsilon0,
                picard_tol=cfg.solver.picard.tol, picard_max_iter=cfg.solver.picard.max_iter,
                sigma=cfg.solver.sigma, contraction_const=cfg.solver.contraction_const,
                enforce_window=False)
            results["fixed_point"] = (fsol, traj)
            manifest["solvers"]["fixed_point"] = {
                "outer_iterations": rep.outer_iterations, "step_history": rep.step_history,
                "newton_residual": rep.newton_residual,
                "admissibility_failures": rep.admissibility_failures,
                "charge_drift": fsol.charge_drift(), "wall_time": time.time() - t0,
            }
        if cfg.solver.method in ("direct", "both"):
            t0 = time.time()
            fsol, traj, rep = coupled_direct(
                u0, nuclei, cfg.time.T, cfg.time.dt, eps_reg=eps, sigma=cfg.solver.sigma)
            results["direct"] = (fsol, traj)
            manifest["solvers"]["direct"] = {
                "energy_drift": rep.energy_drift, "momentum_drift": rep.momentum_drift,
                "charge_drift": rep.charge_drift, "wall_time": time.time() - t0,
            }
    except SOLVER_ERRORS as exc:
        record = {"status": "failure", "error": type(exc).__name__, "message": str(exc),
                  "history": getattr(exc, "history", None)}
        (outdir / "failure.json").write_text(json.dumps(record, indent=2, default=str))
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if len(results) == 2:
        (fa, ta), (fb, tb) = results["fixed_point"], results["direct"]
        manifest["cross_check"] = {
            "q_final_max_diff": float(np.max(np.abs(ta.positions[:, -1] - tb.positions[:, -1])))
            if ta is not None else 0.0,
            "field_final_l2_diff": l2_distance(fa.final, fb.final),
        }
    for name, (fsol, traj) in results.items():
        ts_path = outdir / f"timeseries_{name}.csv"
        _write_timeseries(ts_path, fsol, traj, eps, cfg.output.every, cfg.solver.sigma)
        manifest["outputs"].append(ts_path.name)
    primary = results.get("fixed_point", results.get("direct"))
    fsol, traj = primary
    ck_path = outdir / "final.dns"
    if traj is not None:
        write_checkpoint(ck_path, fsol.final, float(fsol.times[-1]), traj.charges,
                         traj.masses, traj.positions[:, -1], traj.velocities[:, -1])
    else:
        write_checkpoint(ck_path, fsol.final, float(fsol.times[-1]))
    manifest["outputs"].append(ck_path.name)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    print(f"ok: outputs in {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate suites


def _suite_dirac(n: int, seed: int, outdir: Path):
    failures = []
    mats = dirac_matrices()
    all_m = (*mats.alphas, mats.beta)
    for i, A in enumerate(all_m):
        for j, B in enumerate(all_m):
            anti = A @ B + B @ A
            target = 2.0 * np.eye(4) if i == j else np.zeros((4, 4))
            if not np.array_equal(anti, target):
                failures.append(f"anticommutation identity failed for pair ({i},{j})")
        if not np.array_equal(A, A.conj().T):
            failures.append(f"matrix {i} not hermitian")
    from .dirac import apply_free_dirac

    grid = make_grid(min(n, 32), 12.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        u = random_smooth_field(grid, rng, kmax=4, decay=0.8)
        lhs = l2_norm(apply_free_dirac(u))
        rhs = sobolev_norm(u, 1.0)
        worst = max(worst, abs(lhs - rhs) / rhs)
    if worst > 1e-10:
        failures.append(f"free-operator/H1 norm identity off by {worst:.3e} > 1e-10")
    (outdir / "dirac_summary.json").write_text(json.dumps(
        {"norm_identity_worst": worst, "failures": failures}, indent=2))
    return failures


def _suite_propagator(n: int, seed: int, outdir: Path):
    failures = []
    grid = make_grid(min(n, 32), 12.0)
    rng = np.random.default_rng(seed)
    u0 = random_smooth_field(grid, rng, kmax=3, decay=1.0)
    traj = Trajectory.constant_velocity([0.5], [10.0], [[0, 0, 0]], [[0.08, 0, 0]], 0.0, 0.5, 16)
    plan = PropagatorPlan(n_slices=16, eps_reg=3 * grid.spacing)
    u1 = product_formula_evolve(u0, 0.0, 0.5, traj, plan)
    drift = abs(charge(u1) - charge(u0)) / charge(u0)
    back = product_formula_evolve(u1, 0.5, 0.0, traj, plan)
    rev = l2_distance(back, u0) / l2_norm(u0)
    mid = product_formula_evolve(u0, 0.0, 0.25, traj, plan)
    comp = l2_distance(product_formula_evolve(mid, 0.25, 0.5, traj, plan), u1) / l2_norm(u0)
    if drift > 1e-10:
        failures.append(f"charge drift {drift:.3e} > 1e-10")
    if rev > 1e-9:
        failures.append(f"reversibility residual {rev:.3e} > 1e-9")
    if comp > 1e-12:
        failures.append(f"slice-aligned composition residual {comp:.3e} > 1e-12")
    (outdir / "propagator_summary.json").write_text(json.dumps(
        {"charge_drift": drift, "reversibility": rev, "composition": comp,
         "failures": failures}, indent=2))
    return failures


def _suite_hardy(n: int, seed: int, outdir: Path):
    grid = make_grid(n, 12.0)
    rep = analysis.hardy_report(grid, n_samples=30, seed=seed)
    rep.write(outdir / "hardy.jsonl")
    return [] if np.isfinite(rep.sup_ratio) else ["hardy sup ratio not finite"]


def _suite_multiplier(n: int, seed: int, outdir: Path):
    grid = make_grid(n, 12.0)
    rep = analysis.coulomb_multiplier_report(grid, n_samples=30, seed=seed)
    rep.write(outdir / "coulomb_multiplier.jsonl")
    return [] if np.isfinite(rep.sup_ratio) else ["coulomb-multiplier sup ratio not finite"]


def _suite_rellich(n: int, seed: int, outdir: Path):
    grid = make_grid(n, 12.0)
    rep = analysis.rellich_report(grid, seed=seed)
    rep.write(outdir / "rellich.jsonl")
    return [] if np.isfinite(rep.sup_ratio) else ["rellich sup ratio not finite"]


def _suite_radial(n: int, seed: int, outdir: Path):
    rep = analysis.radial_decomposition_report()
    rep.write(outdir / "radial_decomposition.jsonl")
    failures = []
    for s in rep.samples:
        if s["residual"] >= 1e-4:
            failures.append(f"radial decomposition residual {s['residual']:.3e} >= 1e-4 "
                            f"at degree k={s['k']}")
    return failures


def _suite_regularization(n: int, seed: int, outdir: Path):
    grid = make_grid(max(n, 64), 16.0)
    rep = analysis.regularization_report(grid, sigma=1.4)
    rep.write(outdir / "regularization_rate.jsonl")
    slope = rep.metadata["slope"]
    expect = rep.metadata["expected_exponent"]
    if slope < expect - 0.1:
        return [f"regularization slope {slope:.3f} below {expect - 0.1:.3f}"]
    return []


def _suite_bilinear(n: int, seed: int, outdir: Path):
    grid = make_grid(n, 12.0)
    rng = np.random.default_rng(seed)
    rep = analysis.InequalityReport("bilinear-convolution", "random-smooth", grid.n,
                                    grid.box_length, grid.spacing / 2, seed)
    for i in range(60):
        u = random_smooth_field(grid, rng, kmax=4, decay=0.8)
        v = random_smooth_field(grid, rng, kmax=4, decay=0.8)
        w = random_smooth_field(grid, rng, kmax=4, decay=0.8)
        ratios = bilinear_estimate_report(u, v, w)
        rep.samples.append({"index": i, "ratio": ratios.l2, "l2": ratios.l2,
                            "h1": ratios.h1, "hs1": ratios.hs1, "s": ratios.s})
    rep.write(outdir / "bilinear.jsonl")
    return [] if np.isfinite(rep.sup_ratio) else ["bilinear sup ratio not finite"]


SUITES = {
    "dirac": _suite_dirac,
    "propagator": _suite_propagator,
    "hardy": _suite_hardy,
    "multiplier": _suite_multiplier,
    "rellich": _suite_rellich,
    "radial": _suite_radial,
    "regularization": _suite_regularization,
    "bilinear": _suite_bilinear,
}


def cmd_validate(args) -> int:
    if args.suite != "all" and args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {sorted(SUITES)} or 'all'",
              file=sys.stderr)
        return EXIT_CONFIG
    outdir = _output_root(args) / args.out
    outdir.mkdir(parents=True, exist_ok=True)
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    failures = []
    t0 = time.time()
    for name in names:
        t1 = time.time()
        fails = SUITES[name](args.n, args.seed, outdir)
        failures.extend(f"[{name}] {f}" for f in fails)
        print(f"suite {name}: {'FAIL' if fails else 'ok'} ({time.time() - t1:.1f}s)")
    summary = {"suites": names, "n": args.n, "seed": args.seed,
               "failures": failures, "wall_time": time.time() - t0}
    (outdir / "validate_summary.json").write_text(json.dumps(summary, indent=2))
    if failures:
        for f in failures:
            print(f"invariant failure: {f}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_groundstate(args) -> int:
    if not args.nu or not args.sigma:
        print("usage error: provide at least one --nu and one --sigma", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _output_root(args) / args.out
    outdir.mkdir(parents=True, exist_ok=True)
    rows = ["nu,a,b,sigma,sigma_max,classification,measured_exponent,expected_exponent,"
            "tail_exponent,tail_expected,consistent"]
    records = []
    consistent_all = True
    for nu in args.nu:
        try:
            model = gs.GroundStateModel(nu)
        except ValueError as exc:
            print(f"config rejected: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        tail = gs.fourier_tail_exponent(model)
        for sigma in args.sigma:
            rep = gs.verify_regularity(model, sigma)
            expect_cls = (gs.CONVERGENT if sigma < rep.sigma_max - rep.margin
                          else gs.DIVERGENT if sigma > rep.sigma_max + rep.margin
                          else gs.INDETERMINATE)
            consistent = rep.classification == expect_cls
            consistent_all &= consistent
            rows.append(",".join([
                _fmt(nu), _fmt(model.a), _fmt(model.b), _fmt(sigma), _fmt(rep.sigma_max),
                rep.classification, _fmt(rep.measured_increment_exponent),
                _fmt(rep.expected_increment_exponent), _fmt(tail), _fmt(-(model.b + 2.0)),
                str(consistent)]))
            records.append({**asdict(rep), "tail_exponent": tail, "consistent": consistent})
    (outdir / "groundstate_classification.csv").write_text("\n".join(rows) + "\n")
    with open(outdir / "groundstate_classification.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    print(f"ok: wrote {outdir / 'groundstate_classification.csv'}")
    return EXIT_OK if consistent_all else EXIT_INVARIANT


def cmd_convergence(args) -> int:
    try:
        cfg = load_config(args.config)
        grid, u0, nuclei = build_initial_state(cfg)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.ladder or len(args.ladder) < 2:
        print("usage error: --ladder needs at least two n_slices values", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _output_root(args) / args.out
    outdir.mkdir(parents=True, exist_ok=True)
    eps = effective_eps(cfg)
    charges = [nuc.Z for nuc in nuclei]
    masses = [nuc.m for nuc in nuclei]
    traj = Trajectory.constant_velocity(
        charges, masses, [nuc.q for nuc in nuclei], [nuc.qdot for nuc in nuclei],
        0.0, cfg.time.T, max(16, cfg.time.n_slices))
    rows = ["n_slices,l2_diff_to_previous,empirical_order"]
    prev = None
    prev_diff = None
    finals = []
    for ns in sorted(args.ladder):
        plan = PropagatorPlan(n_slices=int(ns), eps_reg=eps,
                              velocity_cap=cfg.solver.velocity_cap)
        u = product_formula_evolve(u0, 0.0, cfg.time.T, traj, plan)
        diff = l2_distance(u, prev) if prev is not None else None
        order = (np.log2(prev_diff / diff) if (diff is not None and prev_diff is not None
                                               and diff > 0) else None)
        rows.append(",".join([str(int(ns)),
                              _fmt(diff) if diff is not None else "",
                              _fmt(order) if order is not None else ""]))
        finals.append((int(ns), diff, order))
        prev, prev_diff = u, diff if diff is not None else prev_diff
    (outdir / "convergence.csv").write_text("\n".join(rows) + "\n")
    print(f"ok: wrote {outdir / 'convergence.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diraclab",
                                description="Dirac-Hartree field + point nuclei lab")
    p.add_argument("--output-root", default=None,
                   help="root for outputs (default: $DIRACLAB_OUTPUT_ROOT or .)")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run the coupled solvers from a config file")
    ps.add_argument("--config", required=True)
    ps.set_defaults(func=cmd_simulate)

    pv = sub.add_parser("validate", help="run inequality/property suites")
    pv.add_argument("--suite", required=True,
                    help=f"one of {sorted(SUITES)} or 'all'")
    pv.add_argument("--n", type=int, default=32)
    pv.add_argument("--seed", type=int, default=2024)
    pv.add_argument("--out", default="validate")
    pv.set_defaults(func=cmd_validate)

    pg = sub.add_parser("groundstate", help="regularity classification tables")
    pg.add_argument("--nu", type=float, nargs="+", required=True)
    pg.add_argument("--sigma", type=float, nargs="+", required=True)
    pg.add_argument("--out", default="groundstate")
    pg.set_defaults(func=cmd_groundstate)

    pc = sub.add_parser("convergence", help="slice-refinement study from a config")
    pc.add_argument("--config", required=True)
    pc.add_argument("--ladder", type=int, nargs="+", required=True)
    pc.add_argument("--out", default="convergence")
    pc.set_defaults(func=cmd_convergence)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
