"""Batch front door: solve, verify, export-vtk, continuation.

Exit codes: 0 success, 1 config/IO error, 2 solver found nothing,
3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import aop, cones, coulomb, functional, model
from .config import RunConfig, load_run_config
from .continuation import (
    BranchRejectedError,
    ContinuationError,
    continuation_run,
    monotonicity_monitor,
    write_continuation_trace,
)
from .coulomb import CoulombSolver
from .flow import write_flow_trace
from .grid import Field, FieldFormatError, read_field, write_field
from .minimax import (
    MinimaxStallError,
    PathAbsorbedError,
    SeedError,
    TuneRError,
    bump_seed_pair,
    build_phi0,
    minimax_solve,
    tune_R,
    write_minimax_manifest,
)
from .model import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_SOLUTION = 2
EXIT_VERIFY_FAIL = 3


def _content_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _problem(rc: RunConfig):
    cfg = rc.model
    solver = CoulombSolver(cfg.grid, cfg.coulomb_mode)
    if rc.fault == "kernel_sign_flip":
        solver.inject_kernel_sign_flip()
    V = model.eval_V(cfg)
    geom = cones.ConeGeometry(eps=cfg.eps_cone)
    return cfg, solver, V, geom


def _write_manifest(out_dir: Path, run_id: str, config_path: Path, rc: RunConfig, outputs: list, timings: dict) -> Path:
    manifest = {
        "run_id": run_id,
        "config_file": str(config_path),
        "config_hash": _content_hash(config_path),
        "config": json.loads(config_path.read_text()),
        "rng_seed": rc.rng_seed,
        "outputs": outputs,
        "timings_sec": timings,
    }
    path = out_dir / f"manifest_{run_id}.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def cmd_solve(config_path: str) -> int:
    t_start = time.time()
    try:
        rc = load_run_config(config_path)
        cfg, solver, V, geom = _problem(rc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rng = np.random.default_rng(rc.rng_seed)
    out_dir = rc.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = _content_hash(Path(config_path)) + f"_{rc.rng_seed}"
    outputs = []
    timings = {}

    try:
        seeds = bump_seed_pair(
            cfg.grid,
            center1=rc.seeds.center1,
            center2=rc.seeds.center2,
            radius=rc.seeds.radius,
            amplitude=rc.seeds.amplitude,
        )
    except SeedError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if rc.calibrate_cones:
        eps, _ = cones.calibrate_eps(cfg, solver, V, rng=rng)
        geom = cones.ConeGeometry(eps=eps)

    try:
        if cfg.lam > 0:
            t0 = time.time()
            result = continuation_run(cfg, solver, V, geom, seeds, rc.continuation, rng=rng)
            timings["continuation"] = time.time() - t0
            solution = result.solution
            trace_path = out_dir / f"continuation_{run_id}.csv"
            write_continuation_trace(trace_path, result.stages)
            outputs.append(str(trace_path))
            monitor = monotonicity_monitor(result.stages)
            if not monitor["ok"]:
                print(f"note: level monotonicity violated at stages {monitor['violations']}")
            polish_outcome = result.polish
        else:
            t0 = time.time()
            R = tune_R(cfg, solver, V, geom, seeds, mode=rc.path_mode, m=rc.lattice_m)
            path = build_phi0(cfg, seeds, mode=rc.path_mode, m=rc.lattice_m, R=R)
            mm_result = minimax_solve(cfg, solver, V, geom, path, rc.minimax, rng=rng)
            timings["minimax"] = time.time() - t0
            solution = mm_result.solution
            manifest_path = out_dir / f"minimax_{run_id}.json"
            sol_file = str(out_dir / f"solution_{run_id}.spfld")
            write_minimax_manifest(
                manifest_path,
                seeds=seeds,
                geom=geom,
                result=mm_result,
                lattice_m=rc.lattice_m,
                R=R,
                solution_files=[sol_file],
            )
            outputs.append(str(manifest_path))
            polish_outcome = None
    except (TuneRError, PathAbsorbedError, MinimaxStallError, ContinuationError, BranchRejectedError) as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION

    sol_path = out_dir / f"solution_{run_id}.spfld"
    write_field(sol_path, solution)
    outputs.append(str(sol_path))
    phi_path = out_dir / f"phi_{run_id}.spfld"
    write_field(phi_path, coulomb.phi_of(solver, solution))
    outputs.append(str(phi_path))
    if polish_outcome is not None:
        flow_path = out_dir / f"flow_{run_id}.csv"
        write_flow_trace(flow_path, polish_outcome)
        outputs.append(str(flow_path))
    diag_path = out_dir / f"diagnostics_{run_id}.csv"
    functional.write_diagnostics(
        diag_path, [functional.diagnostics_row("solution", cfg, solver, solution, V)]
    )
    outputs.append(str(diag_path))
    timings["total"] = time.time() - t_start
    manifest_path = _write_manifest(out_dir, run_id, Path(config_path), rc, outputs, timings)
    print(f"solution written to {sol_path} (manifest {manifest_path})")
    return EXIT_OK


def cmd_continuation(config_path: str) -> int:
    try:
        rc = load_run_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if rc.model.lam <= 0:
        print("config error: continuation requires model.lambda > 0", file=sys.stderr)
        return EXIT_CONFIG
    return cmd_solve(config_path)


# ---------------------------------------------------------------------------
# verification battery

def _verify_checks(rc: RunConfig, rng) -> list[tuple[str, bool, str]]:
    cfg, solver, V, geom = _problem(rc)
    g = cfg.grid
    checks = []

    def rand_field(scale=1.0):
        return Field(g, scale * rng.standard_normal((g.n,) * 3))

    # kernel symmetry and the two quadratic-form inequalities
    worst_sym, worst_cs, worst_prod = 0.0, -np.inf, -np.inf
    for _ in range(20):
        f, gg = rand_field(), rand_field()
        dfg = coulomb.d_form(solver, f, gg)
        dgf = coulomb.d_form(solver, gg, f)
        worst_sym = max(worst_sym, abs(dfg - dgf) / max(abs(dfg), 1e-300))
        dff = coulomb.d_form(solver, f, f)
        dgg = coulomb.d_form(solver, gg, gg)
        worst_cs = max(worst_cs, dfg**2 - dff * dgg * (1.0 + 1e-12))
        u, v = rand_field(), rand_field()
        uv = Field(g, u.values * v.values)
        u2 = Field(g, u.values**2)
        v2 = Field(g, v.values**2)
        lhs_p = coulomb.d_form(solver, uv, uv) ** 2
        rhs_p = coulomb.d_form(solver, u2, u2) * coulomb.d_form(solver, v2, v2)
        worst_prod = max(worst_prod, lhs_p - rhs_p * (1.0 + 1e-12))
    checks.append(("d_form symmetry", worst_sym <= 1e-12, f"max rel asym {worst_sym:.2e}"))
    checks.append(("kernel Cauchy-Schwarz", worst_cs <= 0.0, f"max defect {worst_cs:.2e}"))
    checks.append(("kernel product inequality", worst_prod <= 0.0, f"max defect {worst_prod:.2e}"))

    # positivity of the screening potential
    ok_pos = True
    for _ in range(5):
        phi = coulomb.phi_of(solver, rand_field())
        ok_pos &= float(np.min(phi.values)) >= -1e-12 * max(1.0, float(np.max(phi.values)))
    checks.append(("phi positivity", bool(ok_pos), ""))

    # operator identity and descent inequality
    worst_id, ok_lb = 0.0, True
    for _ in range(5):
        u = rand_field(0.5)
        res = aop.apply_A(cfg, solver, u, V, tol=1e-12)
        rep = aop.derivative_identity_check(cfg, solver, u, res.v, V)
        worst_id = max(worst_id, rep.rel_gap)
        ok_lb &= rep.lower_bound_ok
    checks.append(("operator identity", worst_id <= 1e-8, f"max rel gap {worst_id:.2e}"))
    checks.append(("descent lower bound", bool(ok_lb), ""))

    # gradient vs finite differences
    from .functional import dI_action, energy

    worst_fd = 0.0
    for _ in range(5):
        u, v = rand_field(0.5), rand_field(0.5)
        step = 1e-5
        e_plus = energy(cfg, solver, u + step * v, V).total
        e_minus = energy(cfg, solver, u + (-step) * v, V).total
        fd = (e_plus - e_minus) / (2 * step)
        an = dI_action(cfg, solver, u, v, V)
        worst_fd = max(worst_fd, abs(fd - an) / max(abs(an), 1e-300))
    checks.append(("gradient check", worst_fd <= 1e-6, f"max rel err {worst_fd:.2e}"))

    # cone contraction monitor
    samples = [cones.sample_near_neg_boundary(g, V, geom.eps, rng) for _ in range(10)]
    rep = cones.contraction_monitor(geom, cfg, solver, V, samples)
    checks.append(
        ("cone contraction <= 1/2", rep.contracts, f"max ratio {rep.max_ratio:.3f} at eps {geom.eps}")
    )
    return checks


def cmd_verify(config_path: str) -> int:
    try:
        rc = load_run_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rng = np.random.default_rng(rc.rng_seed)
    checks = _verify_checks(rc, rng)
    width = max(len(name) for name, _, _ in checks)
    all_ok = True
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        all_ok &= ok
    return EXIT_OK if all_ok else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# VTK export

def cmd_export_vtk(field_path: str, out_path: str) -> int:
    try:
        u = read_field(field_path)
    except FileNotFoundError:
        print(f"error: field dump not found: {field_path}", file=sys.stderr)
        return EXIT_CONFIG
    except FieldFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    g = u.grid
    origin = -g.L + g.h
    with open(out_path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("spflow field\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {g.n} {g.n} {g.n}\n")
        fh.write(f"ORIGIN {origin} {origin} {origin}\n")
        fh.write(f"SPACING {g.h} {g.h} {g.h}\n")
        fh.write(f"POINT_DATA {g.num_nodes}\n")
        fh.write("SCALARS u double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        # VTK structured points iterate x fastest; dump values are row-major
        # in (i, j, k), so transpose to put the i index innermost
        flat = u.values.transpose(2, 1, 0).ravel()
        for start in range(0, flat.size, 6):
            fh.write(" ".join(repr(float(v)) for v in flat[start : start + 6]) + "\n")
    print(f"wrote {out_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="run the minimax or continuation pipeline")
    p_solve.add_argument("config")
    p_cont = sub.add_parser("continuation", help="run the perturbation homotopy")
    p_cont.add_argument("config")
    p_verify = sub.add_parser("verify", help="run the invariant battery")
    p_verify.add_argument("config")
    p_vtk = sub.add_parser("export-vtk", help="convert a field dump to legacy VTK")
    p_vtk.add_argument("field")
    p_vtk.add_argument("out")
    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config)
    if args.command == "continuation":
        return cmd_continuation(args.config)
    if args.command == "verify":
        return cmd_verify(args.config)
    if args.command == "export-vtk":
        return cmd_export_vtk(args.field, args.out)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
