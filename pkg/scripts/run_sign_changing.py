#!/usr/bin/env python3
"""Solve the unperturbed sign-changing problem (p > 4) and print a summary.

Usage: python scripts/run_sign_changing.py [config.json]
Defaults to the shipped configs/solve_p45.json.
"""

import sys
import time
from spflow import cones, coulomb, minimax, model
from spflow.aop import apply_A
from spflow.config import load_run_config
from spflow.functional import energy, nodal_count, pohozaev_residual
from spflow.grid import write_field


def main() -> int:
    config = sys.argv[1] if len(sys.argv) > 1 else "configs/solve_p45.json"
    rc = load_run_config(config)
    cfg = rc.model
    solver = coulomb.CoulombSolver(cfg.grid, cfg.coulomb_mode)
    V = model.eval_V(cfg)
    geom = cones.ConeGeometry(eps=cfg.eps_cone)
    seeds = minimax.bump_seed_pair(
        cfg.grid,
        center1=rc.seeds.center1,
        center2=rc.seeds.center2,
        radius=rc.seeds.radius,
        amplitude=rc.seeds.amplitude,
    )
    t0 = time.time()
    R = minimax.tune_R(cfg, solver, V, geom, seeds, mode=rc.path_mode, m=rc.lattice_m)
    path = minimax.build_phi0(cfg, seeds, mode=rc.path_mode, m=rc.lattice_m, R=R)
    result = minimax.minimax_solve(cfg, solver, V, geom, path, rc.minimax)
    u = result.solution
    res = apply_A(cfg, solver, u, V, tol=1e-12).fixed_point_gap
    print(f"level      : {result.level:.6f}")
    print(f"residual   : {res:.3e}")
    print(f"nodal count: {nodal_count(u)}")
    print(f"poho       : {pohozaev_residual(cfg, solver, u, V):+.5f}")
    print(f"energy     : {energy(cfg, solver, u, V).total:.6f}")
    print(f"wall time  : {time.time() - t0:.1f}s")
    out = rc.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "solution.spfld", u)
    print(f"solution -> {out / 'solution.spfld'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
