#!/usr/bin/env python3
"""Run the perturbation homotopy for slow-growth exponents (p in (3, 4)).

Usage: python scripts/run_continuation.py [config.json]
Defaults to the shipped configs/continuation_p35.json.
"""

import sys
import time

from spflow import cones, coulomb, minimax, model
from spflow.config import load_run_config
from spflow.continuation import continuation_run, write_continuation_trace
from spflow.functional import nodal_count, pohozaev_residual
from spflow.grid import write_field


def main() -> int:
    config = sys.argv[1] if len(sys.argv) > 1 else "configs/continuation_p35.json"
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
    result = continuation_run(cfg, solver, V, geom, seeds, rc.continuation)
    print(f"stages          : {len(result.stages)}")
    print(f"polish residual : {result.polish.residual:.3e}")
    print(f"nodal count     : {nodal_count(result.solution)}")
    cfg0 = cfg.with_lambda(0.0)
    print(f"poho at limit   : {pohozaev_residual(cfg0, solver, result.solution, V):+.5f}")
    ds = result.distances
    print("stage distances :", " ".join(f"{d:.2e}" for d in ds))
    print(f"wall time       : {time.time() - t0:.1f}s")
    out = rc.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_field(out / "solution.spfld", result.solution)
    write_continuation_trace(out / "continuation.csv", result.stages)
    print(f"artifacts -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
