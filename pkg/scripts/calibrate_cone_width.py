#!/usr/bin/env python3
"""Calibrate the invariant cone width empirically for a given problem.

The contraction factor 1/2 of the auxiliary operator near the cone
boundary is only guaranteed below an unknown width; this sweep finds the
largest tested width that still contracts and prints the evidence.

Usage: python scripts/calibrate_cone_width.py [config.json]
"""

import sys

import numpy as np

from spflow import cones, coulomb, model
from spflow.config import load_run_config


def main() -> int:
    config = sys.argv[1] if len(sys.argv) > 1 else "configs/verify_small.json"
    rc = load_run_config(config)
    cfg = rc.model
    solver = coulomb.CoulombSolver(cfg.grid, cfg.coulomb_mode)
    V = model.eval_V(cfg)
    rng = np.random.default_rng(rc.rng_seed)
    eps, reports = cones.calibrate_eps(cfg, solver, V, n_samples=30, rng=rng)
    for rep in reports:
        status = "contracts" if rep.contracts else "fails"
        print(f"eps = {rep.eps:<8g} max ratio = {rep.max_ratio:.4f}  ({status})")
    print(f"recommended cone width: {eps}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
