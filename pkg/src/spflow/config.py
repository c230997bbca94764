"""JSON run configuration: strict parsing into the solver parameter objects.

Schema (unknown keys rejected at every level):

    {
      "box":          {"L": 8.0, "n": 48},
      "model":        {"potential": "harmonic" | {"constant": c}, "p": 4.5,
                       "mu": 4.5, "lambda": 0.0, "r": 5.25},
      "cones":        {"eps": 0.05, "calibrate": false},
      "flow":         {"step_init": 1.0, "residual_tol": 1e-8, ...},
      "minimax":      {"m": 8, "steps_per_sweep": 3, "seeds": {...}, ...},
      "continuation": {"lambda0": 1.0, "shrink": 0.5, "lambda_min": 1e-4, ...},
      "output":       {"dir": "out"},
      "seed": 12345
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .continuation import ContinuationSchedule
from .flow import FlowParams
from .minimax import MinimaxParams
from .model import ConfigError, ModelConfig


@dataclass
class SeedSpec:
    center1: tuple = (-2.0, 0.0, 0.0)
    center2: tuple = (2.0, 0.0, 0.0)
    radius: float = 1.5
    amplitude: float = 2.0


@dataclass
class RunConfig:
    model: ModelConfig
    flow: FlowParams
    minimax: MinimaxParams
    continuation: ContinuationSchedule
    seeds: SeedSpec
    lattice_m: int = 8
    calibrate_cones: bool = False
    output_dir: Path = Path("out")
    rng_seed: int = 12345
    path_mode: str = "amplitude"
    # hidden fault-injection hook for the verify command's self-test
    fault: Optional[str] = None


def _take(doc: dict, section: str, allowed: set) -> dict:
    sub = doc.get(section, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return sub


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be an object")
    top_allowed = {"box", "model", "cones", "flow", "minimax", "continuation", "output", "seed", "fault"}
    unknown = set(doc) - top_allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    box = _take(doc, "box", {"L", "n"})
    mdl = _take(doc, "model", {"potential", "p", "mu", "lambda", "r", "coulomb_mode", "tol_lin"})
    cones = _take(doc, "cones", {"eps", "calibrate"})
    flow = _take(
        doc,
        "flow",
        {"step_init", "step_shrink", "max_steps", "residual_tol", "energy_floor", "armijo_kappa"},
    )
    mm = _take(
        doc,
        "minimax",
        {"m", "burst_steps", "max_sweeps", "sweep_tol_lin",
         "mode", "seeds", "exact_final_check"},
    )
    cont = _take(
        doc,
        "continuation",
        {"lambda0", "shrink", "lambda_min", "lattice_m", "poho_accept", "path_mode"},
    )
    out = _take(doc, "output", {"dir"})

    potential = mdl.get("potential", "harmonic")
    pot_kind, pot_const = "harmonic", 1.0
    if isinstance(potential, str):
        pot_kind = potential
    elif isinstance(potential, dict):
        unknown = set(potential) - {"constant"}
        if unknown:
            raise ConfigError(f"unknown potential spec keys: {sorted(unknown)}")
        pot_kind, pot_const = "constant", float(potential["constant"])
    else:
        raise ConfigError("model.potential must be a string or {'constant': c}")

    model_cfg = ModelConfig(
        L=float(box.get("L", 8.0)),
        n=int(box.get("n", 48)),
        potential=pot_kind,
        potential_constant=pot_const,
        p=float(mdl.get("p", 4.5)),
        mu=float(mdl["mu"]) if "mu" in mdl else None,
        lam=float(mdl.get("lambda", 0.0)),
        r=float(mdl["r"]) if "r" in mdl else None,
        eps_cone=float(cones.get("eps", 0.05)),
        coulomb_mode=str(mdl.get("coulomb_mode", "freespace")),
        tol_lin=float(mdl.get("tol_lin", 1e-10)),
    )

    flow_params = FlowParams(
        step_init=float(flow.get("step_init", 1.0)),
        step_shrink=float(flow.get("step_shrink", 0.5)),
        max_steps=int(flow.get("max_steps", 400)),
        residual_tol=float(flow.get("residual_tol", 1e-8)),
        energy_floor=float(flow.get("energy_floor", -1e12)),
        armijo_kappa=float(flow.get("armijo_kappa", 0.25)),
    )

    mm_params = MinimaxParams(
        burst_steps=int(mm.get("burst_steps", 40)),
        max_sweeps=int(mm.get("max_sweeps", 200)),
        sweep_tol_lin=float(mm.get("sweep_tol_lin", 1e-6)),
        flow=flow_params,
        exact_final_check=bool(mm.get("exact_final_check", False)),
    )

    seeds_doc = mm.get("seeds", {})
    if not isinstance(seeds_doc, dict):
        raise ConfigError("minimax.seeds must be an object")
    unknown = set(seeds_doc) - {"center1", "center2", "radius", "amplitude"}
    if unknown:
        raise ConfigError(f"unknown keys in minimax.seeds: {sorted(unknown)}")
    seed_spec = SeedSpec(
        center1=tuple(seeds_doc.get("center1", (-2.0, 0.0, 0.0))),
        center2=tuple(seeds_doc.get("center2", (2.0, 0.0, 0.0))),
        radius=float(seeds_doc.get("radius", 1.5)),
        amplitude=float(seeds_doc.get("amplitude", 2.0)),
    )

    sched = ContinuationSchedule(
        lambda0=float(cont.get("lambda0", model_cfg.lam if model_cfg.lam > 0 else 1.0)),
        shrink=float(cont.get("shrink", 0.5)),
        lambda_min=float(cont.get("lambda_min", 1e-4)),
        stage_flow=FlowParams(residual_tol=min(1e-9, flow_params.residual_tol)),
        polish_flow=flow_params,
        minimax=mm_params,
        path_mode=str(cont.get("path_mode", "scaled")),
        lattice_m=int(cont.get("lattice_m", 6)),
        poho_accept=float(cont.get("poho_accept", 0.05)),
    )

    return RunConfig(
        model=model_cfg,
        flow=flow_params,
        minimax=mm_params,
        continuation=sched,
        seeds=seed_spec,
        lattice_m=int(mm.get("m", 8)),
        calibrate_cones=bool(cones.get("calibrate", False)),
        output_dir=Path(out.get("dir", "out")),
        rng_seed=int(doc.get("seed", 12345)),
        path_mode=str(mm.get("mode", "amplitude")),
        fault=doc.get("fault"),
    )
