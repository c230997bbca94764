"""Damped descending iteration replacing the continuous deformation flow.

Each accepted step moves u toward A(u) along the convex combination
(1-s) u + s A(u) with s in (0, 1], the largest halved step satisfying an
Armijo decrease keyed to the fixed-point gap. Keeping s <= 1 makes cone
invariance a convexity corollary instead of an ODE-tracking argument; the
cutoff and time budget of the continuous deformation have no discrete
counterpart, and convergence is declared by the residual alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import model
from .aop import ASolveResult, apply_A, dual_norm_estimate
from .cones import ConeGeometry, cone_dist
from .coulomb import CoulombSolver
from .functional import energy
from .grid import Field, e_norm


class LineSearchError(RuntimeError):
    """No admissible step produced the required energy decrease."""


class EnergyFloorError(RuntimeError):
    """The energy fell through the configured floor (misconfigured run)."""


@dataclass
class FlowParams:
    step_init: float = 1.0
    step_shrink: float = 0.5
    max_steps: int = 400
    residual_tol: float = 1e-8
    energy_floor: float = -1e12
    armijo_kappa: float = 0.25
    max_backtracks: int = 40
    tol_lin: Optional[float] = None  # linear-solve tolerance override
    stagnation_probes: int = 8

    def __post_init__(self):
        if not (0.0 < self.step_init <= 1.0):
            raise ValueError("step_init must lie in (0, 1] for cone invariance")
        if not (0.0 < self.step_shrink < 1.0):
            raise ValueError("step_shrink must lie in (0, 1)")


@dataclass
class FlowOutcome:
    terminal: Field
    converged: bool
    residual: float
    energy_trace: list = field(default_factory=list)
    cone_trace: list = field(default_factory=list)  # (in closure P+, in closure P-)
    dist_trace: list = field(default_factory=list)  # (dist to P+, dist to P-)
    steps: int = 0
    stagnation: bool = False
    step_trace: list = field(default_factory=list)  # (step, s, residual, energy)


def flow_step(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    u: Field,
    params: FlowParams,
    a_result: Optional[ASolveResult] = None,
    e0: Optional[float] = None,
) -> tuple[Field, float, ASolveResult]:
    """One damped step toward A(u) with Armijo control on the energy."""
    if a_result is None:
        a_result = apply_A(cfg, solver, u, V, tol=params.tol_lin)
    res = a_result.fixed_point_gap
    if res <= 0.0:
        raise ValueError("flow_step requires a non-critical point (residual > 0)")
    if e0 is None:
        e0 = energy(cfg, solver, u, V).total
    direction = a_result.v - u
    s = params.step_init
    slack = 1e-14 * max(1.0, abs(e0))  # energy evaluations carry roundoff
    for _ in range(params.max_backtracks):
        candidate = u + s * direction
        e1 = energy(cfg, solver, candidate, V).total
        if e1 <= e0 - params.armijo_kappa * s * res**2 + slack:
            return candidate, s, a_result
        s *= params.step_shrink
    from .aop import derivative_identity_check

    rep = derivative_identity_check(cfg, solver, u, a_result.v, V)
    raise LineSearchError(
        f"line search exhausted at residual {res:.3e}: descent identity lhs={rep.lhs:.6e} "
        f"rhs={rep.rhs:.6e} rel_gap={rep.rel_gap:.2e}; check tolerances"
    )


def flow_to_convergence(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    u0: Field,
    params: FlowParams,
    rng=None,
) -> FlowOutcome:
    """Iterate damped steps until the fixed-point gap drops below tolerance."""
    u = u0.copy()
    outcome = FlowOutcome(terminal=u, converged=False, residual=np.inf)
    warm: Optional[Field] = None
    for step in range(params.max_steps):
        a_res = apply_A(cfg, solver, u, V, tol=params.tol_lin, x0=warm)
        warm = a_res.v
        res = a_res.fixed_point_gap
        e_now = energy(cfg, solver, u, V).total
        outcome.energy_trace.append(e_now)
        _record_cones(geom, u, V, outcome)
        if e_now < params.energy_floor:
            raise EnergyFloorError(
                f"energy {e_now:.3e} fell below the floor {params.energy_floor:.3e}"
            )
        if res <= params.residual_tol:
            outcome.terminal = u
            outcome.converged = True
            outcome.residual = res
            outcome.steps = step
            _flag_stagnation(cfg, solver, V, u, res, params, outcome, rng)
            return outcome
        u, s, _ = flow_step(cfg, solver, V, geom, u, params, a_result=a_res)
        outcome.step_trace.append((step, s, res, e_now))
    # out of steps
    a_res = apply_A(cfg, solver, u, V, tol=params.tol_lin, x0=warm)
    outcome.terminal = u
    outcome.residual = a_res.fixed_point_gap
    outcome.converged = outcome.residual <= params.residual_tol
    outcome.steps = params.max_steps
    outcome.energy_trace.append(energy(cfg, solver, u, V).total)
    _record_cones(geom, u, V, outcome)
    _flag_stagnation(cfg, solver, V, u, outcome.residual, params, outcome, rng)
    return outcome


def _record_cones(geom: ConeGeometry, u: Field, V: Field, outcome: FlowOutcome) -> None:
    dp = cone_dist(geom, u, V, "Pplus")
    dm = cone_dist(geom, u, V, "Pminus")
    tol = 1e-10
    outcome.dist_trace.append((dp, dm))
    outcome.cone_trace.append(
        (dp <= geom.eps * (1.0 + tol) + tol, dm <= geom.eps * (1.0 + tol) + tol)
    )


def _flag_stagnation(cfg, solver, V, u, res, params, outcome, rng) -> None:
    """Flag the run when the gap is tiny yet gradient probes stay large.

    The continuum lower bound on the gap away from critical sets has no
    computable discrete constant, so this runtime monitor stands in for it.
    """
    if not outcome.converged or params.stagnation_probes <= 0:
        return
    rng = np.random.default_rng(0) if rng is None else rng
    probes = [
        Field(u.grid, rng.standard_normal((u.grid.n,) * 3))
        for _ in range(params.stagnation_probes)
    ]
    est = dual_norm_estimate(cfg, solver, u, V, probes)
    # the gradient bound says est <~ res * (1 + C ||u||_E^2); flag wide violations
    ceiling = 10.0 * max(res, params.residual_tol) * (1.0 + e_norm(u, V) ** 2)
    if est > ceiling:
        outcome.stagnation = True


# ---------------------------------------------------------------------------
# one-signed bound states via ray peak descent

class DescentGeometryError(RuntimeError):
    """A re-centering step lost the geometric structure it needs."""


class RayGeometryError(DescentGeometryError):
    """The ray energy has no interior peak (degenerate growth)."""


def ray_max(cfg: model.ModelConfig, solver: CoulombSolver, u: Field, V: Field) -> tuple[Field, float, float]:
    """Rescale u to the peak of the energy along its ray {t u : t > 0}.

    Needs growth beyond the quartic coupling (p > 4, or lam > 0 with
    r > 4), the same condition as the mountain geometry itself.
    """
    growth = max(cfg.p, cfg.r_eff if cfg.lam > 0 else 0.0)
    if growth <= 4.0:
        raise RayGeometryError(f"ray peak needs p > 4 or an active perturbation, got p={cfg.p}")
    h3 = u.grid.h**3
    from .coulomb import coupling_energy

    a = e_norm(u, V) ** 2
    c = coupling_energy(solver, u)
    b = h3 * float(np.sum(np.abs(u.values) ** cfg.p))
    if b <= 0:
        raise RayGeometryError("ray peak needs a nontrivial field")
    r = cfg.r_eff
    d = h3 * float(np.sum(np.abs(u.values) ** r)) if cfg.lam > 0 else 0.0

    def g(t):
        val = 0.5 * t**2 * a + 0.25 * t**4 * c - t**cfg.p / cfg.p * b
        return val - cfg.lam / r * t**r * d

    def dg(t):
        return t * a + t**3 * c - t ** (cfg.p - 1) * b - cfg.lam * t ** (r - 1) * d

    t = 1.0
    for _ in range(200):
        if dg(t) <= 0:
            break
        t *= 2.0
        if t > 1e12:
            raise RayGeometryError("ray energy keeps growing; no peak found")
    lo = 0.0
    hi = t
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dg(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    return t * u, g(t), t


def ray_descend(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    u0: Field,
    params: FlowParams,
) -> FlowOutcome:
    """Descend the ray-peak value toward the one-signed bound state.

    The nontrivial one-signed critical points are ray saddles (the
    energy is unbounded below along rays), so plain descent from a
    generic seed collapses to zero or runs down the valley. Re-scaling
    to the ray peak before each damped step removes the unstable ray
    direction; the iteration then converges to the bound state with the
    seed's sign (sign structure is preserved by inverse positivity of
    the screened operator and steps staying inside [0, 1]).
    """
    u, val, _ = ray_max(cfg, solver, u0, V)
    outcome = FlowOutcome(terminal=u, converged=False, residual=np.inf)
    warm: Optional[Field] = None
    base_tol = params.tol_lin if params.tol_lin is not None else cfg.tol_lin
    res = np.inf
    for step in range(params.max_steps):
        rel = (res if np.isfinite(res) else 1.0) / max(e_norm(u, V), 1.0)
        tol_eff = float(np.clip(1e-5 * rel, 1e-13, base_tol))
        a_res = apply_A(cfg, solver, u, V, tol=tol_eff, x0=warm)
        warm = a_res.v
        res = a_res.fixed_point_gap
        outcome.energy_trace.append(val)
        dp = cone_dist(geom, u, V, "Pplus")
        dm = cone_dist(geom, u, V, "Pminus")
        outcome.dist_trace.append((dp, dm))
        outcome.cone_trace.append((dp <= geom.eps, dm <= geom.eps))
        if res <= params.residual_tol:
            outcome.terminal = u
            outcome.converged = True
            outcome.residual = res
            outcome.steps = step
            return outcome
        direction = a_res.v - u
        meas_floor = 64.0 * np.finfo(float).eps * max(1.0, abs(val))
        if params.armijo_kappa * params.step_init * res**2 < meas_floor:
            from .minimax import _local_phase

            def recenter(cand):
                return ray_max(cfg, solver, cand, V)[0]

            return _local_phase(
                cfg, solver, V, geom, u, recenter, params, base_tol, outcome, step
            )
        s = params.step_init
        accepted = False
        for _ in range(params.max_backtracks):
            try:
                w, wval, _ = ray_max(cfg, solver, u + s * direction, V)
            except RayGeometryError:
                s *= params.step_shrink
                continue
            if wval <= val - params.armijo_kappa * s * res**2:
                u, val = w, wval
                outcome.step_trace.append((step, s, res, val))
                accepted = True
                break
            s *= params.step_shrink
        if not accepted:
            raise LineSearchError(f"ray-peak line search exhausted at residual {res:.3e}")
    outcome.terminal = u
    outcome.residual = apply_A(cfg, solver, u, V, tol=params.tol_lin).fixed_point_gap
    outcome.converged = outcome.residual <= params.residual_tol
    outcome.steps = params.max_steps
    return outcome


FLOW_TRACE_HEADER = ["step", "s", "residual", "energy", "dist_Pplus", "dist_Pminus"]


def write_flow_trace(path, outcome: FlowOutcome) -> None:
    """Per-run trace CSV, one row per visited iterate plus the terminal row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(FLOW_TRACE_HEADER)
        steps = {rec[0]: rec for rec in outcome.step_trace}
        for i, e_now in enumerate(outcome.energy_trace):
            dp, dm = outcome.dist_trace[i] if i < len(outcome.dist_trace) else ("", "")
            if i in steps:
                _, s, res, _ = steps[i]
            else:
                s, res = "", outcome.residual if i == len(outcome.energy_trace) - 1 else ""
            writer.writerow(
                [
                    i,
                    repr(float(s)) if s != "" else "",
                    repr(float(res)) if res != "" else "",
                    repr(float(e_now)),
                    repr(float(dp)) if dp != "" else "",
                    repr(float(dm)) if dm != "" else "",
                ]
            )
