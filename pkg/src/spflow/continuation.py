"""Perturbation homotopy: solve with the extra fast-growing term, send it to zero.

For slow-growth nonlinearities (mu in (3, 4]) the unperturbed minimax
geometry degenerates, so stage zero solves the problem with an added
lam |u|^(r-2) u term, r in (p, 6), whose degree exceeds the quartic
coupling. Each later stage halves lam and warm-starts the descending flow
from the previous solution, falling back to a fresh minimax if the warm
start collapses into the cone neighborhoods. A final polish at lam = 0
must pass residual, sign-change, and dilation-identity checks at once,
otherwise the branch is rejected rather than reported.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

from . import model
from .cones import ConeGeometry
from .coulomb import CoulombSolver, coupling_energy
from .flow import FlowOutcome, FlowParams, LineSearchError, flow_to_convergence
from .functional import ar_combination, energy, nodal_count, pohozaev_residual
from .grid import Field, e_norm
from .minimax import (
    MinimaxParams,
    PathAbsorbedError,
    MinimaxStallError,
    SeedPair,
    TuneRError,
    build_phi0,
    minimax_solve,
    tune_R,
)


class ContinuationError(RuntimeError):
    """A stage failed and no fallback recovered it."""


class BranchRejectedError(RuntimeError):
    """The polished limit failed the acceptance checks."""


@dataclass
class ContinuationSchedule:
    lambda0: float = 1.0
    shrink: float = 0.5
    lambda_min: float = 1e-4
    stage_flow: FlowParams = field(default_factory=lambda: FlowParams(residual_tol=1e-9))
    polish_flow: FlowParams = field(default_factory=lambda: FlowParams(residual_tol=1e-8))
    minimax: MinimaxParams = field(default_factory=MinimaxParams)
    path_mode: str = "scaled"
    lattice_m: int = 6
    poho_accept: float = 0.05
    jump_factor: float = 5.0

    def __post_init__(self):
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be >= 0")


@dataclass
class StageRecord:
    stage: int
    lam: float
    energy: float
    residual: float
    coupling: float
    poho: float
    branch_flag: str
    warm_used: bool
    ar_mismatch: float


@dataclass
class ContinuationResult:
    solution: Field
    stages: list
    distances: list          # E-distance between consecutive stage solutions
    coupling_max: float
    polish: FlowOutcome


def stage_solve(
    cfg_lam: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    seeds: SeedPair,
    sched: ContinuationSchedule,
    warm: Optional[Field] = None,
    rng=None,
) -> tuple[Field, str, bool]:
    """One fixed-lambda solve: warm-started flow with a fresh-minimax fallback.

    Returns (solution, flag, warm_used); flag records a fallback or jump.
    """
    from .cones import cone_dist
    from .minimax import FiberGeometryError, MinimaxParams, peak_descend, polish_descend

    if warm is not None:
        # the stage saddle keeps its unstable fiber directions: drive the
        # warm start by fiber-peak descent, falling back to the nearest
        # fiber-critical centering when the peak structure is unavailable
        out = None
        try:
            out = peak_descend(
                cfg_lam, solver, V, geom, warm,
                MinimaxParams(flow=sched.stage_flow), rng=rng,
            )
        except (LineSearchError, FiberGeometryError):
            out = None
        if out is None or not out.converged:
            try:
                start = warm if out is None else out.terminal
                out = polish_descend(cfg_lam, solver, V, geom, start, sched.stage_flow)
            except (LineSearchError, FiberGeometryError):
                out = None
        if out is not None:
            dp = cone_dist(geom, out.terminal, V, "Pplus")
            dm = cone_dist(geom, out.terminal, V, "Pminus")
            if out.converged and dp >= geom.eps and dm >= geom.eps:
                return out.terminal, "", True
            flag = "warm-left-W" if out.converged else "warm-no-convergence"
        else:
            flag = "warm-line-search"
    else:
        flag = ""
    # scaled maps keep the path geometry uniform in the perturbation
    # weight, which is what makes fresh solves at small weights feasible
    R = tune_R(cfg_lam, solver, V, geom, seeds, mode=sched.path_mode, m=sched.lattice_m)
    path = build_phi0(cfg_lam, seeds, mode=sched.path_mode, m=sched.lattice_m, R=R)
    result = minimax_solve(cfg_lam, solver, V, geom, path, sched.minimax, rng=rng)
    if warm is None:
        return result.solution, "", False
    return result.solution, (flag + "+fallback-minimax").lstrip("+"), False


def continuation_run(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    seeds: SeedPair,
    sched: ContinuationSchedule,
    rng=None,
) -> ContinuationResult:
    """Drive lambda from lambda0 down to zero, tracking one solution branch."""
    if sched.lambda0 == 0.0:
        # degenerate schedule: plain minimax on the unperturbed functional
        R = tune_R(cfg.with_lambda(0.0), solver, V, geom, seeds, mode="amplitude", m=sched.lattice_m)
        path = build_phi0(cfg.with_lambda(0.0), seeds, mode="amplitude", m=sched.lattice_m, R=R)
        result = minimax_solve(cfg.with_lambda(0.0), solver, V, geom, path, sched.minimax, rng=rng)
        polish = _polish(cfg.with_lambda(0.0), solver, V, geom, result.solution, sched, rng)
        rec = _record(0, 0.0, cfg.with_lambda(0.0), solver, V, polish.terminal, polish.residual, "", False)
        _accept_or_reject(cfg.with_lambda(0.0), solver, V, geom, polish, sched)
        return ContinuationResult(
            solution=polish.terminal,
            stages=[rec],
            distances=[],
            coupling_max=rec.coupling,
            polish=polish,
        )

    lam = sched.lambda0
    stages: list[StageRecord] = []
    distances: list[float] = []
    prev: Optional[Field] = None
    stage = 0
    last_lam = lam
    while True:
        cfg_lam = cfg.with_lambda(lam)
        try:
            u, flag, warm_used = stage_solve(cfg_lam, solver, V, geom, seeds, sched, warm=prev, rng=rng)
        except (TuneRError, PathAbsorbedError, MinimaxStallError, LineSearchError) as exc:
            raise ContinuationError(
                f"stage {stage} (lambda={lam:.3e}) failed after last good lambda "
                f"{last_lam:.3e}: {exc}"
            ) from exc
        if prev is not None:
            d = e_norm(u - prev, V)
            if distances and d > sched.jump_factor * max(distances[-1], 1e-300):
                flag = (flag + "+jump").lstrip("+")
            distances.append(d)
        res = _residual_of(cfg_lam, solver, V, u)
        stages.append(_record(stage, lam, cfg_lam, solver, V, u, res, flag, warm_used))
        prev = u
        last_lam = lam
        stage += 1
        if lam <= sched.lambda_min:
            break
        lam *= sched.shrink

    cfg0 = cfg.with_lambda(0.0)
    polish = _polish(cfg0, solver, V, geom, prev, sched, rng)
    distances.append(e_norm(polish.terminal - prev, V))
    stages.append(
        _record(stage, 0.0, cfg0, solver, V, polish.terminal, polish.residual, "polish", True)
    )
    _accept_or_reject(cfg0, solver, V, geom, polish, sched)
    return ContinuationResult(
        solution=polish.terminal,
        stages=stages,
        distances=distances,
        coupling_max=max(rec.coupling for rec in stages),
        polish=polish,
    )


def _polish(cfg0, solver, V, geom, u, sched: ContinuationSchedule, rng) -> FlowOutcome:
    """Zero-perturbation polish: fiber-centered when the growth is slow,
    plain descent when the unperturbed energy already has peak geometry."""
    from .minimax import FiberGeometryError, polish_descend

    if cfg0.mu_eff > 4.0:
        return flow_to_convergence(cfg0, solver, V, geom, u, sched.polish_flow, rng=rng)
    try:
        return polish_descend(cfg0, solver, V, geom, u, sched.polish_flow)
    except FiberGeometryError:
        return flow_to_convergence(cfg0, solver, V, geom, u, sched.polish_flow, rng=rng)


def _residual_of(cfg, solver, V, u) -> float:
    from .aop import apply_A

    return apply_A(cfg, solver, u, V).fixed_point_gap


def _record(stage, lam, cfg_lam, solver, V, u, res, flag, warm_used) -> StageRecord:
    br = energy(cfg_lam, solver, u, V)
    ar = ar_combination(cfg_lam, solver, u, V, br.total)
    return StageRecord(
        stage=stage,
        lam=lam,
        energy=br.total,
        residual=res,
        coupling=coupling_energy(solver, u),
        poho=pohozaev_residual(cfg_lam, solver, u, V),
        branch_flag=flag,
        warm_used=warm_used,
        ar_mismatch=ar.mismatch,
    )


def _accept_or_reject(cfg0, solver, V, geom, polish: FlowOutcome, sched: ContinuationSchedule) -> None:
    """Final branch acceptance: residual, sign change, and dilation check together."""
    problems = []
    if not polish.converged:
        problems.append(f"polish residual {polish.residual:.3e} above tolerance")
    pos, neg = nodal_count(polish.terminal)
    if pos < 1 or neg < 1:
        problems.append(f"limit is not sign-changing (nodal counts {pos}, {neg})")
    poho = pohozaev_residual(cfg0, solver, polish.terminal, V)
    if abs(poho) > sched.poho_accept:
        problems.append(f"dilation identity residual {poho:.3e} above {sched.poho_accept}")
    if problems:
        raise BranchRejectedError("; ".join(problems))


# ---------------------------------------------------------------------------
# trace CSV

CONTINUATION_HEADER = [
    "stage",
    "lambda",
    "energy",
    "residual",
    "coupling_energy",
    "poho_residual",
    "branch_flag",
]


def write_continuation_trace(path, stages: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(CONTINUATION_HEADER)
        for rec in stages:
            writer.writerow(
                [
                    rec.stage,
                    repr(float(rec.lam)),
                    repr(float(rec.energy)),
                    repr(float(rec.residual)),
                    repr(float(rec.coupling)),
                    repr(float(rec.poho)),
                    rec.branch_flag,
                ]
            )


def monotonicity_monitor(stages: list) -> dict:
    """The level should not decrease as lambda shrinks (it is decreasing in lambda).

    Reported, not asserted: branch switches legitimately break it.
    """
    lams = [rec.lam for rec in stages]
    energies = [rec.energy for rec in stages]
    violations = [
        i
        for i in range(1, len(stages))
        if lams[i] < lams[i - 1] and energies[i] < energies[i - 1] - 1e-10 * max(1.0, abs(energies[i - 1]))
    ]
    return {"violations": violations, "ok": not violations}
