"""Two-parameter simplex minimax over the invariant-cone complement.

A triangular lattice discretizes the simplex of seed combinations. The
outer edge is pinned (those samples never move), the two axis edges start
inside the cone neighborhoods and stay there under the flow, and the rest
are driven downhill. The peak of the energy over samples outside the union
of cone neighborhoods estimates the minimax level from above; once the
peak sample is nearly a fixed point it is flowed to convergence and
certified.

Because samples flow independently, a coarse lattice can slide off the
energy ridge entirely (every sample ends up one-signed or far downhill
even though the continuous path still crosses the ridge). The driver
therefore bisects "conflict edges" -- lattice edges whose endpoints sit in
opposite cone neighborhoods -- inserting their midpoints as new samples.
The seed map is linear in the simplex parameters, so midpoints are exact
path points on the pinned edge and convex combinations elsewhere, and the
inserted chain homes in on the watershed between the two one-signed
basins, where the sign-changing saddle lives.

Multiple solutions come from a deflation loop over distinct seed pairs:
a terminal is accepted as new only if it is separated in norm from every
previously found solution and its negation. Separation in norm stands in
for the topological index of the continuum multiplicity argument, which
is not computable.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import model
from .aop import apply_A
from .cones import ConeGeometry, cone_dist
from .coulomb import CoulombSolver, d_form
from .flow import (
    DescentGeometryError,
    FlowOutcome,
    FlowParams,
    LineSearchError,
    flow_step,
    flow_to_convergence,
)
from .functional import energy, nodal_count
from .grid import Field, check_same_grid, e_norm, lp_norm


class SeedError(ValueError):
    """Seed pair violates sign or support requirements."""


class TuneRError(RuntimeError):
    """Amplitude sweep hit its cap before the boundary conditions held."""


class PathAbsorbedError(RuntimeError):
    """Every lattice sample entered the cone neighborhoods."""


class MinimaxStallError(RuntimeError):
    """Sweep cap reached before the peak sample became nearly critical."""


def worker_count() -> int:
    env = os.environ.get("SPFLOW_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# seeds

@dataclass
class SeedPair:
    """Disjointly supported one-signed seeds: v1 <= 0 <= v2, plus the amplitude R."""

    v1: Field
    v2: Field
    R: float = 1.0
    # analytic bump metadata [(center, radius, amplitude), ...] enabling exact
    # resampling of x -> v(R x) in scaled mode; None for tabulated seeds
    bumps1: Optional[list] = None
    bumps2: Optional[list] = None

    def __post_init__(self):
        check_same_grid(self.v1, self.v2)
        if not np.any(self.v1.values) or not np.any(self.v2.values):
            raise SeedError("seed fields must be nontrivial")
        if np.max(self.v1.values) > 0 or np.min(self.v2.values) < 0:
            raise SeedError("need v1 <= 0 and v2 >= 0 nodewise")
        if np.any((self.v1.values != 0) & (self.v2.values != 0)):
            raise SeedError("seed supports must be nodewise disjoint")


def mollifier_bump(grid, center, radius: float, amplitude: float = 1.0) -> Field:
    """Smooth compactly supported bump exp(1 - 1/(1 - (|x-c|/rho)^2)) inside its ball."""
    X, Y, Z = grid.meshgrid()
    rsq = ((X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2) / radius**2
    vals = np.zeros_like(rsq)
    inside = rsq < 1.0
    vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - rsq[inside]))
    return Field(grid, vals)


def _sample_bumps(grid, bumps, R: float) -> np.ndarray:
    """Sample a sum of bumps at dilated coordinates R*x, exactly from the closed form."""
    out = np.zeros((grid.n,) * 3)
    X, Y, Z = grid.meshgrid()
    for (center, radius, amplitude) in bumps:
        rsq = (
            (R * X - center[0]) ** 2 + (R * Y - center[1]) ** 2 + (R * Z - center[2]) ** 2
        ) / radius**2
        inside = rsq < 1.0
        vals = np.zeros_like(rsq)
        vals[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - rsq[inside]))
        out += vals
    return out


def bump_seed_pair(
    grid,
    center1=(-2.0, 0.0, 0.0),
    center2=(2.0, 0.0, 0.0),
    radius: float = 1.5,
    amplitude: float = 2.0,
) -> SeedPair:
    """Canonical pair: a negative and a positive mollifier bump, disjoint supports."""
    c1 = np.asarray(center1, float)
    c2 = np.asarray(center2, float)
    if np.linalg.norm(c1 - c2) < 2.0 * radius:
        raise SeedError("bump supports overlap; pull the centers apart")
    b1 = mollifier_bump(grid, c1, radius, amplitude)
    b2 = mollifier_bump(grid, c2, radius, amplitude)
    return SeedPair(
        v1=-b1,
        v2=b2,
        bumps1=[(tuple(c1), radius, -amplitude)],
        bumps2=[(tuple(c2), radius, amplitude)],
    )


# ---------------------------------------------------------------------------
# the simplex path

BOUNDARY0 = "fixed"      # outer edge t1 + t2 = 1: pinned to the seed map
BOUNDARY1 = "Pplus"      # t1 = 0: nonnegative samples
BOUNDARY2 = "Pminus"     # t2 = 0: nonpositive samples
INTERIOR = "interior"

Key = tuple  # (Fraction, Fraction) simplex coordinates (t1, t2)


def _tag_of(t1: Fraction, t2: Fraction) -> str:
    if t1 + t2 == 1:
        return BOUNDARY0
    if t1 == 0:
        return BOUNDARY1
    if t2 == 0:
        return BOUNDARY2
    return INTERIOR


@dataclass
class SimplexPath:
    m: int
    R: float
    mode: str
    samples: dict            # key -> Field
    tags: dict               # key -> tag string
    edges: set               # frozenset({key_a, key_b}) lattice adjacency
    seeds: SeedPair

    def keys(self):
        return self.samples.keys()


def seed_combination(seeds: SeedPair, mode: str, R: float, t1: float, t2: float) -> Field:
    """The seed map at simplex parameters (t1, t2) for the given amplitude."""
    grid = seeds.v1.grid
    t1, t2 = float(t1), float(t2)
    if mode == "amplitude":
        return Field(grid, R * (t1 * seeds.v1.values + t2 * seeds.v2.values))
    if mode != "scaled":
        raise ValueError(f"unknown path mode {mode!r}")
    if seeds.bumps1 is None or seeds.bumps2 is None:
        v1R = _rescale_tabulated(seeds.v1, R)
        v2R = _rescale_tabulated(seeds.v2, R)
    else:
        v1R = Field(grid, _sample_bumps(grid, seeds.bumps1, R))
        v2R = Field(grid, _sample_bumps(grid, seeds.bumps2, R))
    return Field(grid, R**2 * (t1 * v1R.values + t2 * v2R.values))


def _rescale_tabulated(v: Field, R: float) -> Field:
    from .functional import rescale_field

    if R != int(R):
        raise SeedError("tabulated seeds support only integer dilations")
    return rescale_field(v, int(R))


def _min_feature_radius(seeds: SeedPair) -> float:
    radii = []
    for bumps in (seeds.bumps1, seeds.bumps2):
        if bumps:
            radii.extend(r for (_, r, _) in bumps)
    return min(radii) if radii else float("inf")


def check_scaled_resolution(seeds: SeedPair, R: float) -> None:
    """Dilated supports must stay resolvable: radius / R of a bump >= 2h."""
    grid = seeds.v1.grid
    rmin = _min_feature_radius(seeds)
    if rmin / R < 2.0 * grid.h:
        raise TuneRError(
            f"dilation R={R} shrinks seed support below the grid scale "
            f"({rmin / R:.3e} < 2h = {2 * grid.h:.3e})"
        )


def build_phi0(
    cfg: model.ModelConfig,
    seeds: SeedPair,
    mode: str = "amplitude",
    m: int = 8,
    R: Optional[float] = None,
) -> SimplexPath:
    """Lattice of the seed map over the simplex with boundary tags and adjacency."""
    if m < 2:
        raise ValueError("need lattice resolution m >= 2")
    R = seeds.R if R is None else R
    if R < 1.0:
        raise SeedError(f"amplitude/dilation must be >= 1, got {R}")
    if mode == "scaled":
        check_scaled_resolution(seeds, R)
    samples, tags = {}, {}
    for a in range(m + 1):
        for b in range(m + 1 - a):
            key = (Fraction(a, m), Fraction(b, m))
            samples[key] = seed_combination(seeds, mode, R, a / m, b / m)
            tags[key] = _tag_of(*key)
    edges = set()
    for a in range(m + 1):
        for b in range(m + 1 - a):
            k = (Fraction(a, m), Fraction(b, m))
            for da, db in ((1, 0), (0, 1), (1, -1)):
                a2, b2 = a + da, b + db
                if a2 >= 0 and b2 >= 0 and a2 + b2 <= m:
                    edges.add(frozenset((k, (Fraction(a2, m), Fraction(b2, m)))))
    path = SimplexPath(m=m, R=R, mode=mode, samples=samples, tags=tags, edges=edges, seeds=seeds)
    _check_boundary_signs(path)
    return path


def _check_boundary_signs(path: SimplexPath) -> None:
    for key, tag in path.tags.items():
        u = path.samples[key]
        if tag == BOUNDARY1 and np.min(u.values) < 0:
            raise SeedError(f"sample {key} on the P+ edge has negative values")
        if tag == BOUNDARY2 and np.max(u.values) > 0:
            raise SeedError(f"sample {key} on the P- edge has positive values")


def tune_R(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    seeds: SeedPair,
    mode: str = "amplitude",
    m: int = 8,
    m2_constant: Optional[float] = None,
    r_cap: float = 2.0**24,
) -> float:
    """Double R from 1 until the pinned edge is energy-negative and misses M.

    Condition (a): sup of the energy over the pinned edge < 0. Condition
    (b): min L2 norm over that edge exceeds m2 * eps, which by the
    embedding bound keeps the edge out of the cone intersection M.
    """
    from .cones import embedding_constant

    if m2_constant is None:
        m2_constant = embedding_constant(seeds.v1.grid, V, 2.0, trials=100)
    R = max(1.0, seeds.R)
    while True:
        if mode == "scaled":
            check_scaled_resolution(seeds, R)
        edge = [
            seed_combination(seeds, mode, R, a / m, (m - a) / m) for a in range(m + 1)
        ]
        sup_e = max(energy(cfg, solver, u, V).total for u in edge)
        min_l2 = min(lp_norm(u, 2.0) for u in edge)
        if sup_e < 0.0 and min_l2 > m2_constant * geom.eps:
            return R
        R *= 2.0
        if R > r_cap:
            raise TuneRError(
                f"amplitude sweep exceeded cap {r_cap} with edge energy {sup_e:.3e}"
            )


# ---------------------------------------------------------------------------
# the minimax driver

@dataclass
class MinimaxParams:
    burst_steps: int = 40           # flow steps per sample per round
    max_sweeps: int = 200
    sweep_tol_lin: float = 1e-6     # linear-solve tolerance while settling fates
    flow: FlowParams = field(default_factory=FlowParams)
    exact_final_check: bool = False
    trace_hook: Optional[object] = None   # callable(state dict) per sweep, for diagnosis
    max_inserts_per_sweep: int = 4
    max_samples: int = 600
    min_edge_length: Fraction = Fraction(1, 1 << 40)


@dataclass
class MinimaxCertificate:
    residual: float
    level: float
    level_ok: bool           # level >= eps^2/2 - tol
    dist_pplus: float
    dist_pminus: float
    outside_w: bool
    pos_nodes: int
    neg_nodes: int
    sign_changing: bool
    exact_dist_pplus: Optional[float] = None
    exact_dist_pminus: Optional[float] = None


@dataclass
class MinimaxResult:
    solution: Field
    level: float
    certificate: MinimaxCertificate
    sweeps: int
    level_trace: list = field(default_factory=list)
    argmax_trace: list = field(default_factory=list)
    inserted: int = 0


class FiberGeometryError(DescentGeometryError):
    """The two-parameter fiber has no interior maximum (degenerate growth)."""


def fiber_scalars(cfg: model.ModelConfig, solver: CoulombSolver, u: Field, V: Field) -> dict:
    """The scalars that determine the energy on the fiber {a u+ + b u-}.

    The parts have disjoint supports nodewise, so the monomial terms
    split exactly and the quartic coupling reduces to three kernel
    values; the fiber energy is then a closed-form function of (a, b).
    """
    from .cones import split_pm

    from .grid import e_inner

    up, um = split_pm(u)
    h3 = u.grid.h**3
    up2 = Field(u.grid, up.values**2)
    um2 = Field(u.grid, um.values**2)
    out = {
        "a_plus": e_inner_value(up, V),
        "a_minus": e_inner_value(um, V),
        # the 7-point stencil couples the parts across the nodal surface,
        # so the quadratic form keeps a discrete cross term
        "q_pm": e_inner(up, um, V),
        "c_pp": d_form(solver, up2, up2),
        "c_mm": d_form(solver, um2, um2),
        "c_pm": d_form(solver, up2, um2),
        "b_plus": h3 * float(np.sum(np.abs(up.values) ** cfg.p)),
        "b_minus": h3 * float(np.sum(np.abs(um.values) ** cfg.p)),
    }
    if cfg.lam > 0:
        r = cfg.r_eff
        out["d_plus"] = h3 * float(np.sum(np.abs(up.values) ** r))
        out["d_minus"] = h3 * float(np.sum(np.abs(um.values) ** r))
    else:
        out["d_plus"] = out["d_minus"] = 0.0
    return out


def e_inner_value(u: Field, V: Field) -> float:
    from .grid import e_inner

    return e_inner(u, u, V)


def fiber_energy(cfg: model.ModelConfig, sc: dict, a: float, b: float) -> float:
    r = cfg.r_eff
    val = 0.5 * (a**2 * sc["a_plus"] + b**2 * sc["a_minus"]) + a * b * sc["q_pm"]
    val += 0.25 * (a**4 * sc["c_pp"] + 2 * a**2 * b**2 * sc["c_pm"] + b**4 * sc["c_mm"])
    val -= (a**cfg.p * sc["b_plus"] + b**cfg.p * sc["b_minus"]) / cfg.p
    if cfg.lam > 0:
        val -= cfg.lam / r * (a**r * sc["d_plus"] + b**r * sc["d_minus"])
    return val


def fiber_max(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    V: Field,
    tol: float = 1e-12,
    maxiter: int = 200,
) -> tuple[Field, float, tuple]:
    """Rescale the parts of u to the peak of the energy over its fiber.

    Requires superquartic growth (p > 4, or a positive perturbation with
    r > 4); otherwise the fiber energy is unbounded above and the peak
    does not exist, which is exactly the degeneracy the perturbation
    homotopy repairs.
    """
    from .cones import split_pm

    growth = max(cfg.p, cfg.r_eff if cfg.lam > 0 else 0.0)
    if growth <= 4.0:
        raise FiberGeometryError(
            f"fiber peak needs growth beyond the quartic coupling (p={cfg.p}, "
            f"lam={cfg.lam}); use the perturbation homotopy"
        )
    sc = fiber_scalars(cfg, solver, u, V)
    if sc["b_plus"] <= 0 or sc["b_minus"] <= 0:
        raise FiberGeometryError("fiber peak needs both signed parts nontrivial")
    r = cfg.r_eff

    def grad_hess(a, b):
        ga = (
            a * sc["a_plus"]
            + b * sc["q_pm"]
            + a**3 * sc["c_pp"]
            + a * b**2 * sc["c_pm"]
            - a ** (cfg.p - 1) * sc["b_plus"]
            - cfg.lam * a ** (r - 1) * sc["d_plus"]
        )
        gb = (
            b * sc["a_minus"]
            + a * sc["q_pm"]
            + b**3 * sc["c_mm"]
            + a**2 * b * sc["c_pm"]
            - b ** (cfg.p - 1) * sc["b_minus"]
            - cfg.lam * b ** (r - 1) * sc["d_minus"]
        )
        haa = (
            sc["a_plus"]
            + 3 * a**2 * sc["c_pp"]
            + b**2 * sc["c_pm"]
            - (cfg.p - 1) * a ** (cfg.p - 2) * sc["b_plus"]
            - cfg.lam * (r - 1) * a ** (r - 2) * sc["d_plus"]
        )
        hbb = (
            sc["a_minus"]
            + 3 * b**2 * sc["c_mm"]
            + a**2 * sc["c_pm"]
            - (cfg.p - 1) * b ** (cfg.p - 2) * sc["b_minus"]
            - cfg.lam * (r - 1) * b ** (r - 2) * sc["d_minus"]
        )
        hab = sc["q_pm"] + 2 * a * b * sc["c_pm"]
        return np.array([ga, gb]), np.array([[haa, hab], [hab, hbb]])

    # ascend from (1, 1); double amplitudes first if the gradient pushes
    # outward so that Newton starts inside the concave cap
    a, b = 1.0, 1.0
    for _ in range(200):
        g, _ = grad_hess(a, b)
        moved = False
        if g[0] > 0:
            a *= 2.0
            moved = True
        if g[1] > 0:
            b *= 2.0
            moved = True
        if not moved:
            break
        if max(a, b) > 1e12:
            raise FiberGeometryError("fiber energy keeps growing; no peak found")
    val = fiber_energy(cfg, sc, a, b)
    for _ in range(maxiter):
        g, H = grad_hess(a, b)
        gnorm = np.linalg.norm(g)
        scale = max(abs(val), 1.0)
        if gnorm <= tol * scale:
            break
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = g / max(np.linalg.norm(H, ord=2), 1e-300)
        t = 1.0
        for _ in range(60):
            a2, b2 = max(a + t * step[0], 1e-12), max(b + t * step[1], 1e-12)
            v2 = fiber_energy(cfg, sc, a2, b2)
            if v2 >= val - 1e-14 * scale:
                a, b, val = a2, b2, v2
                break
            t *= 0.5
        else:
            break
    up, um = split_pm(u)
    peak = Field(u.grid, a * up.values + b * um.values)
    return peak, val, (a, b)


def fiber_center(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    V: Field,
    tol: float = 1e-13,
    maxiter: int = 100,
) -> tuple[Field, tuple]:
    """Rescale the parts of u to the nearby local peak of the fiber energy.

    Valid at any growth exponent: even below quartic growth the fiber has
    a local maximum at a solution's scaling (the unbounded growth only
    sets in past an energy dip at larger amplitudes). Ascent steps with a
    value check cannot slide to the zero scaling or across the dip, which
    keeps the centering strictly local to a warm iterate.
    """
    from .cones import split_pm

    sc = fiber_scalars(cfg, solver, u, V)
    if sc["b_plus"] <= 0 or sc["b_minus"] <= 0:
        raise FiberGeometryError("fiber centering needs both signed parts nontrivial")
    r = cfg.r_eff

    def grad_hess(a, b):
        ga = (
            a * sc["a_plus"]
            + b * sc["q_pm"]
            + a**3 * sc["c_pp"]
            + a * b**2 * sc["c_pm"]
            - a ** (cfg.p - 1) * sc["b_plus"]
            - cfg.lam * a ** (r - 1) * sc["d_plus"]
        )
        gb = (
            b * sc["a_minus"]
            + a * sc["q_pm"]
            + b**3 * sc["c_mm"]
            + a**2 * b * sc["c_pm"]
            - b ** (cfg.p - 1) * sc["b_minus"]
            - cfg.lam * b ** (r - 1) * sc["d_minus"]
        )
        haa = (
            sc["a_plus"]
            + 3 * a**2 * sc["c_pp"]
            + b**2 * sc["c_pm"]
            - (cfg.p - 1) * a ** (cfg.p - 2) * sc["b_plus"]
            - cfg.lam * (r - 1) * a ** (r - 2) * sc["d_plus"]
        )
        hbb = (
            sc["a_minus"]
            + 3 * b**2 * sc["c_mm"]
            + a**2 * sc["c_pm"]
            - (cfg.p - 1) * b ** (cfg.p - 2) * sc["b_minus"]
            - cfg.lam * (r - 1) * b ** (r - 2) * sc["d_minus"]
        )
        hab = sc["q_pm"] + 2 * a * b * sc["c_pm"]
        return np.array([ga, gb]), np.array([[haa, hab], [hab, hbb]])

    a, b = 1.0, 1.0
    val = fiber_energy(cfg, sc, a, b)
    scale = max(sc["a_plus"] + sc["a_minus"], 1e-300)
    for _ in range(maxiter):
        g, H = grad_hess(a, b)
        gn = np.linalg.norm(g)
        if gn <= tol * scale:
            break
        # prefer the Newton step when it ascends; otherwise plain ascent
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = g / max(gn, 1e-300)
        if float(step @ g) <= 0.0:
            step = g * (min(1.0, 1.0 / gn))
        t = 1.0
        moved = False
        while t > 1e-10:
            a2, b2 = a + t * step[0], b + t * step[1]
            if 0.05 < a2 < 20.0 and 0.05 < b2 < 20.0:
                v2 = fiber_energy(cfg, sc, a2, b2)
                if v2 >= val - 1e-14 * max(abs(val), 1.0):
                    a, b, val = a2, b2, v2
                    moved = True
                    break
            t *= 0.5
        if not moved:
            break
    g, _ = grad_hess(a, b)
    if np.linalg.norm(g) > 1e-6 * scale:
        raise FiberGeometryError(
            f"fiber centering stalled away from criticality at ({a:.3g}, {b:.3g})"
        )
    up, um = split_pm(u)
    return Field(u.grid, a * up.values + b * um.values), (a, b)


def _adaptive_tol(base, res, scale):
    """Linear-solve tolerance tracking the gap: accurate enough that the
    computed direction is meaningful, never stalling on a stale warm start."""
    rel = res / max(scale, 1.0)
    return float(np.clip(1e-5 * rel, 1e-13, base))


def _local_phase(
    cfg, solver, V, geom, u, recenter, params_flow, base_tol, outcome, step0
):
    """Uncertified local iteration: damped A-steps with re-centering.

    Once the Armijo decrease falls below energy-measurement precision the
    iteration runs on trust: near a solution the re-centered map is
    locally convergent but the gap decays non-monotonically (non-normal
    transients), so steps are taken blindly while the best iterate is
    tracked. A runaway ejector restarts from the best point with a
    smaller damping when the gap blows far past the best seen.
    """
    warm = None
    best_u, best_gap = u, np.inf
    since_best = 0
    s = params_flow.step_init
    for step in range(step0, params_flow.max_steps):
        tol_eff = _adaptive_tol(
            base_tol, best_gap if np.isfinite(best_gap) else 1.0, e_norm(u, V)
        )
        a_res = apply_A(cfg, solver, u, V, tol=tol_eff, x0=warm)
        warm = a_res.v
        gap = a_res.fixed_point_gap
        outcome.step_trace.append((step, s, gap, np.nan))
        if gap < best_gap:
            best_u, best_gap, since_best = u, gap, 0
        else:
            since_best += 1
        if best_gap <= params_flow.residual_tol:
            outcome.terminal = best_u
            outcome.converged = True
            outcome.residual = best_gap
            outcome.steps = step
            return outcome
        if since_best > 60:
            break
        if not np.isfinite(gap) or gap > 1e8 * max(best_gap, 1e-300):
            # genuine runaway: restart from the best iterate, damp harder
            s *= 0.25
            if s < 1e-3 * params_flow.step_init:
                break
            u, warm = best_u, None
            continue
        try:
            u = recenter(u + s * (a_res.v - u))
        except DescentGeometryError:
            break
    outcome.terminal = best_u
    outcome.residual = best_gap
    outcome.converged = best_gap <= params_flow.residual_tol
    outcome.steps = params_flow.max_steps
    return outcome


def polish_descend(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    u0: Field,
    params: FlowParams,
) -> FlowOutcome:
    """Local polish: damped A-steps with fiber re-centering, gap-tracked.

    Works at any growth exponent, so it serves as the final stage of the
    perturbation homotopy where neither a ray nor a fiber peak exists.
    The run starts from a warm point near the solution; acceptance is on
    trust with best-iterate tracking, not an energy certificate.
    """
    u, _ = fiber_center(cfg, solver, u0, V)
    outcome = FlowOutcome(terminal=u, converged=False, residual=np.inf)
    base_tol = params.tol_lin if params.tol_lin is not None else cfg.tol_lin

    def recenter(cand):
        return fiber_center(cfg, solver, cand, V)[0]

    return _local_phase(cfg, solver, V, geom, u, recenter, params, base_tol, outcome, 0)


def peak_descend(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    u0: Field,
    params: MinimaxParams,
    rng=None,
) -> FlowOutcome:
    """Descend the fiber-peak value: re-maximize over the two-parameter
    fiber of the iterate's parts, then take a damped step toward A(u).

    The fiber peak neutralizes the two unstable directions of the
    sign-changing saddle (by the envelope theorem the composed value
    still decreases at first order along the descent direction), so the
    iteration converges where plain descent would slide off the ridge.
    Once the certified energy decrease drops below measurement precision
    the acceptance switches to strict decrease of the fixed-point gap.
    """
    u, val, _ = fiber_max(cfg, solver, u0, V)
    outcome = FlowOutcome(terminal=u, converged=False, residual=np.inf)
    warm = None
    flow_params = params.flow
    base_tol = flow_params.tol_lin if flow_params.tol_lin is not None else cfg.tol_lin
    res = np.inf
    for step in range(flow_params.max_steps):
        tol_eff = _adaptive_tol(base_tol, res if np.isfinite(res) else 1.0, e_norm(u, V))
        a_res = apply_A(cfg, solver, u, V, tol=tol_eff, x0=warm)
        warm = a_res.v
        res = a_res.fixed_point_gap
        outcome.energy_trace.append(val)
        dp = cone_dist(geom, u, V, "Pplus")
        dm = cone_dist(geom, u, V, "Pminus")
        outcome.dist_trace.append((dp, dm))
        outcome.cone_trace.append((dp <= geom.eps, dm <= geom.eps))
        if res <= flow_params.residual_tol:
            outcome.terminal = u
            outcome.converged = True
            outcome.residual = res
            outcome.steps = step
            return outcome
        direction = a_res.v - u
        meas_floor = 64.0 * np.finfo(float).eps * max(1.0, abs(val))
        if flow_params.armijo_kappa * flow_params.step_init * res**2 < meas_floor:
            # the certified decrease is smaller than energy roundoff:
            # finish with the uncertified local iteration
            def recenter(cand):
                return fiber_max(cfg, solver, cand, V)[0]

            return _local_phase(
                cfg, solver, V, geom, u, recenter, flow_params, base_tol, outcome, step
            )
        s = flow_params.step_init
        accepted = False
        for _ in range(flow_params.max_backtracks):
            cand = u + s * direction
            try:
                w, wval, _ = fiber_max(cfg, solver, cand, V)
            except FiberGeometryError:
                s *= flow_params.step_shrink
                continue
            if wval <= val - flow_params.armijo_kappa * s * res**2:
                u, val = w, wval
                outcome.step_trace.append((step, s, res, val))
                accepted = True
                break
            s *= flow_params.step_shrink
        if not accepted:
            raise LineSearchError(
                f"fiber-peak line search exhausted at residual {res:.3e}"
            )
    outcome.terminal = u
    outcome.residual = apply_A(cfg, solver, u, V, tol=base_tol).fixed_point_gap
    outcome.converged = outcome.residual <= flow_params.residual_tol
    outcome.steps = flow_params.max_steps
    return outcome


def _burst(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    u: Field,
    params: MinimaxParams,
) -> tuple[str, Field]:
    """Flow one live sample until it freezes, converges, or the burst ends.

    A sample freezes with a snapshot the moment it enters a cone
    neighborhood ("Pplus"/"Pminus" -- invariance makes the entry
    permanent) or its energy first drops below zero ("dive" -- the
    monotone trace then rules out the zero state and every
    positive-level critical point). Freezing at the crossing keeps the
    snapshot moderate and close to the energy ridge, which is what the
    conflict-edge midpoints interpolate. "converged" reports a
    fixed-point gap below the final tolerance away from zero; "live"
    means the budget ran out mid-flight.
    """
    sweep_flow = FlowParams(
        step_init=params.flow.step_init,
        step_shrink=params.flow.step_shrink,
        max_steps=params.flow.max_steps,
        residual_tol=params.flow.residual_tol,
        energy_floor=params.flow.energy_floor,
        armijo_kappa=params.flow.armijo_kappa,
        tol_lin=params.sweep_tol_lin,
        stagnation_probes=0,
    )
    warm = None
    prev = None
    for _ in range(params.burst_steps):
        # freeze with the iterate before the crossing step: it is still
        # moderate and sits on the ridge side, which is what the
        # conflict-edge midpoints need to interpolate
        if cone_dist(geom, u, V, "Pplus") < geom.eps:
            return "Pplus", prev if prev is not None else u
        if cone_dist(geom, u, V, "Pminus") < geom.eps:
            return "Pminus", prev if prev is not None else u
        e_now = energy(cfg, solver, u, V).total
        if e_now < 0.0:
            return "dive", prev if prev is not None else u
        a_res = apply_A(cfg, solver, u, V, tol=params.sweep_tol_lin, x0=warm)
        warm = a_res.v
        if a_res.fixed_point_gap <= params.flow.residual_tol:
            return "converged", u
        prev = u
        try:
            u, _, _ = flow_step(cfg, solver, V, geom, u, sweep_flow, a_result=a_res, e0=e_now)
        except LineSearchError:
            return "live", u
    return "live", u


_FROZEN = ("Pplus", "Pminus", "dive")

# edges worth splitting, by priority: opposite cones straddle the
# sign-changing watershed directly; cone-vs-dive edges cross the ridge
# between an absorbed state and a sign-balanced descent
_CONFLICT_RANK = {
    frozenset(("Pplus", "Pminus")): 0,
    frozenset(("Pplus", "dive")): 1,
    frozenset(("Pminus", "dive")): 1,
}


def _bisect_conflicts(path: SimplexPath, status: dict, params: MinimaxParams) -> list:
    """Split conflict edges at their piecewise-linear field midpoints.

    The samples were frozen at their ridge crossings, so the midpoint of
    a conflict edge interpolates two moderate fields on opposite sides
    of the ridge and lands near its top; flowing it from there refines
    the deformed path exactly where the minimax level lives. Successive
    generations inherit ever-closer bracketing fields, so the homing is
    not limited by the parameter resolution.
    """
    inserted = []
    candidates = []
    for edge in path.edges:
        ka, kb = tuple(edge)
        if path.tags[ka] == BOUNDARY0 and path.tags[kb] == BOUNDARY0:
            continue
        pair = frozenset((status.get(ka), status.get(kb)))
        rank = _CONFLICT_RANK.get(pair)
        if rank is not None:
            length = max(abs(ka[0] - kb[0]), abs(ka[1] - kb[1]))
            if length > params.min_edge_length:
                candidates.append((rank, -length, ka, kb))
    candidates.sort()
    for _, _, ka, kb in candidates[: params.max_inserts_per_sweep]:
        if len(path.samples) >= params.max_samples:
            break
        mid_key = ((ka[0] + kb[0]) / 2, (ka[1] + kb[1]) / 2)
        if mid_key in path.samples:
            continue
        path.samples[mid_key] = Field(
            path.seeds.v1.grid,
            0.5 * (path.samples[ka].values + path.samples[kb].values),
        )
        path.tags[mid_key] = _tag_of(*mid_key)
        path.edges.discard(frozenset((ka, kb)))
        path.edges.add(frozenset((ka, mid_key)))
        path.edges.add(frozenset((mid_key, kb)))
        inserted.append(mid_key)
    return inserted


def minimax_solve(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    path: SimplexPath,
    params: Optional[MinimaxParams] = None,
    rng=None,
) -> MinimaxResult:
    """Drive the lattice downhill and certify the hovering peak as a solution."""
    params = MinimaxParams() if params is None else params
    level_trace: list = []
    argmax_trace: list = []
    total_inserted = 0
    pinned = {k: path.samples[k].values.copy() for k, t in path.tags.items() if t == BOUNDARY0}

    def initial_status(k) -> str:
        u = path.samples[k]
        if cone_dist(geom, u, V, "Pplus") < geom.eps:
            return "Pplus"
        if cone_dist(geom, u, V, "Pminus") < geom.eps:
            return "Pminus"
        if energy(cfg, solver, u, V).total < 0.0:
            return "dive"
        return "live"

    status = {k: initial_status(k) for k in path.samples}
    attempted: set = set()   # ids of fields already tried as descent starts
    # pinned samples never flow; their standing status is already settled
    energies = {k: energy(cfg, solver, u, V).total for k, u in path.samples.items()}

    def is_outside_w(k) -> bool:
        u = path.samples[k]
        return (
            cone_dist(geom, u, V, "Pplus") >= geom.eps
            and cone_dist(geom, u, V, "Pminus") >= geom.eps
        )

    outside_w = {k: is_outside_w(k) for k in path.samples}

    def finish(outcome: FlowOutcome, sweeps: int) -> MinimaxResult:
        cert = _certify(cfg, solver, V, geom, outcome, params)
        for kk, vals in pinned.items():
            assert np.array_equal(path.samples[kk].values, vals)
        return MinimaxResult(
            solution=outcome.terminal,
            level=energy(cfg, solver, outcome.terminal, V).total,
            certificate=cert,
            sweeps=sweeps,
            level_trace=level_trace,
            argmax_trace=argmax_trace,
            inserted=total_inserted,
        )

    def polish(u: Field) -> tuple[Optional[FlowOutcome], Field]:
        """Tight convergence from an iterate whose loose-tolerance gap was
        small: fiber-centered local iteration (plain descent would slide
        off the saddle), falling back to plain flow for one-signed
        iterates, with failures contained."""
        from .flow import EnergyFloorError

        try:
            outcome = polish_descend(cfg, solver, V, geom, u, params.flow)
        except (DescentGeometryError, LineSearchError):
            try:
                outcome = flow_to_convergence(cfg, solver, V, geom, u, params.flow, rng=rng)
            except (EnergyFloorError, LineSearchError):
                return None, u
        in_w = (
            cone_dist(geom, outcome.terminal, V, "Pplus") < geom.eps
            or cone_dist(geom, outcome.terminal, V, "Pminus") < geom.eps
        )
        if outcome.converged and not in_w:
            return outcome, outcome.terminal
        return None, outcome.terminal

    # the energy peak over the initial path's continuous image is the
    # fiber peak of the seed plane; descending from it tracks the lowest
    # ridge crossing before any lattice sample sharpens downhill
    center = min(
        (k for k, t in path.tags.items() if t == INTERIOR),
        key=lambda k: abs(k[0] - Fraction(1, 3)) + abs(k[1] - Fraction(1, 3)),
        default=None,
    )
    if center is not None:
        try:
            outcome = peak_descend(cfg, solver, V, geom, path.samples[center], params, rng=rng)
        except (FiberGeometryError, LineSearchError):
            outcome = None
        if outcome is not None and outcome.converged:
            in_w = (
                cone_dist(geom, outcome.terminal, V, "Pplus") < geom.eps
                or cone_dist(geom, outcome.terminal, V, "Pminus") < geom.eps
            )
            if not in_w:
                level_trace.append(
                    outcome.energy_trace[0] if outcome.energy_trace else np.nan
                )
                argmax_trace.append(center)
                return finish(outcome, 1)

    for sweep in range(params.max_sweeps):
        live_keys = [
            k
            for k in sorted(path.samples)
            if status[k] == "live" and path.tags[k] != BOUNDARY0
        ]
        nw = worker_count()
        if nw > 1 and len(live_keys) > 1:
            with ThreadPoolExecutor(max_workers=nw) as pool:
                results = list(
                    pool.map(
                        lambda k: _burst(cfg, solver, V, geom, path.samples[k], params),
                        live_keys,
                    )
                )
        else:
            results = [
                _burst(cfg, solver, V, geom, path.samples[k], params) for k in live_keys
            ]
        for k, (new_status, u) in zip(live_keys, results):
            path.samples[k] = u
            energies[k] = energy(cfg, solver, u, V).total
            status[k] = new_status
            outside_w[k] = is_outside_w(k)
        for k, (new_status, _) in zip(live_keys, results):
            if new_status == "converged":
                outcome, terminal = polish(path.samples[k])
                if outcome is not None:
                    return finish(outcome, sweep + 1)
                path.samples[k] = terminal
                energies[k] = energy(cfg, solver, terminal, V).total
                status[k] = initial_status(k)
                outside_w[k] = is_outside_w(k)

        candidates = {
            k
            for k, s in status.items()
            if s in ("live", "dive")
            or (s in ("Pplus", "Pminus") and outside_w.get(k, False))
        }
        if not candidates:
            raise PathAbsorbedError(
                "every lattice sample entered the cone neighborhoods; "
                "the width is too large or the path too coarse"
            )
        peak_key = max(sorted(candidates), key=lambda k: energies[k])
        level_trace.append(energies[peak_key])
        argmax_trace.append(peak_key)
        if params.trace_hook is not None:
            params.trace_hook(
                {
                    "sweep": sweep,
                    "n_samples": len(path.samples),
                    "n_live": sum(1 for s in status.values() if s == "live"),
                    "statuses": dict(status),
                    "peak_key": peak_key,
                    "peak_status": status[peak_key],
                    "peak_outside_w": outside_w[peak_key],
                    "peak_tag": path.tags[peak_key],
                    "level": energies[peak_key],
                }
            )

        if (
            path.tags[peak_key] != BOUNDARY0
            and outside_w[peak_key]
            and id(path.samples[peak_key]) not in attempted
        ):
            attempted.add(id(path.samples[peak_key]))
            peak = path.samples[peak_key]
            try:
                outcome = peak_descend(cfg, solver, V, geom, peak, params, rng=rng)
            except (FiberGeometryError, LineSearchError):
                outcome = None
            if outcome is not None and outcome.converged:
                in_w = (
                    cone_dist(geom, outcome.terminal, V, "Pplus") < geom.eps
                    or cone_dist(geom, outcome.terminal, V, "Pminus") < geom.eps
                )
                if not in_w:
                    return finish(outcome, sweep + 1)
            if outcome is not None:
                path.samples[peak_key] = outcome.terminal
                energies[peak_key] = energy(cfg, solver, outcome.terminal, V).total
                status[peak_key] = initial_status(peak_key)
                outside_w[peak_key] = is_outside_w(peak_key)

        new_keys = _bisect_conflicts(path, status, params)
        total_inserted += len(new_keys)
        for k in new_keys:
            status[k] = initial_status(k)
            energies[k] = energy(cfg, solver, path.samples[k], V).total
            outside_w[k] = is_outside_w(k)
        if not new_keys and all(s != "live" for s in status.values()):
            raise MinimaxStallError(
                f"no live samples and no splittable conflict edges after sweep {sweep}; "
                f"level estimate {level_trace[-1]:.6e}"
            )

    raise MinimaxStallError(
        f"sweep cap {params.max_sweeps} reached; last level {level_trace[-1]:.6e}, "
        f"{total_inserted} midpoints inserted"
    )


def _certify(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    outcome: FlowOutcome,
    params: MinimaxParams,
) -> MinimaxCertificate:
    u = outcome.terminal
    lvl = energy(cfg, solver, u, V).total
    dp = cone_dist(geom, u, V, "Pplus")
    dm = cone_dist(geom, u, V, "Pminus")
    pos, neg = nodal_count(u)
    cert = MinimaxCertificate(
        residual=outcome.residual,
        level=lvl,
        level_ok=lvl >= 0.5 * geom.eps**2 - params.flow.residual_tol,
        dist_pplus=dp,
        dist_pminus=dm,
        outside_w=dp >= geom.eps and dm >= geom.eps,
        pos_nodes=pos,
        neg_nodes=neg,
        sign_changing=pos >= 1 and neg >= 1,
    )
    if params.exact_final_check:
        exact = ConeGeometry(eps=geom.eps, mode="exact")
        cert.exact_dist_pplus = cone_dist(exact, u, V, "Pplus")
        cert.exact_dist_pminus = cone_dist(exact, u, V, "Pminus")
    return cert


# ---------------------------------------------------------------------------
# deflation loop for multiple solutions

@dataclass
class DeflationReport:
    found: int
    requested: int
    energies: list
    rejected_close: int
    failures: list


def deflated_multisolve(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    geom: ConeGeometry,
    bump_list: list,
    count: int,
    params: Optional[MinimaxParams] = None,
    mode: str = "amplitude",
    m: int = 6,
    separation: float = 1e-2,
    rng=None,
) -> tuple[list, DeflationReport]:
    """Sweep seed pairs from disjoint bumps, keeping norm-separated terminals.

    Bumps must be nonnegative with pairwise disjoint supports; the pair
    (i, j) seeds v1 = -bump_i, v2 = +bump_j. Solutions are sorted by
    energy; finding fewer than `count` distinct terminals is reported,
    not raised.
    """
    if len(bump_list) < 2:
        raise SeedError("need at least two disjoint bumps")
    for i, b in enumerate(bump_list):
        if np.min(b.values) < 0:
            raise SeedError(f"bump {i} must be nonnegative")
        for j in range(i):
            if np.any((b.values != 0) & (bump_list[j].values != 0)):
                raise SeedError(f"bumps {j} and {i} have overlapping supports")
    found: list[tuple[float, Field]] = []
    rejected = 0
    failures = []
    for i in range(len(bump_list)):
        for j in range(i + 1, len(bump_list)):
            if len(found) >= count:
                continue
            try:
                seeds = SeedPair(v1=-bump_list[i], v2=bump_list[j])
                R = tune_R(cfg, solver, V, geom, seeds, mode=mode, m=m)
                path = build_phi0(cfg, seeds, mode=mode, m=m, R=R)
                result = minimax_solve(cfg, solver, V, geom, path, params, rng=rng)
            except (TuneRError, PathAbsorbedError, MinimaxStallError, LineSearchError) as exc:
                failures.append(f"pair ({i},{j}): {exc}")
                continue
            u = result.solution
            scale = max(e_norm(u, V), 1.0)
            is_new = all(
                min(e_norm(u - w, V), e_norm(u + w, V)) > separation * scale
                for _, w in found
            )
            if is_new:
                found.append((result.level, u))
            else:
                rejected += 1
    found.sort(key=lambda t: t[0])
    report = DeflationReport(
        found=len(found),
        requested=count,
        energies=[lvl for lvl, _ in found],
        rejected_close=rejected,
        failures=failures,
    )
    return [u for _, u in found[:count]], report


# ---------------------------------------------------------------------------
# run manifest

def describe_seeds(seeds: SeedPair) -> dict:
    return {
        "R": seeds.R,
        "bumps_negative": seeds.bumps1,
        "bumps_positive": seeds.bumps2,
        "v1_min": float(np.min(seeds.v1.values)),
        "v2_max": float(np.max(seeds.v2.values)),
    }


def write_minimax_manifest(
    path,
    *,
    seeds: SeedPair,
    geom: ConeGeometry,
    result: MinimaxResult,
    lattice_m: int,
    R: float,
    solution_files: list,
    extra: Optional[dict] = None,
) -> None:
    doc = {
        "seeds": describe_seeds(seeds),
        "R": R,
        "eps": geom.eps,
        "lattice_m": lattice_m,
        "level_trace": result.level_trace,
        "level": result.level,
        "sweeps": result.sweeps,
        "inserted_samples": result.inserted,
        "solution_files": solution_files,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
