"""Energy functional, derivative action, and solution diagnostics.

The derivative action is the exact directional derivative of the discrete
energy (not merely a consistent approximation): the quartic coupling term
is differentiated through the same kernel that defines it, so finite
difference checks hold to quadrature-free accuracy.

The dilation (Pohozaev-type) identity and the combination used for the
a priori coupling bound only hold in the continuum; here they are
diagnostics whose residuals certify that a discrete critical point
approximates a genuine solution, shrinking under grid refinement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import model
from .coulomb import CoulombSolver, coupling_energy, phi_of
from .grid import Field, check_same_grid, grad_sq_inner


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    coupling: float
    nonlinear: float
    perturb: float

    @property
    def total(self) -> float:
        return self.kinetic + self.potential + self.coupling - self.nonlinear - self.perturb


def energy(cfg: model.ModelConfig, solver: CoulombSolver, u: Field, V: Field) -> EnergyBreakdown:
    """All components of the (possibly perturbed) energy at u."""
    check_same_grid(u, V)
    h3 = u.grid.h**3
    kin = 0.5 * grad_sq_inner(u, u)
    pot = 0.5 * h3 * float(np.sum(V.values * u.values**2))
    coup = 0.25 * coupling_energy(solver, u)
    nonlin = h3 * float(np.sum(model.eval_F(cfg, u).values))
    pert = 0.0
    if cfg.lam > 0:
        r = cfg.r_eff
        pert = (cfg.lam / r) * h3 * float(np.sum(np.abs(u.values) ** r))
    return EnergyBreakdown(kin, pot, coup, nonlin, pert)


def dI_action(cfg: model.ModelConfig, solver: CoulombSolver, u: Field, v: Field, V: Field) -> float:
    """Exact directional derivative of the discrete energy at u along v."""
    check_same_grid(u, v, V)
    h3 = u.grid.h**3
    phi = phi_of(solver, u)
    val = grad_sq_inner(u, v)
    val += h3 * float(np.sum((V.values + phi.values) * u.values * v.values))
    val -= h3 * float(np.sum(model.eval_f(cfg, u).values * v.values))
    if cfg.lam > 0:
        val -= h3 * float(np.sum(model.eval_perturb_f(cfg, u).values * v.values))
    return val


def pohozaev_residual(cfg: model.ModelConfig, solver: CoulombSolver, u: Field, V: Field) -> float:
    """Normalized defect of the dilation identity; near zero only at solutions."""
    h3 = u.grid.h**3
    gvx = model.eval_gvx(cfg, u.grid)
    terms = [
        0.5 * grad_sq_inner(u, u),
        1.5 * h3 * float(np.sum(V.values * u.values**2)),
        0.5 * h3 * float(np.sum(gvx.values * u.values**2)),
        1.25 * coupling_energy(solver, u),
        -3.0 * h3 * float(np.sum(model.eval_F(cfg, u).values)),
    ]
    if cfg.lam > 0:
        r = cfg.r_eff
        terms.append(-(3.0 * cfg.lam / r) * h3 * float(np.sum(np.abs(u.values) ** r)))
    scale = sum(abs(t) for t in terms)
    if scale == 0.0:
        return 0.0
    return sum(terms) / scale


@dataclass(frozen=True)
class ARCombinationReport:
    lhs: float               # (3 - mu/2) * c
    rhs: float               # weighted potential + coupling + perturbation + AR defect
    mismatch: float          # |lhs - rhs| / max(|lhs|, |rhs|, 1e-300)
    coupling_value: float    # the measured coupling integral
    coupling_bound: float    # value implied for it by the identity at level c


def ar_combination(
    cfg: model.ModelConfig, solver: CoulombSolver, u: Field, V: Field, c_level: float
) -> ARCombinationReport:
    """Evaluate both sides of the energy/derivative/dilation combination.

    At an exact critical point of level c the two sides agree, which bounds
    the coupling integral along a continuation run; away from criticality
    they diverge and the report documents it.
    """
    mu = cfg.mu_eff
    h3 = u.grid.h**3
    gvx = model.eval_gvx(cfg, u.grid)
    coup = coupling_energy(solver, u)
    rhs = (mu / 4.0 - 0.5) * h3 * float(
        np.sum((2.0 * V.values + gvx.values) * u.values**2)
    )
    rhs += (mu / 2.0 - 1.5) * coup
    if cfg.lam > 0:
        r = cfg.r_eff
        rhs += (1.0 - mu / r) * cfg.lam * h3 * float(np.sum(np.abs(u.values) ** r))
    rhs += h3 * float(np.sum(model.ar_defect(cfg, u).values))
    lhs = (3.0 - mu / 2.0) * c_level
    mismatch = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    # solve the identity for the coupling integral, given the level
    bound = (lhs - (rhs - (mu / 2.0 - 1.5) * coup)) / (mu / 2.0 - 1.5)
    return ARCombinationReport(lhs, rhs, mismatch, coup, bound)


def nodal_count(u: Field, threshold: float | None = None) -> tuple[int, int]:
    """6-connected component counts of {u > thr} and {u < -thr}."""
    if threshold is None:
        threshold = 1e-8 * float(np.max(np.abs(u.values)))
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    structure = ndimage.generate_binary_structure(3, 1)
    _, npos = ndimage.label(u.values > threshold, structure=structure)
    _, nneg = ndimage.label(u.values < -threshold, structure=structure)
    return int(npos), int(nneg)


# ---------------------------------------------------------------------------
# dilation scaling identities

def rescale_field(u: Field, R: int) -> Field:
    """Sample x -> u(R x) by the exact node-to-node index map.

    Requires (R-1)(n+1)/2 to be an integer (n odd suffices), i.e. the
    dilation maps the node lattice into itself; nodes mapping outside the
    box pick up the implicit zero extension.
    """
    if R < 1 or R != int(R):
        raise ValueError(f"need integer dilation R >= 1, got {R}")
    R = int(R)
    if R == 1:
        return u.copy()
    n = u.grid.n
    shift = (R - 1) * (n + 1) / 2
    if shift != int(shift):
        raise ValueError(f"dilation R={R} does not map the n={n} lattice to itself")
    idx = R * (np.arange(n) + 1) - int(shift) - 1
    valid = (idx >= 0) & (idx < n)
    out = np.zeros((n,) * 3)
    ii = idx[valid]
    sel = np.ix_(valid, valid, valid)
    out[sel] = u.values[np.ix_(ii, ii, ii)]
    return Field(u.grid, out)


@dataclass(frozen=True)
class ScalingReport:
    R: int
    t: float
    # per identity: (value on the dilated field, R-power times undilated value)
    gradient: tuple[float, float]
    mass: tuple[float, float]
    mu_power: tuple[float, float]
    coupling: tuple[float, float]

    def rel_mismatches(self) -> dict[str, float]:
        out = {}
        for name in ("gradient", "mass", "mu_power", "coupling"):
            a, b = getattr(self, name)
            out[name] = abs(a - b) / max(abs(a), abs(b), 1e-300)
        return out


def scaling_check(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    v1: Field,
    v2: Field,
    R: int,
    t: float,
) -> ScalingReport:
    """Discrete check of the four dilation identities for u_t = R^2 (t v1 + (1-t) v2)(R .)."""
    check_same_grid(v1, v2)
    mu = cfg.mu_eff
    h3 = v1.grid.h**3
    base = Field(v1.grid, t * v1.values + (1.0 - t) * v2.values)
    ut = Field(v1.grid, float(R) ** 2 * rescale_field(base, R).values)

    grad_lhs = grad_sq_inner(ut, ut)
    grad_rhs = float(R) ** 3 * (
        t**2 * grad_sq_inner(v1, v1) + (1.0 - t) ** 2 * grad_sq_inner(v2, v2)
    )
    mass_lhs = h3 * float(np.sum(ut.values**2))
    mass_rhs = float(R) * h3 * float(np.sum(t**2 * v1.values**2 + (1.0 - t) ** 2 * v2.values**2))
    mu_lhs = h3 * float(np.sum(np.abs(ut.values) ** mu))
    mu_rhs = float(R) ** (2.0 * mu - 3.0) * h3 * float(
        np.sum(t**mu * np.abs(v1.values) ** mu + (1.0 - t) ** mu * np.abs(v2.values) ** mu)
    )
    coup_lhs = coupling_energy(solver, ut)
    coup_rhs = float(R) ** 3 * coupling_energy(solver, base)
    return ScalingReport(
        R=int(R),
        t=t,
        gradient=(grad_lhs, grad_rhs),
        mass=(mass_lhs, mass_rhs),
        mu_power=(mu_lhs, mu_rhs),
        coupling=(coup_lhs, coup_rhs),
    )


# ---------------------------------------------------------------------------
# diagnostics CSV

DIAG_HEADER = [
    "tag",
    "kinetic",
    "potential",
    "coupling",
    "nonlinear",
    "perturb",
    "total",
    "poho_residual",
    "pos_nodes",
    "neg_nodes",
]


def write_diagnostics(path, rows: list[dict]) -> None:
    """One CSV row per evaluation, RFC-4180 quoting, header included."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DIAG_HEADER, quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        writer.writerows(rows)


def diagnostics_row(
    tag: str,
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    V: Field,
) -> dict:
    br = energy(cfg, solver, u, V)
    pos, neg = nodal_count(u)
    return {
        "tag": tag,
        "kinetic": repr(float(br.kinetic)),
        "potential": repr(float(br.potential)),
        "coupling": repr(float(br.coupling)),
        "nonlinear": repr(float(br.nonlinear)),
        "perturb": repr(float(br.perturb)),
        "total": repr(float(br.total)),
        "poho_residual": repr(float(pohozaev_residual(cfg, solver, u, V))),
        "pos_nodes": pos,
        "neg_nodes": neg,
    }
