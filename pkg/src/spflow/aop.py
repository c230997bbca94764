"""The auxiliary operator: u -> unique solution v of the screened linear problem.

Fixed points of this map are exactly the discrete critical points of the
energy, so the gap || u - A(u) ||_E doubles as the solver residual. The
linear system is symmetric positive definite (Dirichlet stencil plus the
nonnegative weight V + phi_u) and is solved by conjugate gradients,
preconditioned by the spectral inverse of the constant-shift operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import model
from .coulomb import CoulombSolver, phi_of
from .grid import (
    Field,
    e_norm,
    first_eigenvalue,
    neg_laplacian,
    shifted_inverse_apply,
)


class LinearSolveError(RuntimeError):
    """Conjugate gradients failed to reach tolerance within the iteration cap."""


@dataclass
class ASolveResult:
    v: Field
    cg_iterations: int
    linear_residual: float
    fixed_point_gap: float


def _pcg(
    apply_op: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    precond: Callable[[np.ndarray], np.ndarray],
    tol: float,
    maxiter: int,
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, int, float]:
    """Preconditioned CG on a flat array problem; returns (x, iters, rel residual)."""
    bnorm = np.linalg.norm(b)
    if bnorm < 1e-150:  # effectively zero right-hand side: products underflow
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_op(x) if x0 is not None else b.copy()
    z = precond(r)
    d = z.copy()
    rz = float(np.vdot(r, z).real)
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > tol * bnorm and it < maxiter:
        q = apply_op(d)
        den = float(np.vdot(d, q).real)
        if den <= 0.0 or not np.isfinite(den):
            break  # curvature lost to underflow; best iterate stands
        alpha = rz / den
        x += alpha * d
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        z = precond(r)
        rz_new = float(np.vdot(r, z).real)
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
    return x, it, rnorm / bnorm


def screened_apply(u_weight: np.ndarray, grid, vec: np.ndarray) -> np.ndarray:
    """Apply (-Delta_h + W) where W = V + phi_u is a nodewise weight."""
    f = Field(grid, vec.reshape((grid.n,) * 3))
    out = neg_laplacian(f).values + u_weight * f.values
    return out.ravel()


def apply_A(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    V: Field,
    tol: Optional[float] = None,
    maxiter: Optional[int] = None,
    x0: Optional[Field] = None,
) -> ASolveResult:
    """Solve the screened problem for v = A(u), reporting the fixed-point gap."""
    tol = cfg.tol_lin if tol is None else tol
    maxiter = cfg.cg_maxiter if maxiter is None else maxiter
    grid = u.grid
    phi = phi_of(solver, u)
    weight = V.values + np.maximum(phi.values, 0.0)
    rhs = model.eval_rhs(cfg, u)
    shift = float(np.mean(weight))

    def op(vec: np.ndarray) -> np.ndarray:
        return screened_apply(weight, grid, vec)

    def pre(vec: np.ndarray) -> np.ndarray:
        return shifted_inverse_apply(grid, vec.reshape((grid.n,) * 3), shift).ravel()

    x0_vec = None if x0 is None else x0.values.ravel()
    x, iters, rel = _pcg(op, rhs.values.ravel(), pre, tol, maxiter, x0=x0_vec)
    if rel > tol:
        lam1 = first_eigenvalue(grid)
        lam_max = 12.0 / grid.h**2
        raise LinearSolveError(
            f"CG stalled at relative residual {rel:.3e} after {iters} iterations; "
            f"operator spectrum within [{lam1 + float(np.min(weight)):.3e}, "
            f"{lam_max + float(np.max(weight)):.3e}]"
        )
    v = Field(grid, x.reshape((grid.n,) * 3))
    gap = e_norm(u - v, V)
    return ASolveResult(v=v, cg_iterations=iters, linear_residual=rel, fixed_point_gap=gap)


@dataclass(frozen=True)
class IdentityReport:
    lhs: float            # <I'(u), u - A(u)>
    rhs: float            # ||u - A(u)||_E^2 + int phi_u (u - A(u))^2
    rel_gap: float
    lower_bound_ok: bool  # lhs >= ||u - A(u)||_E^2 within tolerance


def derivative_identity_check(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    v: Field,
    V: Field,
    slack: float = 1e-8,
) -> IdentityReport:
    """Check the defining identity of the operator against the derivative action.

    Both sides agree to within the linear-solve tolerance amplified by the
    problem norms; the corollary inequality lhs >= gap^2 is reported too.
    """
    from .functional import dI_action

    w = u - v
    lhs = dI_action(cfg, solver, u, w, V)
    phi = phi_of(solver, u)
    gap_sq = max(e_norm(w, V) ** 2, 0.0)
    rhs = gap_sq + u.grid.h**3 * float(np.sum(phi.values * w.values**2))
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    ok = lhs >= gap_sq - slack * max(gap_sq, 1.0)
    return IdentityReport(lhs=lhs, rhs=rhs, rel_gap=rel, lower_bound_ok=ok)


@dataclass(frozen=True)
class GradientBoundReport:
    dual_estimate: float  # probe-based estimate of the operator norm of I'(u)
    gap: float            # ||u - A(u)||_E
    bound: float          # gap * (1 + C_hat ||u||_E^2)
    within: bool


def dual_norm_estimate(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    V: Field,
    probes: list[Field],
) -> float:
    """Maximize |dI(u, v)| / ||v||_E over the probe set."""
    from .functional import dI_action

    best = 0.0
    for v in probes:
        nv = e_norm(v, V)
        if nv > 0:
            best = max(best, abs(dI_action(cfg, solver, u, v, V)) / nv)
    return best


def gradient_bound_check(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    u: Field,
    V: Field,
    c_hat: float,
    n_probes: int = 12,
    rng=None,
) -> GradientBoundReport:
    """Monitor the gradient bound via random probes plus the descent direction."""
    rng = np.random.default_rng(0) if rng is None else rng
    res = apply_A(cfg, solver, u, V)
    probes = [Field(u.grid, rng.standard_normal((u.grid.n,) * 3)) for _ in range(n_probes)]
    w = u - res.v
    if e_norm(w, V) > 0:
        probes.append(w)
    est = dual_norm_estimate(cfg, solver, u, V, probes)
    bound = res.fixed_point_gap * (1.0 + c_hat * e_norm(u, V) ** 2)
    return GradientBoundReport(
        dual_estimate=est,
        gap=res.fixed_point_gap,
        bound=bound,
        within=est <= bound * (1.0 + 1e-8) + 1e-12,
    )
