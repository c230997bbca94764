"""Cone neighborhoods of one-signed fields: distance, membership, contraction.

The working distance is the surrogate ||u^+||_E (for the nonpositive cone)
which dominates the true distance and is what the contraction estimates
actually control. The exact distance solves the obstacle projection
min_{w <= 0} ||u - w||_E^2 by projected gradient and is kept off the hot
path for validation.

The contraction monitor measures dist(A(u), P^-) / dist(u, P^-) on samples
near the cone boundary; the theory guarantees a factor 1/2 only below an
unknown width, so the monitor is how the artifact calibrates the width it
runs with.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import model
from .aop import apply_A
from .coulomb import CoulombSolver
from .grid import Field, e_norm, lp_norm, neg_laplacian

Which = Literal["Pplus", "Pminus"]


class ConeProjectionError(RuntimeError):
    """Exact-mode obstacle projection failed to reach its tolerance."""


def split_pm(u: Field) -> tuple[Field, Field]:
    """Positive and negative parts; recomposition u = u^+ + u^- is exact."""
    return (
        Field(u.grid, np.maximum(u.values, 0.0)),
        Field(u.grid, np.minimum(u.values, 0.0)),
    )


@dataclass
class ConeGeometry:
    eps: float
    mode: str = "surrogate"  # or "exact"
    exact_tol: float = 1e-8
    exact_maxiter: int = 20000

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"cone width must be > 0, got {self.eps}")
        if self.mode not in ("surrogate", "exact"):
            raise ValueError(f"unknown distance mode {self.mode!r}")


def _surrogate_dist(u: Field, V: Field, which: Which) -> float:
    up, um = split_pm(u)
    return e_norm(up, V) if which == "Pminus" else e_norm(um, V)


def _metric_apply(V: Field, vec: np.ndarray, grid) -> np.ndarray:
    f = Field(grid, vec.reshape((grid.n,) * 3))
    return (neg_laplacian(f).values + V.values * f.values).ravel()


def _exact_dist_neg(u: Field, V: Field, geom: ConeGeometry) -> float:
    """Projected gradient for min_{w <= 0} (w-u)^T S (w-u), S the E-metric.

    Initialized at the feasible point u^- (whose objective is the surrogate
    distance squared); the objective is strongly convex, so the plain
    iteration with step 1/lambda_max converges linearly and the returned
    distance never exceeds the surrogate.
    """
    grid = u.grid
    uvec = u.values.ravel()

    def S(vec):
        return _metric_apply(V, vec, grid)

    # step 1 / lambda_max(S) via a short power iteration
    rng = np.random.default_rng(12345)
    z = rng.standard_normal(uvec.shape)
    z /= np.linalg.norm(z)
    lam = 0.0
    for _ in range(30):
        w = S(z)
        lam = float(np.vdot(z, w).real)
        nz = np.linalg.norm(w)
        if nz == 0:
            break
        z = w / nz
    step = 1.0 / (1.05 * max(lam, 1e-300))

    w = np.minimum(uvec, 0.0)
    scale = max(np.linalg.norm(S(uvec)), 1e-300)
    kkt = np.inf
    for it in range(geom.exact_maxiter):
        grad = S(w - uvec)
        if it % 10 == 0:
            # KKT residual: stationarity where w < 0; on the active set the
            # multiplier is -grad, so positive gradient parts violate
            inactive = w < 0
            kkt = np.linalg.norm(np.where(inactive, grad, np.maximum(grad, 0.0)))
            if kkt <= geom.exact_tol * scale:
                break
        w = np.minimum(w - step * grad, 0.0)
    else:
        raise ConeProjectionError(
            f"obstacle projection stalled at KKT residual {kkt:.3e} "
            f"(tolerance {geom.exact_tol * scale:.3e})"
        )
    d = w - uvec
    return np.sqrt(max(float(np.vdot(d, S(d)).real) * grid.h**3, 0.0))


def cone_dist(geom: ConeGeometry, u: Field, V: Field, which: Which) -> float:
    """Distance in the E-norm to the chosen one-signed cone."""
    if which not in ("Pplus", "Pminus"):
        raise ValueError(f"unknown cone {which!r}")
    if geom.mode == "surrogate":
        return _surrogate_dist(u, V, which)
    if which == "Pminus":
        return _exact_dist_neg(u, V, geom)
    return _exact_dist_neg(-u, V, geom)  # dist(u, P^+) == dist(-u, P^-)


def in_cone_nbhd(geom: ConeGeometry, u: Field, V: Field, which: Which) -> bool:
    return cone_dist(geom, u, V, which) < geom.eps


def in_cone_closure(geom: ConeGeometry, u: Field, V: Field, which: Which, tol: float = 1e-10) -> bool:
    return cone_dist(geom, u, V, which) <= geom.eps * (1.0 + tol) + tol


def in_w(geom: ConeGeometry, u: Field, V: Field) -> bool:
    """Membership in the union of the two cone neighborhoods."""
    return in_cone_nbhd(geom, u, V, "Pplus") or in_cone_nbhd(geom, u, V, "Pminus")


# ---------------------------------------------------------------------------
# contraction monitoring / width calibration

@dataclass
class ContractionReport:
    eps: float
    ratios: list = field(default_factory=list)
    max_ratio: float = 0.0
    contracts: bool = False


def contraction_monitor(
    geom: ConeGeometry,
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    samples: list[Field],
) -> ContractionReport:
    """Ratios dist(A(u), P^-) / dist(u, P^-) over samples near the cone boundary."""
    if not samples:
        raise ValueError("contraction monitor needs at least one sample")
    ratios = []
    for u in samples:
        d_u = cone_dist(geom, u, V, "Pminus")
        d_v = cone_dist(geom, apply_A(cfg, solver, u, V).v, V, "Pminus")
        ratios.append(0.0 if d_u == 0.0 else d_v / d_u)
    mx = max(ratios)
    return ContractionReport(eps=geom.eps, ratios=ratios, max_ratio=mx, contracts=mx <= 0.5)


def sample_near_neg_boundary(
    grid, V: Field, eps: float, rng, frac_lo: float = 0.5, frac_hi: float = 1.0
) -> Field:
    """A negative profile plus a positive spike of E-norm between frac_lo*eps and eps.

    The sample sits inside the closed eps-neighborhood of the nonpositive
    cone, at surrogate distance frac * eps from the cone itself.
    """
    n = grid.n
    X, Y, Z = grid.meshgrid()
    c = grid.L * (rng.uniform(-0.3, 0.3, size=3))
    width = grid.L * rng.uniform(0.25, 0.5)
    body = -np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) / width**2)
    body *= rng.uniform(0.5, 2.0)
    spike = np.exp(-((X + c[0]) ** 2 + (Y + c[1]) ** 2 + (Z + c[2]) ** 2) / (0.5 * width) ** 2)
    spike_f = Field(grid, np.maximum(spike, 0.0))
    norm = e_norm(spike_f, V)
    target = eps * rng.uniform(frac_lo, frac_hi)
    u = np.minimum(body, 0.0) + (target / norm) * spike
    return Field(grid, u)


def calibrate_eps(
    cfg: model.ModelConfig,
    solver: CoulombSolver,
    V: Field,
    candidates=None,
    n_samples: int = 20,
    rng=None,
) -> tuple[float, list[ContractionReport]]:
    """Largest tested cone width whose samples all contract by at least 1/2."""
    rng = np.random.default_rng(0) if rng is None else rng
    if candidates is None:
        candidates = [0.4, 0.2, 0.1, 0.05, 0.02, 0.01]
    reports = []
    for eps in sorted(candidates, reverse=True):
        geom = ConeGeometry(eps=eps)
        samples = [
            sample_near_neg_boundary(cfg.grid, V, eps, rng) for _ in range(n_samples)
        ]
        rep = contraction_monitor(geom, cfg, solver, V, samples)
        reports.append(rep)
        if rep.contracts:
            return eps, reports
    raise RuntimeError(
        "no candidate cone width contracts by 1/2; "
        f"max ratios were {[r.max_ratio for r in reports]}"
    )


def embedding_constant(grid, V: Field, q: float, trials: int = 200, rng=None) -> float:
    """Empirical discrete embedding constant sup ||w||_q / ||w||_E over probes."""
    rng = np.random.default_rng(0) if rng is None else rng
    best = 0.0
    for _ in range(trials):
        w = Field(grid, rng.standard_normal((grid.n,) * 3))
        nE = e_norm(w, V)
        if nE > 0:
            best = max(best, lp_norm(w, q) / nE)
    return best
