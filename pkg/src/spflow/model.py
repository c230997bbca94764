"""Problem data: potential, monomial nonlinearity, exponent bookkeeping.

The built-in nonlinearity is the odd monomial f(t) = |t|^(p-2) t with
primitive F(t) = |t|^p / p, so the superlinearity exponent satisfies
mu = p unless the config deliberately lowers mu to exercise the weaker
inequality t f(t) >= mu F(t). The perturbation term lam * |t|^(r-2) t
with r in (p, 6) is switched on by lam > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .grid import Field, Grid3

POTENTIAL_KINDS = ("harmonic", "constant", "custom")


class ConfigError(ValueError):
    """Invalid problem configuration."""


class EvaluationError(FloatingPointError):
    """Nonlinearity evaluation produced non-finite values."""


@dataclass(frozen=True)
class ModelConfig:
    """Problem data for the coupled system on one truncated box."""

    L: float = 8.0
    n: int = 48
    potential: str = "harmonic"
    potential_constant: float = 1.0
    potential_table: Optional[np.ndarray] = None
    # nodewise grad(V) . x for custom potentials; analytic kinds derive it
    potential_gvx_table: Optional[np.ndarray] = None
    p: float = 4.5
    mu: Optional[float] = None
    lam: float = 0.0
    r: Optional[float] = None
    eps_cone: float = 0.05
    coulomb_mode: str = "freespace"
    tol_lin: float = 1e-10
    cg_maxiter: int = 2000

    def __post_init__(self):
        if self.potential not in POTENTIAL_KINDS:
            raise ConfigError(f"unknown potential kind {self.potential!r}")
        mu = self.p if self.mu is None else self.mu
        if not (3.0 < mu <= self.p < 6.0):
            raise ConfigError(f"need 3 < mu <= p < 6, got mu={mu}, p={self.p}")
        if self.lam < 0:
            raise ConfigError(f"perturbation weight must be >= 0, got {self.lam}")
        if self.lam > 0:
            r = self.r_eff
            if not (self.p < r < 6.0):
                raise ConfigError(f"need r in (p, 6) when lam > 0, got r={r}")
        if not self.eps_cone > 0:
            raise ConfigError(f"cone width eps must be > 0, got {self.eps_cone}")
        if self.coulomb_mode not in ("freespace", "dirichlet"):
            raise ConfigError(f"unknown coulomb mode {self.coulomb_mode!r}")
        self.grid  # validates L, n

    @property
    def grid(self) -> Grid3:
        return Grid3(self.L, self.n)

    @property
    def mu_eff(self) -> float:
        return self.p if self.mu is None else self.mu

    @property
    def r_eff(self) -> float:
        return 0.5 * (self.p + 6.0) if self.r is None else self.r

    def with_lambda(self, lam: float) -> "ModelConfig":
        return replace(self, lam=lam)


def _check_finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise EvaluationError(f"{name} overflowed at node {tuple(int(i) for i in bad)}")


def eval_f(cfg: ModelConfig, u: Field) -> Field:
    """Nodewise |u|^(p-2) u. Odd by construction."""
    out = np.abs(u.values) ** (cfg.p - 2.0) * u.values
    _check_finite("f(u)", out)
    return Field(u.grid, out)


def eval_F(cfg: ModelConfig, u: Field) -> Field:
    """Nodewise primitive |u|^p / p."""
    out = np.abs(u.values) ** cfg.p / cfg.p
    _check_finite("F(u)", out)
    return Field(u.grid, out)


def eval_perturb_f(cfg: ModelConfig, u: Field) -> Field:
    """Nodewise lam * |u|^(r-2) u; zero field when lam == 0."""
    if cfg.lam == 0.0:
        return Field.zeros(u.grid)
    out = cfg.lam * np.abs(u.values) ** (cfg.r_eff - 2.0) * u.values
    _check_finite("lam |u|^(r-2) u", out)
    return Field(u.grid, out)


def eval_rhs(cfg: ModelConfig, u: Field) -> Field:
    """Right-hand side f(u) + lam |u|^(r-2) u of the screened linear problem."""
    rhs = eval_f(cfg, u)
    if cfg.lam > 0:
        rhs = rhs + eval_perturb_f(cfg, u)
    return rhs


def eval_V(cfg: ModelConfig, grid: Optional[Grid3] = None) -> Field:
    """Sample the potential on the grid; nonnegative nodewise."""
    g = cfg.grid if grid is None else grid
    if cfg.potential == "harmonic":
        return Field(g, g.radius_sq())
    if cfg.potential == "constant":
        c = cfg.potential_constant
        if c < 0:
            raise ConfigError(f"constant potential must be >= 0, got {c}")
        return Field(g, np.full((g.n,) * 3, float(c)))
    table = cfg.potential_table
    if table is None:
        raise ConfigError("custom potential requires potential_table")
    table = np.asarray(table, dtype=float)
    if table.size != g.num_nodes:
        raise ConfigError(
            f"custom potential table has {table.size} entries, grid needs {g.num_nodes}"
        )
    if np.min(table) < 0:
        raise ConfigError("custom potential table has negative entries")
    return Field(g, table.reshape((g.n,) * 3))


def eval_gvx(cfg: ModelConfig, grid: Optional[Grid3] = None) -> Field:
    """Nodewise grad(V) . x, analytic for built-in kinds."""
    g = cfg.grid if grid is None else grid
    if cfg.potential == "harmonic":
        return Field(g, 2.0 * g.radius_sq())
    if cfg.potential == "constant":
        return Field.zeros(g)
    if cfg.potential_gvx_table is None:
        raise ConfigError("custom potential lacks gradient data (potential_gvx_table)")
    table = np.asarray(cfg.potential_gvx_table, dtype=float)
    if table.size != g.num_nodes:
        raise ConfigError("potential_gvx_table size mismatch")
    return Field(g, table.reshape((g.n,) * 3))


@dataclass(frozen=True)
class V1Report:
    ok: bool
    min_value: float
    argmin_node: tuple


def check_v1(cfg: ModelConfig, grid: Optional[Grid3] = None) -> V1Report:
    """Verify 2V + grad(V).x >= 0 nodewise with the analytic gradient."""
    g = cfg.grid if grid is None else grid
    combo = 2.0 * eval_V(cfg, g).values + eval_gvx(cfg, g).values
    idx = np.unravel_index(np.argmin(combo), combo.shape)
    mn = float(combo[idx])
    return V1Report(ok=mn >= 0.0, min_value=mn, argmin_node=tuple(int(i) for i in idx))


def ar_defect(cfg: ModelConfig, u: Field) -> Field:
    """Nodewise t f(t) - mu F(t) = (p - mu) F(t); >= 0 whenever mu <= p."""
    return Field(u.grid, (cfg.p - cfg.mu_eff) * eval_F(cfg, u).values)
