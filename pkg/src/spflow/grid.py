"""Cubic Dirichlet box: fields, inner products, stencil calculus, transforms.

The computational domain is the open box (-L, L)^3 with homogeneous Dirichlet
data on the boundary. Interior nodes are x_i = -L + (i+1) h, i = 0..n-1, with
spacing h = 2L/(n+1); a field stores its n^3 nodal values in row-major (i,j,k)
order. All integrals are midpoint quadrature h^3 * sum, which pairs exactly
with the 7-point Laplacian used throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dstn, idstn

MAGIC = b"SPFLD01\x00"
HEADER = struct.Struct("<8sIdd")  # magic, n (u32), L (f64), reserved (f64)


class GridMismatchError(ValueError):
    """Two fields living on different grids were combined."""


class FieldFormatError(ValueError):
    """A binary field dump could not be parsed."""


@dataclass(frozen=True)
class Grid3:
    """Interior nodes of the truncated box [-L, L]^3."""

    L: float
    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"need n >= 4 interior nodes per axis, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"need box half-width L > 0, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n + 1)

    @property
    def num_nodes(self) -> int:
        return self.n**3

    def axis(self) -> np.ndarray:
        """1-d interior node coordinates, shared by all three axes."""
        return -self.L + self.h * np.arange(1, self.n + 1)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.axis()
        return np.meshgrid(x, x, x, indexing="ij")

    def radius_sq(self) -> np.ndarray:
        X, Y, Z = self.meshgrid()
        return X**2 + Y**2 + Z**2


@dataclass
class Field:
    """Real scalar samples on the interior nodes of a Grid3.

    The zero trace on the box boundary is implicit: values only cover
    interior nodes. Operations treat fields as immutable values and
    return fresh instances.
    """

    grid: Grid3
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = (self.grid.n,) * 3
        if v.shape != shape:
            if v.size == self.grid.num_nodes:
                v = v.reshape(shape)
            else:
                raise ValueError(f"field shape {v.shape} != grid shape {shape}")
        self.values = v

    @classmethod
    def zeros(cls, grid: Grid3) -> "Field":
        return cls(grid, np.zeros((grid.n,) * 3))

    @classmethod
    def from_function(cls, grid: Grid3, fn) -> "Field":
        X, Y, Z = grid.meshgrid()
        return cls(grid, np.asarray(fn(X, Y, Z), dtype=float))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def __add__(self, other: "Field") -> "Field":
        check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def check_same_grid(*fields: Field) -> Grid3:
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError(f"grids differ: {g} vs {f.grid}")
    return g


# ---------------------------------------------------------------------------
# inner products and norms


def l2_inner(a: Field, b: Field) -> float:
    """Midpoint quadrature of the product: h^3 sum(a*b)."""
    g = check_same_grid(a, b)
    return g.h**3 * float(np.sum(a.values * b.values))


def neg_laplacian(u: Field) -> Field:
    """7-point -Delta_h with zero Dirichlet closure."""
    v = u.values
    out = 6.0 * v
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(1, None)
        hi[ax] = slice(None, -1)
        out[tuple(lo)] -= v[tuple(hi)]
        out[tuple(hi)] -= v[tuple(lo)]
    return Field(u.grid, out / u.grid.h**2)


def grad_sq_inner(a: Field, b: Field) -> float:
    """Discrete Dirichlet form h^3 <a, -Delta_h b>; symmetric, positive definite."""
    check_same_grid(a, b)
    return l2_inner(a, neg_laplacian(b))


def e_inner(a: Field, b: Field, V: Field) -> float:
    """Inner product of the weighted space: Dirichlet form plus potential term."""
    g = check_same_grid(a, b, V)
    if np.min(V.values) < 0:
        raise ValueError("potential must be nonnegative nodewise")
    return grad_sq_inner(a, b) + g.h**3 * float(np.sum(V.values * a.values * b.values))


def e_norm(u: Field, V: Field) -> float:
    return np.sqrt(max(e_inner(u, u, V), 0.0))


def lp_norm(a: Field, q: float) -> float:
    if q < 1:
        raise ValueError(f"need exponent q >= 1, got {q}")
    return float(a.grid.h**3 * np.sum(np.abs(a.values) ** q)) ** (1.0 / q)


# ---------------------------------------------------------------------------
# sine-transform calculus

def stencil_eigenvalues_1d(grid: Grid3) -> np.ndarray:
    """Eigenvalues of the 1-d second-difference operator on the interior nodes."""
    k = np.arange(1, grid.n + 1)
    return (2.0 - 2.0 * np.cos(np.pi * k / (grid.n + 1))) / grid.h**2


def stencil_eigenvalues(grid: Grid3) -> np.ndarray:
    """Eigenvalues of -Delta_h in the sine basis, shape (n, n, n)."""
    e = stencil_eigenvalues_1d(grid)
    return e[:, None, None] + e[None, :, None] + e[None, None, :]


def sine_transform(values: np.ndarray) -> np.ndarray:
    return dstn(values, type=1)

def inv_sine_transform(values: np.ndarray) -> np.ndarray:
    return idstn(values, type=1)


def shifted_inverse_apply(grid: Grid3, rhs: np.ndarray, shift: float) -> np.ndarray:
    """Apply (-Delta_h + shift)^(-1) spectrally. shift > -lambda_1 required."""
    eig = stencil_eigenvalues(grid) + shift
    return idstn(dstn(rhs, type=1) / eig, type=1)


def first_eigenmode(grid: Grid3) -> Field:
    """Lowest Dirichlet eigenmode of -Delta_h (sine product), unit max amplitude."""
    s = np.sin(np.pi * np.arange(1, grid.n + 1) / (grid.n + 1))
    return Field(grid, s[:, None, None] * s[None, :, None] * s[None, None, :])


def first_eigenvalue(grid: Grid3) -> float:
    return 3.0 * (2.0 - 2.0 * np.cos(np.pi / (grid.n + 1))) / grid.h**2


def sine_upsample(u: Field, factor: int = 2) -> Field:
    """Resample u on the refined grid with n' = factor*(n+1) - 1 via its sine series.

    The refined node set nests the original one, so this is the natural
    continuum representative of a discrete field for off-node evaluation.
    """
    if factor < 1:
        raise ValueError("refine factor must be >= 1")
    if factor == 1:
        return u.copy()
    n = u.grid.n
    n2 = factor * (n + 1) - 1
    coeff = dstn(u.values, type=1)
    pad = np.zeros((n2,) * 3)
    pad[:n, :n, :n] = coeff
    vals = idstn(pad, type=1) * float(factor) ** 3
    return Field(Grid3(u.grid.L, n2), vals)


# ---------------------------------------------------------------------------
# binary field dumps

def write_field(path, u: Field) -> None:
    """Write the portable dump: 28-byte header then n^3 little-endian f64."""
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, u.grid.n, u.grid.L, 0.0))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise FieldFormatError(f"truncated header: {len(raw)} bytes < {HEADER.size}")
    magic, n, L, _ = HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r} at byte 0")
    expected = HEADER.size + 8 * n**3
    if len(raw) != expected:
        raise FieldFormatError(
            f"payload size mismatch at byte {len(raw)}: expected {expected} bytes total"
        )
    vals = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape((n, n, n))
    return Field(Grid3(L, n), vals.astype(float))
