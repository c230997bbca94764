import numpy as np
import pytest

from spflow.coulomb import CoulombSolver
from spflow.grid import Field, Grid3
from spflow.model import ModelConfig, eval_V


@pytest.fixture
def grid8():
    return Grid3(L=2.0, n=8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def rand_field(grid8, rng):
    def make(scale=1.0, grid=None):
        g = grid or grid8
        return Field(g, scale * rng.standard_normal((g.n,) * 3))

    return make


@pytest.fixture(scope="session")
def solver8_free():
    return CoulombSolver(Grid3(L=2.0, n=8), "freespace")


@pytest.fixture(scope="session")
def solver8_dir():
    return CoulombSolver(Grid3(L=2.0, n=8), "dirichlet")


@pytest.fixture
def cfg8():
    return ModelConfig(L=2.0, n=8, potential="harmonic", p=4.5, eps_cone=0.05)


@pytest.fixture
def V8(cfg8):
    return eval_V(cfg8)


def dense_neg_laplacian(grid: Grid3) -> np.ndarray:
    """Dense matrix of the 7-point -Delta_h with zero Dirichlet data."""
    n = grid.n
    N = n**3
    A = np.zeros((N, N))
    h2 = grid.h**2

    def idx(i, j, k):
        return (i * n + j) * n + k

    for i in range(n):
        for j in range(n):
            for k in range(n):
                row = idx(i, j, k)
                A[row, row] = 6.0 / h2
                for di, dj, dk in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    ii, jj, kk = i + di, j + dj, k + dk
                    if 0 <= ii < n and 0 <= jj < n and 0 <= kk < n:
                        A[row, idx(ii, jj, kk)] = -1.0 / h2
    return A


@pytest.fixture(scope="session")
def dense_lap8():
    return dense_neg_laplacian(Grid3(L=2.0, n=8))
