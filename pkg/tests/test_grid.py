import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spflow.grid import (
    Field,
    FieldFormatError,
    Grid3,
    GridMismatchError,
    e_inner,
    first_eigenmode,
    first_eigenvalue,
    grad_sq_inner,
    l2_inner,
    lp_norm,
    neg_laplacian,
    read_field,
    sine_upsample,
    write_field,
)


def test_grid_geometry():
    g = Grid3(L=2.0, n=4)
    assert g.h == pytest.approx(0.8)
    assert g.num_nodes == 64
    x = g.axis()
    assert x[0] == pytest.approx(-2.0 + 0.8)
    assert x[-1] == pytest.approx(2.0 - 0.8)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid3(L=2.0, n=3)
    with pytest.raises(ValueError):
        Grid3(L=0.0, n=8)


def test_l2_inner_zero_case(grid8, rand_field):
    b = rand_field()
    assert l2_inner(Field.zeros(grid8), b) == 0.0


def test_l2_inner_constant_field():
    # h^3 * 64 on the 4-node, L=2 box (h = 0.8)
    g = Grid3(L=2.0, n=4)
    ones = Field(g, np.ones((4, 4, 4)))
    assert l2_inner(ones, ones) == pytest.approx(0.8**3 * 64, rel=1e-14)


def test_l2_inner_matches_dense_dot(grid8, rand_field):
    a, b = rand_field(), rand_field()
    expected = grid8.h**3 * float(a.values.ravel() @ b.values.ravel())
    assert l2_inner(a, b) == pytest.approx(expected, rel=1e-14)


def test_l2_inner_grid_mismatch(rand_field):
    a = rand_field()
    other = Field.zeros(Grid3(L=2.0, n=6))
    with pytest.raises(GridMismatchError):
        l2_inner(a, other)


def test_grad_sq_inner_zero(grid8, rand_field):
    assert grad_sq_inner(Field.zeros(grid8), rand_field()) == 0.0


def test_eigenmode_identity(grid8):
    # the sine product is an exact eigenmode of the 7-point stencil
    mode = first_eigenmode(grid8)
    lam = first_eigenvalue(grid8)
    rayleigh = grad_sq_inner(mode, mode) / l2_inner(mode, mode)
    assert rayleigh == pytest.approx(lam, rel=1e-12)


def test_grad_sq_inner_matches_dense(grid8, rand_field, dense_lap8):
    a, b = rand_field(), rand_field()
    expected = grid8.h**3 * float(a.values.ravel() @ (dense_lap8 @ b.values.ravel()))
    assert grad_sq_inner(a, b) == pytest.approx(expected, rel=1e-12)


def test_bilinear_forms_symmetric(grid8, rand_field, V8):
    a, b = rand_field(), rand_field()
    assert l2_inner(a, b) == pytest.approx(l2_inner(b, a), rel=1e-13)
    assert grad_sq_inner(a, b) == pytest.approx(grad_sq_inner(b, a), rel=1e-12)
    assert e_inner(a, b, V8) == pytest.approx(e_inner(b, a, V8), rel=1e-12)


def test_dirichlet_positive_definite(grid8, rand_field):
    a = rand_field()
    assert grad_sq_inner(a, a) > 0
    assert grad_sq_inner(Field.zeros(grid8), Field.zeros(grid8)) == 0.0


def test_e_inner_reduces_without_potential(grid8, rand_field):
    a, b = rand_field(), rand_field()
    V0 = Field.zeros(grid8)
    assert e_inner(a, b, V0) == pytest.approx(grad_sq_inner(a, b), rel=1e-13)


def test_e_inner_rejects_negative_potential(grid8, rand_field):
    V = Field(grid8, -np.ones((8, 8, 8)))
    with pytest.raises(ValueError):
        e_inner(rand_field(), rand_field(), V)


def test_e_inner_matches_dense(grid8, rand_field, V8, dense_lap8):
    a, b = rand_field(), rand_field()
    S = dense_lap8 + np.diag(V8.values.ravel())
    expected = grid8.h**3 * float(a.values.ravel() @ (S @ b.values.ravel()))
    assert e_inner(a, b, V8) == pytest.approx(expected, rel=1e-12)


def test_lp_norm_zero_and_l2_consistency(grid8, rand_field):
    assert lp_norm(Field.zeros(grid8), 3.0) == 0.0
    a = rand_field()
    assert lp_norm(a, 2.0) == pytest.approx(np.sqrt(l2_inner(a, a)), rel=1e-13)


def test_lp_norm_direct_summation(grid8, rand_field):
    a = rand_field()
    q = 3.5
    expected = (grid8.h**3 * np.sum(np.abs(a.values) ** q)) ** (1 / q)
    assert lp_norm(a, q) == pytest.approx(expected, rel=1e-14)


def test_lp_norm_rejects_bad_exponent(rand_field):
    with pytest.raises(ValueError):
        lp_norm(rand_field(), 0.5)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_l2_inner_bilinear(alpha, beta, seed):
    g = Grid3(L=1.0, n=4)
    r = np.random.default_rng(seed)
    a = Field(g, r.standard_normal((4, 4, 4)))
    b = Field(g, r.standard_normal((4, 4, 4)))
    c = Field(g, r.standard_normal((4, 4, 4)))
    combo = Field(g, alpha * a.values + beta * b.values)
    lhs = l2_inner(combo, c)
    rhs = alpha * l2_inner(a, c) + beta * l2_inner(b, c)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@given(st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_lp_norm_homogeneous(scale, seed):
    g = Grid3(L=1.0, n=4)
    r = np.random.default_rng(seed)
    a = Field(g, r.standard_normal((4, 4, 4)))
    assert lp_norm(Field(g, scale * a.values), 2.5) == pytest.approx(
        scale * lp_norm(a, 2.5), rel=1e-10
    )


def test_sine_upsample_nests(grid8, rand_field):
    u = rand_field()
    fine = sine_upsample(u, 2)
    assert fine.grid.n == 2 * grid8.n + 1
    np.testing.assert_allclose(fine.values[1::2, 1::2, 1::2], u.values, atol=1e-12)


def test_neg_laplacian_eigenmode(grid8):
    mode = first_eigenmode(grid8)
    out = neg_laplacian(mode)
    np.testing.assert_allclose(out.values, first_eigenvalue(grid8) * mode.values, rtol=1e-11)


# --- binary dump format ---

def test_field_dump_roundtrip(tmp_path, grid8, rand_field):
    u = rand_field()
    path = tmp_path / "field.spfld"
    write_field(path, u)
    back = read_field(path)
    assert back.grid == grid8
    np.testing.assert_array_equal(back.values, u.values)


def test_field_dump_header_layout(tmp_path, grid8, rand_field):
    u = rand_field()
    path = tmp_path / "field.spfld"
    write_field(path, u)
    raw = path.read_bytes()
    assert raw[:8] == b"SPFLD01\x00"
    assert int.from_bytes(raw[8:12], "little") == grid8.n
    assert np.frombuffer(raw[12:20], "<f8")[0] == grid8.L
    assert len(raw) == 28 + 8 * grid8.num_nodes


def test_field_dump_truncated(tmp_path, grid8, rand_field):
    path = tmp_path / "field.spfld"
    write_field(path, rand_field())
    raw = path.read_bytes()
    path.write_bytes(raw[:-9])
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_field_dump_bad_magic(tmp_path, grid8, rand_field):
    path = tmp_path / "field.spfld"
    write_field(path, rand_field())
    raw = bytearray(path.read_bytes())
    raw[0] = ord(b"X")
    path.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError):
        read_field(path)
