import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chtumor.grid import (Grid, grad_sq, h1_dual, helmholtz_solve, inner, integrate, laplacian,
                          mean, norms, spectral_solve)
from oracles import cosine_vector, dense_laplacian, dual_norm_dense, nu_1d

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def grid_and_field(draw, max_n=12):
    dim = draw(st.sampled_from([1, 2]))
    n = tuple(draw(st.integers(1, max_n)) for _ in range(dim))
    L = tuple(draw(st.floats(0.5, 10.0)) for _ in range(dim))
    g = Grid(n, L)
    f = draw(arrays(float, g.shape, elements=finite))
    return g, f


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((0,), (1.0,))
    with pytest.raises(ValueError):
        Grid((4,), (-1.0,))
    with pytest.raises(ValueError):
        Grid((2, 2, 2), (1.0,))
    g = Grid((4, 6), (2.0,))
    assert g.lengths == (2.0, 2.0)
    assert g.h == (0.5, 2.0 / 6)
    assert g.measure == 4.0
    np.testing.assert_allclose(g.centers(0), [0.25, 0.75, 1.25, 1.75])


def test_laplacian_of_constant_is_zero():
    g = Grid((7,), (3.0,))
    assert np.all(laplacian(g, np.full(7, 2.5)) == 0.0)


def test_laplacian_three_point_example():
    g = Grid((3,), (3.0,))
    np.testing.assert_array_equal(laplacian(g, np.array([0.0, 1.0, 0.0])), [1.0, -2.0, 1.0])


@pytest.mark.parametrize("n", [(5,), (16,), (4, 6), (8, 3)])
def test_laplacian_matches_dense_matrix(n, rng):
    g = Grid(n, tuple(1.0 + 0.5 * i for i in range(len(n))))
    A = dense_laplacian(g.n, g.h)
    f = rng.normal(size=g.shape)
    np.testing.assert_allclose(laplacian(g, f).ravel(), A @ f.ravel(), rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("N", [4, 9, 16])
def test_eigenmodes(N):
    g = Grid((N,), (2.0,))
    h = g.h[0]
    for k in range(N):
        v = cosine_vector(N, k)
        nu = nu_1d(N, h, k)
        np.testing.assert_allclose(laplacian(g, v), -nu * v, atol=1e-12 * max(1.0, nu))
        assert g.eigenvalues[k] == pytest.approx(nu, rel=1e-13, abs=1e-13)
    assert g.eigenvalues[0] == 0.0


def test_2d_eigenvalues_add():
    g = Grid((4, 5), (1.0, 2.0))
    nu0 = [nu_1d(4, g.h[0], k) for k in range(4)]
    nu1 = [nu_1d(5, g.h[1], k) for k in range(5)]
    np.testing.assert_allclose(g.eigenvalues, np.add.outer(nu0, nu1), rtol=1e-13, atol=1e-13)


def test_mode_is_unit_and_matches_cosine():
    g = Grid((8,), (3.0,))
    m = g.mode(3)
    assert np.sqrt(inner(g, m, m)) == pytest.approx(1.0, rel=1e-13)
    c = cosine_vector(8, 3)
    np.testing.assert_allclose(m / np.max(np.abs(m)), c / np.max(np.abs(c)), atol=1e-13)


def test_helmholtz_examples(rng):
    g = Grid((8,), (1.0,))
    rhs = rng.normal(size=8)
    np.testing.assert_array_equal(helmholtz_solve(g, 2.0, 0.0, rhs), rhs / 2.0)
    np.testing.assert_allclose(helmholtz_solve(g, 3.0, 0.7, np.full(8, 6.0)), 2.0, rtol=1e-13)
    A = 1.3 * np.eye(8) - 0.4 * dense_laplacian(g.n, g.h)
    x = helmholtz_solve(g, 1.3, 0.4, rhs)
    np.testing.assert_allclose(x, np.linalg.solve(A, rhs), rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(A @ x - rhs)) <= 1e-10 * np.max(np.abs(rhs))
    with pytest.raises(ValueError):
        helmholtz_solve(g, 0.0, 1.0, rhs)
    with pytest.raises(ValueError):
        helmholtz_solve(g, 1.0, -1.0, rhs)


def test_helmholtz_2d_dense(rng):
    g = Grid((5, 4), (1.0, 1.5))
    rhs = rng.normal(size=g.shape)
    A = 0.5 * np.eye(20) - 2.0 * dense_laplacian(g.n, g.h)
    np.testing.assert_allclose(helmholtz_solve(g, 0.5, 2.0, rhs).ravel(), np.linalg.solve(A, rhs.ravel()),
                               rtol=1e-10, atol=1e-12)


def test_norm_examples():
    g = Grid((10,), (1.0,))
    f = np.full(10, -0.7)
    r = norms(g, f)
    assert r["l2"] == pytest.approx(0.7)
    assert r["h1_semi"] == 0.0
    assert r["mean"] == pytest.approx(-0.7)
    assert r["h1_dual"] == pytest.approx(0.7)
    assert all(v == 0.0 for v in norms(g, np.zeros(10)).values())


@pytest.mark.parametrize("N,k", [(8, 1), (12, 5), (16, 15)])
def test_dual_norm_of_eigenmode(N, k):
    g = Grid((N,), (2.5,))
    m = g.mode(k)
    assert h1_dual(g, m) == pytest.approx(g.eigenvalues[k] ** -0.5, rel=1e-12)
    assert h1_dual(g, m) == pytest.approx(dual_norm_dense(m, g.n, g.h), rel=1e-10)


def test_dual_norm_dense_2d(rng):
    g = Grid((4, 5), (1.0, 2.0))
    f = rng.normal(size=g.shape)
    assert h1_dual(g, f) == pytest.approx(dual_norm_dense(f, g.n, g.h), rel=1e-10)


def test_integrate_examples():
    assert integrate(Grid((5,), (2.0,)), np.ones(5)) == pytest.approx(2.0)
    assert integrate(Grid((4,), (1.0,)), np.full(4, -3.0)) == pytest.approx(-3.0)
    g = Grid((12,), (1.0,))
    for k in range(1, 12):
        assert abs(integrate(g, cosine_vector(12, k) * g.h[0])) <= 1e-12


@given(grid_and_field())
def test_self_adjoint_and_conservative(gf):
    g, f = gf
    v = np.cos(np.arange(g.size)).reshape(g.shape)
    lhs = inner(g, laplacian(g, f), v)
    rhs = inner(g, f, laplacian(g, v))
    scale = np.sqrt(inner(g, f, f) * inner(g, v, v)) * max(1.0, max(1 / hh**2 for hh in g.h))
    assert abs(lhs - rhs) <= 1e-12 * max(scale, 1e-300)
    assert abs(integrate(g, laplacian(g, f))) <= 1e-12 * max(1.0, np.abs(f).max()) * g.measure / min(g.h) ** 2


@given(grid_and_field())
def test_transform_round_trip(gf):
    g, f = gf
    back = g.inverse(g.forward(f))
    assert np.max(np.abs(back - f)) <= 1e-12 * max(1.0, np.max(np.abs(f)))


@given(grid_and_field())
def test_negative_semidefinite_and_grad_identity(gf):
    g, f = gf
    q = inner(g, -laplacian(g, f), f)
    assert q >= -1e-12 * max(1.0, inner(g, f, f))
    assert q == pytest.approx(grad_sq(g, f), rel=1e-9, abs=1e-9)


@given(grid_and_field())
def test_parseval(gf):
    g, f = gf
    c = g.forward(f)
    assert np.sum(c * c) == pytest.approx(inner(g, f, f), rel=1e-12, abs=1e-12)
    assert mean(g, f) == pytest.approx(np.mean(f), abs=1e-12)


def test_spectral_solve_inverts_symbol(rng):
    g = Grid((9,), (2.0,))
    f = rng.normal(size=9)
    sym = 2.0 + g.eigenvalues
    x = spectral_solve(g, f, sym)
    np.testing.assert_allclose(2.0 * x - laplacian(g, x), f, atol=1e-12)
