import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from swarmsim.diffusion import (DiffusionError, DiffusionStep, _chunks, explicit_limit,
                                implicit_banded, implicit_sparse)
from swarmsim.grid import laplacian_variable_coeff


def _dense_from_stencil(coeff, dt, dx, dy):
    ny, nx = coeff.shape
    n = nx * ny
    A = np.empty((n, n))
    for p in range(n):
        e = np.zeros(n)
        e[p] = 1.0
        A[:, p] = e - dt * laplacian_variable_coeff(e.reshape(ny, nx), coeff, dx, dy).ravel()
    return A


def test_matrix_matches_stencil():
    rng = np.random.default_rng(3)
    coeff = rng.random((5, 4)) + 0.1
    A = implicit_sparse(coeff, 0.05, 0.25, 0.2).toarray()
    np.testing.assert_allclose(A, _dense_from_stencil(coeff, 0.05, 0.25, 0.2), atol=1e-14)
    assert np.array_equal(A, A.T)
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0) and np.all(np.diag(A) > 0)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-13)  # zero-flux rows
    assert implicit_banded(coeff, 0.05, 0.25, 0.2).shape == (5, 20)


def test_chunks_cover():
    parts = _chunks(10, 3)
    assert [s.start for s in parts] == [0, 3, 7] and parts[-1].stop == 10
    assert len(_chunks(2, 8)) == 2


def _levels(seed=0, m=6, ny=7, nx=9):
    rng = np.random.default_rng(seed)
    return rng.random((m, ny, nx)), rng.random((ny, nx)) * 0.5 + 1e-3


def test_cg_agrees_with_cholesky():
    u, c = _levels()
    a, _ = DiffusionStep(c, 0.1, 0.1, 0.1)(u)
    b, iters = DiffusionStep(c, 0.1, 0.1, 0.1, linear_solver="cg", tol=1e-13)(u)
    assert iters > 0
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


@pytest.mark.parametrize("solver", ["cholesky", "cg"])
def test_workers_bitwise(solver):
    u, c = _levels(m=11)
    ref, it_ref = DiffusionStep(c, 0.1, 0.1, 0.1, linear_solver=solver)(u)
    for w in (2, 3, 16):
        out, it = DiffusionStep(c, 0.1, 0.1, 0.1, linear_solver=solver, workers=w)(u)
        assert np.array_equal(out, ref) and it == it_ref


def test_mass_conserved():
    u, c = _levels()
    out, _ = DiffusionStep(c, 1.0, 0.1, 0.1)(u)
    np.testing.assert_allclose(out.sum(axis=(1, 2)), u.sum(axis=(1, 2)), rtol=1e-12)


def test_explicit_and_off():
    u, c = _levels()
    limit = explicit_limit(float(c.max()), 0.1, 0.1)
    out, _ = DiffusionStep(c, 0.9 * limit, 0.1, 0.1, scheme="explicit")(u)
    assert out.min() >= 0
    with pytest.raises(DiffusionError, match="stability limit"):
        DiffusionStep(c, 1.1 * limit, 0.1, 0.1, scheme="explicit")
    same, _ = DiffusionStep(c, 1.0, 0.1, 0.1, scheme="off")(u)
    assert np.array_equal(same, u) and same is not u


def test_cg_failure_reported():
    u, c = _levels()
    with pytest.raises(DiffusionError, match="CG did not converge"):
        DiffusionStep(c * 100, 1.0, 0.1, 0.1, linear_solver="cg", tol=1e-15, max_iter=1)(u)


def test_unknown_options():
    with pytest.raises(ValueError):
        DiffusionStep(np.ones((3, 3)), 0.1, 1, 1, scheme="magic")
    with pytest.raises(ValueError):
        DiffusionStep(np.ones((3, 3)), 0.1, 1, 1, linear_solver="lu")


@settings(max_examples=80, deadline=None)
@given(u=arrays(np.float64, (2, 5, 6), elements=st.floats(0, 1e3)),
       c=arrays(np.float64, (5, 6), elements=st.floats(1e-4, 50)),
       dt=st.floats(1e-4, 100))
def test_implicit_positivity(u, c, dt):
    out, _ = DiffusionStep(c, dt, 0.2, 0.25)(u)
    assert out.min() >= 0.0
