import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from asdecomp.eigen import ConvergenceError, dense_generalized_eig, explicit_residuals, smallest_eigenpairs
from asdecomp.fem import WeightSpec, assemble_mass, assemble_stiffness, reduce_dirichlet
from asdecomp.media import constant_function
from asdecomp.mesh import build_uniform_mesh

from oracles import random_spd_pair

UNIT = (0.0, 0.0, 1.0, 1.0)


def laplacian_pencil(n):
    mesh = build_uniform_mesh(UNIT, n, n)
    A = assemble_stiffness(mesh, constant_function(mesh, 0.0), WeightSpec(1.0))
    return reduce_dirichlet(A, mesh)[0], reduce_dirichlet(assemble_mass(mesh), mesh)[0]


def weighted_pencil(setup, eps):
    mesh, _, ud = setup
    A = assemble_stiffness(mesh, ud, WeightSpec(eps))
    return reduce_dirichlet(A, mesh)[0], reduce_dirichlet(assemble_mass(mesh), mesh)[0]


def check_result(A, M, res, tol=1e-8):
    lam, X = res.eigenvalues, res.eigenvectors
    assert np.all(np.diff(lam) >= 0)
    assert lam[0] > 0
    assert_allclose(X.T @ (M @ X), np.eye(lam.size), atol=1e-10)
    explicit = explicit_residuals(A, M, lam, X)
    assert_allclose(res.residuals, explicit, rtol=1e-12, atol=1e-300)
    assert np.all(explicit <= tol)
    # sign convention: the largest-magnitude entry of each vector is positive
    idx = np.argmax(np.abs(X), axis=0)
    assert np.all(X[idx, np.arange(lam.size)] > 0)


# dense oracle


def test_dense_identity():
    lam, X = dense_generalized_eig(np.eye(6), np.eye(6))
    assert_allclose(lam, 1.0)
    assert_allclose(X.T @ X, np.eye(6), atol=1e-14)


def test_dense_diagonal():
    lam, _ = dense_generalized_eig(np.diag(np.arange(7.0, 0.0, -1.0)), np.eye(7))
    assert_allclose(lam, np.arange(1.0, 8.0))


def test_dense_two_by_two():
    lam, X = dense_generalized_eig(np.diag([2.0, 3.0]), np.diag([1.0, 2.0]))
    assert_allclose(lam, [1.5, 2.0])
    assert_allclose(X.T @ np.diag([1.0, 2.0]) @ X, np.eye(2), atol=1e-14)


def test_dense_errors():
    with pytest.raises(ValueError):
        dense_generalized_eig(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        dense_generalized_eig(np.eye(501), np.eye(501))
    with pytest.raises(ValueError):
        dense_generalized_eig(np.eye(2), np.eye(3))


# sparse solver against the dense oracle


@pytest.mark.parametrize("seed", range(20))
def test_random_pencils_match_dense(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(30, 201))
    K = int(rng.integers(1, min(12, n) + 1))
    A, M = random_spd_pair(rng, n)
    lam_ref, _ = dense_generalized_eig(A, M)
    As, Ms = sp.csr_matrix(A), sp.csr_matrix(M)
    res = smallest_eigenpairs(As, Ms, K, seed=seed)
    assert_allclose(res.eigenvalues, lam_ref[:K], rtol=1e-8)
    check_result(As, Ms, res)


@given(st.integers(0, 2**31), st.integers(2, 60))
def test_property_random_pencils(seed, n):
    rng = np.random.default_rng(seed)
    A, M = random_spd_pair(rng, n, density=0.2)
    K = int(rng.integers(1, n + 1))
    res = smallest_eigenpairs(sp.csr_matrix(A), sp.csr_matrix(M), K)
    assert_allclose(res.eigenvalues, dense_generalized_eig(A, M)[0][:K], rtol=1e-8)
    assert_allclose(res.eigenvectors.T @ M @ res.eigenvectors, np.eye(K), atol=1e-10)


def test_laplacian_spectrum():
    A, M = laplacian_pencil(32)
    res = smallest_eigenpairs(A, M, 6)
    check_result(A, M, res)
    lam = res.eigenvalues
    assert lam[0] == pytest.approx(2 * math.pi**2, rel=1e-2)
    assert lam[0] > 2 * math.pi**2  # conforming elements overestimate
    assert abs(lam[1] - lam[2]) / lam[1] < 2e-2
    assert lam[1] == pytest.approx(5 * math.pi**2, rel=2e-2)


def test_degenerate_pair_subspace():
    A, M = laplacian_pencil(16)
    res = smallest_eigenpairs(A, M, 3)
    lam_ref, X_ref = dense_generalized_eig(A.toarray(), M.toarray())
    assert_allclose(res.eigenvalues, lam_ref[:3], rtol=1e-8)
    # compare the span of pairs 2 and 3 in the M-inner product
    L = np.linalg.cholesky(M.toarray())
    angles = sla.subspace_angles(L.T @ res.eigenvectors[:, 1:3], L.T @ X_ref[:, 1:3])
    assert np.max(angles) < 1e-6


def test_k_then_k_plus_one():
    A, M = laplacian_pencil(20)
    a = smallest_eigenpairs(A, M, 5).eigenvalues
    b = smallest_eigenpairs(A, M, 6).eigenvalues
    assert_allclose(b[:5], a, rtol=1e-10)


def test_k_then_k_plus_one_weighted(disc_setup):
    A, M = weighted_pencil(disc_setup, 1e-2)
    a = smallest_eigenpairs(A, M, 4).eigenvalues
    b = smallest_eigenpairs(A, M, 5).eigenvalues
    assert_allclose(b[:4], a, rtol=1e-10)


def test_disc_lower_bound_across_epsilon(disc_setup):
    ref = None
    for eps in (1e-2, 1e-4, 1e-6, 1e-8):
        A, M = weighted_pencil(disc_setup, eps)
        res = smallest_eigenpairs(A, M, 3)
        # the residual target is raised to the rounding floor of the high-contrast operator
        check_result(A, M, res, tol=1e-6)
        ref = ref or res.eigenvalues[0]
        assert res.eigenvalues[0] > 0.1 * ref


def test_residuals_at_moderate_contrast(disc_setup):
    A, M = weighted_pencil(disc_setup, 1e-3)
    check_result(A, M, smallest_eigenpairs(A, M, 5))


def test_errors():
    A, M = laplacian_pencil(4)
    with pytest.raises(ValueError):
        smallest_eigenpairs(A, M, A.shape[0] + 1)
    with pytest.raises(ValueError):
        smallest_eigenpairs(A, M[:-1, :-1], 1)
    empty = smallest_eigenpairs(A, M, 0)
    assert len(empty) == 0
    assert empty.eigenvectors.shape == (A.shape[0], 0)


def test_full_spectrum_small_problem():
    A, M = laplacian_pencil(4)
    n = A.shape[0]
    res = smallest_eigenpairs(A, M, n)
    assert_allclose(res.eigenvalues, dense_generalized_eig(A.toarray(), M.toarray())[0], rtol=1e-8)


def test_convergence_error_carries_residuals():
    n = 2000
    A = sp.diags(np.linspace(1.0, 1.001, n)).tocsr()
    with pytest.raises(ConvergenceError) as info:
        smallest_eigenpairs(A, sp.identity(n, format="csr"), 10, max_restarts=0)
    r = info.value.residuals
    assert r.shape == (10,)
    assert np.all(np.isfinite(r)) and r.max() > 1e-8


def test_seed_independence():
    A, M = laplacian_pencil(12)
    a = smallest_eigenpairs(A, M, 4, seed=1)
    b = smallest_eigenpairs(A, M, 4, seed=2)
    assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10)
    # the first pair is simple, so the sign convention pins the vector
    assert_allclose(a.eigenvectors[:, 0], b.eigenvectors[:, 0], atol=1e-8)
