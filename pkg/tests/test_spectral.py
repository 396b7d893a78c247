import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from asdecomp.export import loglog_slope
from asdecomp.fem import WeightSpec, assemble_mass
from asdecomp.media import (
    DISC,
    FeFunction,
    constant_function,
    four_squares,
    interpolate_to_mesh,
    nonuniform_background,
    single_inclusion,
)
from asdecomp.mesh import build_uniform_mesh
from asdecomp.quadrature import rule_deg8_19pt
from asdecomp.spectral import (
    DegenerateBasisError,
    SpectralBasis,
    build_as_basis,
    l2_error_fe,
    l2_norm_fe,
    project_PiK,
    project_PiK_exact,
    project_QK,
)

UNIT = (0.0, 0.0, 1.0, 1.0)


@pytest.fixture(scope="module")
def disc_basis():
    mesh = build_uniform_mesh(UNIT, 32, 32)
    ud = interpolate_to_mesh(single_inclusion(DISC), mesh)
    return build_as_basis(ud, WeightSpec(1e-8), 6), ud


@pytest.fixture(scope="module")
def background_basis():
    mesh = build_uniform_mesh(UNIT, 40, 40)
    ud = interpolate_to_mesh(nonuniform_background(), mesh)
    return build_as_basis(ud, WeightSpec(1e-8), 8), ud


def random_fe(mesh, seed):
    return FeFunction(mesh, np.random.default_rng(seed).standard_normal(mesh.n_vertices))


# construction


def test_constant_medium_lifting_only():
    mesh = build_uniform_mesh(UNIT, 8, 8)
    basis = build_as_basis(constant_function(mesh, 3.0), WeightSpec(1e-8), 0)
    assert basis.K == 0
    assert_allclose(basis.phi0.coefficients, 3.0, rtol=1e-12)
    assert l2_error_fe(project_QK(basis, constant_function(mesh, 3.0)), basis.phi0) == 0.0


def test_basis_invariants(background_basis):
    basis, ud = background_basis
    mesh = basis.mesh
    b = mesh.boundary_indices
    assert np.all(basis.phis[b] == 0.0)
    assert np.array_equal(basis.phi0.coefficients[b], ud.coefficients[b])
    assert np.all(basis.eigenvalues > 0)
    assert np.all(np.diff(basis.eigenvalues) >= 0)
    assert basis.epsilon == 1e-8
    assert basis.delta == pytest.approx(mesh.h)
    M = assemble_mass(mesh)
    assert_allclose(basis.phis.T @ M @ basis.phis, np.eye(basis.K), atol=1e-10)


def test_nonuniform_background_four_pairs(background_basis):
    basis, _ = background_basis
    lam = basis.truncated(4).eigenvalues
    assert lam.size == 4
    assert np.all(lam > 0)
    assert np.all(np.diff(lam) > 0)


def test_explicit_boundary_values():
    mesh = build_uniform_mesh(UNIT, 10, 10)
    ud = interpolate_to_mesh(single_inclusion(DISC), mesh)
    g = FeFunction(mesh, mesh.vertices[:, 0])
    basis = build_as_basis(ud, WeightSpec(1e-3), 2, boundary_values=g)
    b = mesh.boundary_indices
    assert np.array_equal(basis.phi0.coefficients[b], g.coefficients[b])


def test_basis_accessors(disc_basis):
    basis, _ = disc_basis
    assert np.array_equal(basis.phi(1).coefficients, basis.phis[:, 0])
    with pytest.raises(IndexError):
        basis.phi(0)
    with pytest.raises(IndexError):
        basis.phi(basis.K + 1)
    t = basis.truncated(2)
    assert t.K == 2 and np.array_equal(t.eigenvalues, basis.eigenvalues[:2])
    with pytest.raises(ValueError):
        basis.truncated(basis.K + 1)
    with pytest.raises(ValueError):
        build_as_basis(basis.phi0, WeightSpec(1.0), -1)


def test_four_squares_pieces_in_span():
    mesh = build_uniform_mesh(UNIT, 40, 40)
    ud = interpolate_to_mesh(four_squares(), mesh)
    basis = build_as_basis(ud, WeightSpec(1e-8), 4)
    for k in range(1, 5):
        # discrete indicator of the k-th piece of the interpolant
        chi = FeFunction(mesh, (ud.coefficients == k).astype(float))
        p, _ = project_PiK(basis, chi)
        assert l2_error_fe(chi, p) <= 1e-6 * l2_norm_fe(chi)


# projections


def test_projection_of_basis_function(disc_basis):
    basis, _ = disc_basis
    p, beta = project_PiK(basis, basis.phi(1))
    assert_allclose(beta, np.eye(basis.K)[0], atol=1e-10)
    assert l2_error_fe(p, basis.phi(1)) <= 1e-10


def test_projection_of_orthogonal_function(disc_basis):
    basis, _ = disc_basis
    mesh = basis.mesh
    M = assemble_mass(mesh)
    v = random_fe(mesh, 4).coefficients.copy()
    v[mesh.boundary_indices] = 0.0
    v = v - basis.phis @ (basis.phis.T @ (M @ v))
    p, beta = project_PiK(basis, FeFunction(mesh, v))
    assert np.max(np.abs(beta)) <= 1e-10 * l2_norm_fe(FeFunction(mesh, v))
    assert l2_norm_fe(p) <= 1e-10


def test_disc_recovered_by_one_eigenfunction(disc_basis):
    basis, ud = disc_basis
    p, _ = project_PiK(basis.truncated(1), ud)
    assert l2_error_fe(ud, p) < 1e-6


def test_qk_identities(disc_basis):
    basis, _ = disc_basis
    assert l2_error_fe(project_QK(basis, basis.phi0), basis.phi0) == 0.0
    coef = np.array([0.3, -1.2, 0.0, 2.0, 0.5, -0.7])
    v = basis.phi0 + FeFunction(basis.mesh, basis.phis @ coef)
    assert l2_error_fe(project_QK(basis, v), v) <= 1e-10 * l2_norm_fe(v)


def test_qk_callable_matches_fe_for_linear_function(disc_basis):
    basis, _ = disc_basis
    mesh = basis.mesh
    # a linear function is its own interpolant, so both load paths are exact
    v = FeFunction(mesh, 0.5 - 2.0 * mesh.vertices[:, 0] + mesh.vertices[:, 1])
    from_fe = project_QK(basis, v)
    from_callable = project_QK(basis, lambda p: 0.5 - 2.0 * p[:, 0] + p[:, 1])
    assert l2_error_fe(from_fe, from_callable) <= 1e-12 * l2_norm_fe(from_fe)


def test_pik_exact_disc_close_to_fe(disc_basis):
    basis, ud = disc_basis
    u = single_inclusion(DISC)
    exact = project_PiK_exact(basis.truncated(1), u)
    fe, _ = project_PiK(basis.truncated(1), ud)
    assert l2_error_fe(exact, fe) < 0.2 * l2_norm_fe(fe)


@given(st.integers(0, 2**31))
def test_projection_properties(background_basis, seed):
    basis, _ = background_basis
    mesh, M = basis.mesh, basis.mass
    v = random_fe(mesh, seed)
    p, _ = project_PiK(basis, v)
    # residual orthogonality
    r = v.coefficients - p.coefficients
    assert np.max(np.abs(basis.phis.T @ (M @ r))) <= 1e-10 * l2_norm_fe(v, M)
    # idempotence and norm reduction
    pp, _ = project_PiK(basis, p)
    assert l2_error_fe(pp, p, M) <= 1e-10 * max(l2_norm_fe(p, M), 1e-300)
    assert l2_norm_fe(p, M) <= l2_norm_fe(v, M) * (1 + 1e-10)
    # monotone improvement in K
    errs = [l2_error_fe(v, project_PiK(basis.truncated(k), v)[0], M) for k in range(basis.K + 1)]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(errs, errs[1:]))


def test_degenerate_basis():
    mesh = build_uniform_mesh(UNIT, 6, 6)
    basis = build_as_basis(constant_function(mesh, 0.0), WeightSpec(1.0), 2)
    dup = np.column_stack([basis.phis[:, 0], basis.phis[:, 0]])
    bad = SpectralBasis(
        basis.phi0, basis.eigenvalues, dup, basis.epsilon, basis.delta, basis.weight_spec, basis.mass
    )
    with pytest.raises(DegenerateBasisError):
        project_PiK(bad, random_fe(mesh, 0))
    with pytest.raises(np.linalg.LinAlgError):
        project_QK(bad, random_fe(mesh, 0))


def test_mesh_mismatch(disc_basis):
    basis, _ = disc_basis
    other = build_uniform_mesh(UNIT, 5, 5)
    with pytest.raises(ValueError):
        project_PiK(basis, constant_function(other, 1.0))
    with pytest.raises(ValueError):
        l2_error_fe(basis.phi0, constant_function(other, 1.0))


# norms


def test_norm_examples():
    mesh = build_uniform_mesh(UNIT, 7, 7)
    one, zero = constant_function(mesh, 1.0), constant_function(mesh, 0.0)
    assert l2_error_fe(one, one) == 0.0
    assert l2_error_fe(one, zero) == pytest.approx(1.0, rel=1e-14)


@given(st.integers(0, 2**31))
def test_norm_matches_quadrature(seed):
    mesh = build_uniform_mesh((0.0, 0.0, 2.0, 1.0), 5, 4)
    v, w = random_fe(mesh, seed), random_fe(mesh, seed + 1)
    d = (v - w).coefficients[mesh.triangles]  # (T, 3)
    rule = rule_deg8_19pt()
    vals = (rule.points @ d.T) ** 2  # (Q, T)
    oracle = np.sqrt(np.sum(mesh.areas * (rule.weights @ vals)))
    assert l2_error_fe(v, w) == pytest.approx(oracle, rel=1e-12)


def test_epsilon_decay_rate():
    mesh = build_uniform_mesh(UNIT, 40, 40)
    ud = interpolate_to_mesh(single_inclusion(DISC), mesh)
    eps = np.array([1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    errs = []
    for e in eps:
        basis = build_as_basis(ud, WeightSpec(e), 1)
        errs.append(l2_error_fe(ud, project_PiK(basis, ud)[0], basis.mass))
    assert 0.85 <= loglog_slope(eps, errs) <= 1.15
