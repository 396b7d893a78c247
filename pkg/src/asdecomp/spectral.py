"""Adaptive spectral (AS) decomposition of a medium and its projections.

The basis consists of the lifting ``phi0`` (weighted-harmonic extension of
the boundary values of ``u_delta``) and the first ``K`` Dirichlet
eigenfunctions of the weighted operator. ``Pi_K`` is the L2-orthogonal
projection onto the span of the eigenfunctions and ``Q_K`` the affine
projection ``Q_K(v) = phi0 + Pi_K(v - phi0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .eigen import smallest_eigenpairs
from .fem import SpdFactor, WeightSpec, assemble_mass, assemble_stiffness, reduce_dirichlet, solve_lifting
from .media import FeFunction
from .quadrature import load_vector

GRAM_COND_LIMIT = 1e12


class DegenerateBasisError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    phi0: FeFunction
    eigenvalues: np.ndarray  # (K,)
    phis: np.ndarray = field(repr=False)  # (n_vertices, K), zero on the boundary
    epsilon: float
    delta: float
    weight_spec: WeightSpec
    mass: sp.csr_matrix = field(repr=False)
    residuals: np.ndarray = field(repr=False, default=None)

    @property
    def mesh(self):
        return self.phi0.mesh

    @property
    def K(self) -> int:
        return self.phis.shape[1]

    def phi(self, k: int) -> FeFunction:
        """Eigenfunction ``k`` (1-based, matching ``lam_1 <= lam_2 <= ...``)."""
        if not 1 <= k <= self.K:
            raise IndexError(f"eigenfunction index {k} out of range 1..{self.K}")
        return FeFunction(self.mesh, self.phis[:, k - 1])

    def truncated(self, K: int) -> "SpectralBasis":
        """The same basis restricted to its first ``K`` eigenfunctions."""
        if not 0 <= K <= self.K:
            raise ValueError(f"cannot truncate a basis of size {self.K} to {K}")
        res = None if self.residuals is None else self.residuals[:K]
        return SpectralBasis(
            self.phi0, self.eigenvalues[:K], self.phis[:, :K], self.epsilon,
            self.delta, self.weight_spec, self.mass, res,
        )


def build_as_basis(
    u_delta: FeFunction,
    spec: WeightSpec,
    K: int,
    boundary_values: FeFunction | np.ndarray | None = None,
    *,
    eig_tol: float = 1e-8,
) -> SpectralBasis:
    """Lifting and the ``K`` smallest eigenpairs of the operator weighted by ``u_delta``.

    The weight is built from ``u_delta``; the lifting takes the boundary
    values of ``boundary_values`` when given, else those of ``u_delta``.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    mesh = u_delta.mesh
    A = assemble_stiffness(mesh, u_delta, spec)
    M = assemble_mass(mesh)
    A_ii, red = reduce_dirichlet(A, mesh)
    factor = SpdFactor(A_ii)
    g = u_delta if boundary_values is None else boundary_values
    phi0 = solve_lifting(A, mesh, g, factor=factor)
    if K > 0:
        M_ii = M[red.interior][:, red.interior].tocsr()
        eig = smallest_eigenpairs(A_ii, M_ii, K, tol=eig_tol, factor=factor)
        lam, phis, res = eig.eigenvalues, red.expand(eig.eigenvectors), eig.residuals
    else:
        lam, phis, res = np.zeros(0), np.zeros((mesh.n_vertices, 0)), np.zeros(0)
    phis.setflags(write=False)
    return SpectralBasis(phi0, lam, phis, spec.epsilon, mesh.h, spec, M, res)


def _solve_gram(basis: SpectralBasis, rhs: np.ndarray) -> np.ndarray:
    Phi = basis.phis
    G = Phi.T @ (basis.mass @ Phi)
    G = 0.5 * (G + G.T)
    w = np.linalg.eigvalsh(G)
    if w[0] <= 0 or w[-1] / w[0] > GRAM_COND_LIMIT:
        raise DegenerateBasisError(f"Gram matrix is numerically singular (eigenvalues {w[0]:.3e}..{w[-1]:.3e})")
    return sla.cho_solve(sla.cho_factor(G), rhs)


def _check_mesh(basis: SpectralBasis, v: FeFunction) -> None:
    if not basis.mesh.same_as(v.mesh):
        raise ValueError("function lives on a different mesh than the basis")


def _project_loads(basis: SpectralBasis, loads: np.ndarray) -> tuple[FeFunction, np.ndarray]:
    """Projection whose right-hand side ``<v, phi_k>`` is already known."""
    if basis.K == 0:
        return FeFunction(basis.mesh, np.zeros(basis.mesh.n_vertices)), np.zeros(0)
    beta = _solve_gram(basis, loads)
    return FeFunction(basis.mesh, basis.phis @ beta), beta


def project_PiK(basis: SpectralBasis, v: FeFunction) -> tuple[FeFunction, np.ndarray]:
    """L2-orthogonal projection of ``v`` onto ``span{phi_1..phi_K}`` and its coefficients."""
    _check_mesh(basis, v)
    return _project_loads(basis, basis.phis.T @ (basis.mass @ v.coefficients))


def project_QK(basis: SpectralBasis, v: FeFunction | Callable) -> FeFunction:
    """``phi0 + Pi_K(v - phi0)``.

    ``v`` is either an FE function on the basis mesh or a pointwise
    evaluable medium, whose inner products with the basis are integrated
    with the 19-point rule.
    """
    phi0 = basis.phi0
    if isinstance(v, FeFunction):
        _check_mesh(basis, v)
        return phi0 + project_PiK(basis, v - phi0)[0]
    loads = basis.phis.T @ (load_vector(v, basis.mesh) - basis.mass @ phi0.coefficients)
    return phi0 + _project_loads(basis, loads)[0]


def project_PiK_exact(basis: SpectralBasis, u: Callable) -> FeFunction:
    """``Pi_K u`` for a pointwise-evaluable ``u`` (loads by quadrature)."""
    return _project_loads(basis, basis.phis.T @ load_vector(u, basis.mesh))[0]


def l2_norm_fe(v: FeFunction, mass: sp.spmatrix | None = None) -> float:
    M = assemble_mass(v.mesh) if mass is None else mass
    c = v.coefficients
    return float(np.sqrt(max(c @ (M @ c), 0.0)))


def l2_error_fe(v: FeFunction, w: FeFunction, mass: sp.spmatrix | None = None) -> float:
    if not v.mesh.same_as(w.mesh):
        raise ValueError("FE functions live on different meshes")
    return l2_norm_fe(v - w, mass)
