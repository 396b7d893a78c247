"""P1 assembly of the medium-weighted bilinear form and the boundary lifting.

The weight is ``mu_eps[u](x) = mu_hat(|grad u(x)|)`` with either

* ``q_power``: ``mu_hat(t) = 1 / (t**q + eps**q)**(1/q)``
* ``max``:     ``mu_hat(t) = 1 / max(t, eps)``

For a P1 function the gradient is constant per element, so the weight is a
single number per triangle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .media import FeFunction
from .mesh import Mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightSpec:
    epsilon: float
    form: str = "q_power"
    q: float = 2.0

    def __post_init__(self):
        if self.form not in ("q_power", "max"):
            raise ValueError(f"weight form must be 'q_power' or 'max', got {self.form!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.q >= 1:
            raise ValueError("q must be >= 1")

    def with_epsilon(self, epsilon: float) -> "WeightSpec":
        return WeightSpec(epsilon, self.form, self.q)


def weight_on_element(grad_norm, spec: WeightSpec):
    """``mu_hat_eps(grad_norm)``; works elementwise on arrays."""
    t = np.asarray(grad_norm, dtype=float)
    if np.any(t < 0):
        raise ValueError("gradient norms must be nonnegative")
    eps = spec.epsilon
    if spec.form == "max":
        out = 1.0 / np.maximum(t, eps)
    else:
        q = spec.q
        # factor out the larger of (t, eps) so t**q cannot overflow
        s = np.maximum(t, eps)
        out = 1.0 / (s * ((t / s) ** q + (eps / s) ** q) ** (1.0 / q))
    return float(out) if out.ndim == 0 else out


def element_weights(u_delta: FeFunction, spec: WeightSpec) -> np.ndarray:
    g = u_delta.element_gradients()
    return weight_on_element(np.hypot(g[:, 0], g[:, 1]), spec)


def _assemble(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Sum per-element ``(n_t, 3, 3)`` blocks into a CSR matrix."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def stiffness_from_weights(mesh: Mesh, weights: np.ndarray) -> sp.csr_matrix:
    G = mesh.basis_gradients
    local = np.einsum("tad,tbd->tab", G, G) * (weights * mesh.areas)[:, None, None]
    return _assemble(mesh, local)


def assemble_stiffness(mesh: Mesh, u_delta: FeFunction, spec: WeightSpec) -> sp.csr_matrix:
    """Matrix of ``B[w, v] = <mu_eps[u_delta] grad w, grad v>`` over all hat functions."""
    if not mesh.same_as(u_delta.mesh):
        raise ValueError("u_delta lives on a different mesh")
    return stiffness_from_weights(mesh, element_weights(u_delta, spec))


_P1_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    local = mesh.areas[:, None, None] * _P1_MASS[None]
    return _assemble(mesh, local)


def lumped_mass(mesh: Mesh) -> np.ndarray:
    return np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()


@dataclass(frozen=True, eq=False)
class DirichletReduction:
    interior: np.ndarray
    boundary: np.ndarray
    n_full: int

    def expand(self, reduced: np.ndarray, boundary_values=0.0) -> np.ndarray:
        """Full-length vector(s) from interior values (rows) plus boundary data."""
        reduced = np.asarray(reduced, dtype=float)
        shape = (self.n_full,) + reduced.shape[1:]
        out = np.zeros(shape)
        out[self.interior] = reduced
        out[self.boundary] = boundary_values
        return out

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.interior]


def dirichlet_reduction(mesh: Mesh) -> DirichletReduction:
    if mesh.interior_indices.size == 0:
        raise ValueError("mesh has no interior vertices")
    return DirichletReduction(mesh.interior_indices, mesh.boundary_indices, mesh.n_vertices)


def reduce_dirichlet(mat: sp.spmatrix, mesh: Mesh) -> tuple[sp.csr_matrix, DirichletReduction]:
    """Interior-interior block of ``mat``."""
    if mat.shape != (mesh.n_vertices, mesh.n_vertices):
        raise ValueError(f"matrix shape {mat.shape} does not match {mesh.n_vertices} vertices")
    red = dirichlet_reduction(mesh)
    A = sp.csr_matrix(mat)[red.interior][:, red.interior]
    return A.tocsr(), red


class SpdFactor:
    """Sparse direct solver for an SPD matrix.

    SuperLU with a symmetric minimum-degree ordering on ``A + A^T`` and no
    pivoting is, for SPD input, an LDL^T-type factorization with a fill
    reducing ordering. One step of iterative refinement is applied when the
    relative residual exceeds ``refine_tol``.
    """

    def __init__(self, A: sp.spmatrix, refine_tol: float = 1e-10):
        self.A = sp.csc_matrix(A)
        self.refine_tol = refine_tol
        if self.A.shape[0] == 0:
            raise ValueError("empty matrix")
        try:
            self._lu = splu(
                self.A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise np.linalg.LinAlgError(f"factorization failed: {exc}") from exc
        d = self._lu.U.diagonal()
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise np.linalg.LinAlgError("matrix is not positive definite")

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        r = b - self.A @ x
        bnorm = np.linalg.norm(b)
        if bnorm > 0 and np.linalg.norm(r) > self.refine_tol * bnorm:
            x = x + self._lu.solve(r)
        return x


def solve_lifting(
    A: sp.spmatrix,
    mesh: Mesh,
    boundary_values,
    factor: SpdFactor | None = None,
) -> FeFunction:
    """Weighted-harmonic extension of boundary data: ``A_II x_I = -A_IB g_B``.

    ``boundary_values`` is either one value per boundary vertex (in
    ``mesh.boundary_indices`` order) or an ``FeFunction`` whose boundary
    trace is used.
    """
    red = dirichlet_reduction(mesh)
    if isinstance(boundary_values, FeFunction):
        g = boundary_values.boundary_values()
    else:
        g = np.broadcast_to(np.asarray(boundary_values, dtype=float), red.boundary.shape)
    A = sp.csr_matrix(A)
    if A.shape != (mesh.n_vertices, mesh.n_vertices):
        raise ValueError("stiffness matrix does not match the mesh")
    A_ib = A[red.interior][:, red.boundary]
    rhs = -(A_ib @ g)
    if factor is None:
        factor = SpdFactor(A[red.interior][:, red.interior])
    x = factor.solve(rhs)
    A_ii = factor.A
    res = np.linalg.norm(A_ii @ x - rhs)
    scale = np.linalg.norm(rhs)
    if scale > 0 and res > 1e-10 * scale:
        log.warning("lifting residual %.3e exceeds 1e-10 relative", res / scale)
    return FeFunction(mesh, red.expand(x, g))
