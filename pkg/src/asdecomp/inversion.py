"""Gaussian deconvolution and its reconstruction by AS subspace iteration.

The forward operator is discretised by nodal collocation,
``(F u)_i = sum_j g(x_i - x_j) u_j w_j`` with lumped-mass weights ``w``.
All norms are L2 norms of P1 functions, evaluated with the consistent mass
matrix.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .fem import WeightSpec, assemble_mass, lumped_mass
from .media import FeFunction
from .mesh import Mesh
from .spectral import build_as_basis

log = logging.getLogger(__name__)

MAX_DENSE_VERTICES = 20_000


class CapacityError(MemoryError):
    pass


def gaussian_kernel(r2: np.ndarray, gamma: float) -> np.ndarray:
    """``g`` as a function of the squared distance ``|x|^2``."""
    return np.exp(-np.asarray(r2) / (2.0 * gamma**2)) / (2.0 * np.pi * gamma**2)


@dataclass(frozen=True, eq=False)
class ConvolutionOperator:
    mesh: Mesh
    gamma: float
    kernel: np.ndarray = field(repr=False)  # (n, n) symmetric g(x_i - x_j)
    weights: np.ndarray = field(repr=False)  # lumped mass weights

    @property
    def matrix(self) -> np.ndarray:
        """The discrete operator ``F_h = kernel @ diag(weights)``."""
        return self.kernel * self.weights[None, :]

    def apply(self, u) -> np.ndarray:
        c = u.coefficients if isinstance(u, FeFunction) else np.asarray(u, dtype=float)
        w = self.weights if c.ndim == 1 else self.weights[:, None]
        return self.kernel @ (w * c)

    def __call__(self, u: FeFunction) -> FeFunction:
        return FeFunction(self.mesh, self.apply(u))


def _check_capacity(n: int) -> None:
    if n > MAX_DENSE_VERTICES:
        raise CapacityError(f"dense operator limited to {MAX_DENSE_VERTICES} vertices, mesh has {n}")


def build_convolution(mesh: Mesh, gamma: float) -> ConvolutionOperator:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _check_capacity(mesh.n_vertices)
    K = gaussian_kernel(cdist(mesh.vertices, mesh.vertices, "sqeuclidean"), gamma)
    K.setflags(write=False)
    w = lumped_mass(mesh)
    w.setflags(write=False)
    return ConvolutionOperator(mesh, float(gamma), K, w)


def _l2(c: np.ndarray, M: sp.spmatrix) -> float:
    return float(np.sqrt(max(c @ (M @ c), 0.0)))


def add_noise(y: FeFunction, rho: float, seed: int | None = 0) -> tuple[FeFunction, float]:
    """Seeded Gaussian noise scaled to relative L2 size exactly ``rho``.

    Returns the noisy data and ``eta = ||y - y_noisy||``.
    """
    if rho < 0:
        raise ValueError("noise level must be nonnegative")
    if rho == 0:
        return y, 0.0
    M = assemble_mass(y.mesh)
    noise = np.random.default_rng(seed).standard_normal(y.mesh.n_vertices)
    eta = rho * _l2(y.coefficients, M)
    noise *= eta / _l2(noise, M)
    return FeFunction(y.mesh, y.coefficients + noise), eta


@dataclass(frozen=True, eq=False)
class InversionReport:
    method: str
    reconstruction: FeFunction = field(repr=False)
    e_r: float
    tau: float
    iterations: int
    converged: bool = True
    misfits: tuple = ()

    def row(self) -> tuple:
        return (self.method, self.e_r, self.tau, self.iterations)


def _report(method, u, op, y, eta, u_true, iterations, converged=True, misfits=()) -> InversionReport:
    M = assemble_mass(op.mesh)
    misfit = _l2(op.apply(u) - y.coefficients, M)
    if np.isnan(eta):
        tau = float("nan")
    elif eta > 0:
        tau = misfit / eta
    else:
        tau = 0.0 if misfit == 0 else float("inf")
    if u_true is None:
        e_r = float("nan")
    else:
        e_r = _l2(u - u_true.coefficients, M) / _l2(u_true.coefficients, M)
    return InversionReport(method, FeFunction(op.mesh, u), e_r, tau, iterations, converged, tuple(misfits))


def asi_solve(
    op: ConvolutionOperator,
    y_noisy: FeFunction,
    eta: float,
    boundary_data: FeFunction | np.ndarray,
    spec: WeightSpec,
    K: int,
    tau_max: float = 1.1,
    iter_max: int = 20,
    *,
    u_true: FeFunction | None = None,
) -> InversionReport:
    """Adaptive spectral iteration.

    Starting from ``u = y_noisy``, each step builds the AS basis of the
    current estimate (lifting with the given boundary data) and minimises
    ``||F u - y_noisy||`` over ``phi0 + span{phi_1..phi_K}``. Stops once the
    misfit is at most ``tau_max * eta``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not eta > 0:
        raise ValueError("eta must be positive")
    if tau_max < 1:
        raise ValueError("tau_max must be >= 1")
    mesh = op.mesh
    M = assemble_mass(mesh)
    R = np.linalg.cholesky(M.toarray()).T  # ||v||_M = |R v|
    y = y_noisy.coefficients
    u = y.copy()
    misfits = []
    converged = False
    it = 0
    for it in range(1, iter_max + 1):
        basis = build_as_basis(FeFunction(mesh, u), spec, K, boundary_values=boundary_data)
        phi0 = basis.phi0.coefficients
        C = R @ op.apply(basis.phis)
        r0 = R @ (y - op.apply(phi0))
        beta = sla.lstsq(C, r0)[0]
        u = phi0 + basis.phis @ beta
        misfits.append(_l2(op.apply(u) - y, M))
        log.info("ASI iteration %d: misfit / eta = %.4f", it, misfits[-1] / eta)
        if misfits[-1] <= tau_max * eta:
            converged = True
            break
    return _report("ASI", u, op, y_noisy, eta, u_true, it, converged, misfits)


def tsvd_solve(
    op: ConvolutionOperator,
    y_noisy: FeFunction,
    eta: float,
    *,
    threshold: float | None = None,
    u_true: FeFunction | None = None,
) -> InversionReport:
    """Pseudo-inverse of ``F_h`` with singular values below ``sqrt(eta)`` dropped."""
    if not eta > 0 and threshold is None:
        raise ValueError("eta must be positive")
    _check_capacity(op.mesh.n_vertices)
    cut = np.sqrt(eta) if threshold is None else threshold
    U, s, Vt = np.linalg.svd(op.matrix)
    keep = s >= cut
    coef = (U[:, keep].T @ y_noisy.coefficients) / s[keep]
    u = Vt[keep].T @ coef
    return _report("TSVD", u, op, y_noisy, eta, u_true, 1)


def direct_solve(
    op: ConvolutionOperator,
    y_noisy: FeFunction,
    eta: float | None = None,
    *,
    u_true: FeFunction | None = None,
) -> InversionReport:
    """Plain LU solve of ``F_h u = y``."""
    _check_capacity(op.mesh.n_vertices)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(op.matrix, check_finite=True)
    if np.any(np.diag(lu) == 0):
        raise np.linalg.LinAlgError("convolution matrix is exactly singular")
    u = sla.lu_solve((lu, piv), y_noisy.coefficients)
    return _report("LU", u, op, y_noisy, eta if eta else float("nan"), u_true, 1)
