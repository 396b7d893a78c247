"""Smallest eigenpairs of the generalized symmetric problem ``A x = lam M x``.

The sparse path runs Lanczos on ``T = A^{-1} M`` (shift-invert at zero),
which is self-adjoint in the M-inner product. The largest eigenvalues
``theta`` of ``T`` map to the smallest ``lam = 1 / theta``. Every new
Krylov vector is fully reorthogonalised (two passes of classical
Gram-Schmidt in the M-inner product), and the basis is thick-restarted
from the best Ritz vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fem import SpdFactor

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray  # (K,) ascending
    eigenvectors: np.ndarray  # (n, K), M-orthonormal columns
    residuals: np.ndarray  # (K,) ||A x - lam M x|| / lam

    def __len__(self) -> int:
        return self.eigenvalues.size


def _fix_signs(X: np.ndarray) -> np.ndarray:
    if X.size == 0:
        return X
    idx = np.argmax(np.abs(X), axis=0)
    s = np.sign(X[idx, np.arange(X.shape[1])])
    s[s == 0] = 1.0
    return X * s


def explicit_residuals(A, M, lam: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``||A x_k - lam_k M x_k||_2 / lam_k`` from plain matrix products."""
    R = A @ X - (M @ X) * lam
    return np.linalg.norm(R, axis=0) / np.abs(lam)


def residual_floor(A, M, lam: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Rounding error expected when forming the explicit residual.

    ``eps * || |A| |x| + |lam| |M| |x| || / lam``. With weights near
    ``1/epsilon`` this floor can exceed any fixed tolerance, so it is used
    as the convergence threshold when larger.
    """
    absX = np.abs(X)
    R = abs(A) @ absX + (abs(M) @ absX) * np.abs(lam)
    return np.finfo(float).eps * np.linalg.norm(R, axis=0) / np.abs(lam)


def _rayleigh_ritz(A, M, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending Ritz pairs of ``(A, M)`` on ``span(Z)``, M-orthonormal."""
    # orthonormalise Z first so the projected pencil is well conditioned
    G = Z.T @ (M @ Z)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    Q = sla.solve_triangular(L, Z.T, lower=True).T
    H = Q.T @ (A @ Q)
    lam, C = np.linalg.eigh(0.5 * (H + H.T))
    return lam, Q @ C


def dense_generalized_eig(A, M) -> tuple[np.ndarray, np.ndarray]:
    """Full spectrum of ``A x = lam M x`` through a Cholesky factor of ``M``.

    Returns ascending eigenvalues and M-orthonormal eigenvectors (columns).
    """
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or M.shape != (n, n):
        raise ValueError("A and M must be square and of equal size")
    if n > 500:
        raise ValueError(f"dense oracle limited to n <= 500, got {n}")
    try:
        L = np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        raise ValueError("M is not symmetric positive definite") from None
    Y = sla.solve_triangular(L, 0.5 * (A + A.T), lower=True)
    C = sla.solve_triangular(L, Y.T, lower=True)
    lam, Z = np.linalg.eigh(0.5 * (C + C.T))
    X = sla.solve_triangular(L.T, Z, lower=False)
    return lam, X


def smallest_eigenpairs(
    A: sp.spmatrix,
    M: sp.spmatrix,
    K: int,
    *,
    tol: float = 1e-8,
    max_restarts: int = 50,
    factor: SpdFactor | None = None,
    seed: int = 0,
) -> EigenResult:
    """The ``K`` smallest eigenpairs of ``A x = lam M x`` for SPD ``A`` and ``M``.

    Parameters
    ----------
    A, M : sparse SPD matrices of the same size.
    K : number of eigenpairs.
    tol : target for the explicit residual ``||A x - lam M x|| / lam`` with
        ``x`` M-normalised. Where the rounding floor of that residual
        (``residual_floor``) is larger, ten times the floor is used instead.
    factor : optional existing factorization of ``A``.
    seed : seed of the random start vector.

    Raises
    ------
    ValueError
        If ``K`` exceeds the problem size.
    ConvergenceError
        If the wanted pairs have not converged after ``max_restarts``.
    """
    n = A.shape[0]
    if A.shape != (n, n) or M.shape != (n, n):
        raise ValueError("A and M must be square and of equal size")
    if K < 0 or K > n:
        raise ValueError(f"cannot compute K={K} eigenpairs of a problem of size {n}")
    A = sp.csr_matrix(A)
    M = sp.csr_matrix(M)
    if K == 0:
        return EigenResult(np.zeros(0), np.zeros((n, 0)), np.zeros(0))

    factor = factor or SpdFactor(A)
    rng = np.random.default_rng(seed)
    m = min(n, max(2 * K + 20, 40))
    keep = min(m - 1, K + max(4, (m - K) // 2))
    V = np.zeros((n, m + 1))
    W = np.zeros((n, m))  # W[:, j] = T V[:, j]
    MV = np.zeros((n, m + 1))

    def m_orthonormalize(w, basis, mbasis, j):
        for _ in range(2):
            if j:
                w = w - basis[:, :j] @ (mbasis[:, :j].T @ w)
        mw = M @ w
        return w, mw, np.sqrt(max(float(w @ mw), 0.0))

    def fresh_vector(j):
        for _ in range(10):
            w, mw, nrm = m_orthonormalize(rng.standard_normal(n), V, MV, j)
            if nrm > 0:
                return w / nrm, mw / nrm
        raise ConvergenceError("could not extend the Krylov basis", np.full(K, np.inf))

    V[:, 0], MV[:, 0] = fresh_vector(0)
    j = 0  # number of basis vectors whose image under T is known
    best = np.full(K, np.inf)
    for restart in range(max_restarts + 1):
        while j < m:
            w = factor.solve(MV[:, j])
            W[:, j] = w
            w, mw, nrm = m_orthonormalize(w, V, MV, j + 1)
            wnorm = np.sqrt(max(float(W[:, j] @ (M @ W[:, j])), 0.0))
            if j + 1 < n and nrm > 1e-10 * max(wnorm, 1e-300):
                V[:, j + 1], MV[:, j + 1] = w / nrm, mw / nrm
            elif j + 1 < n:
                # invariant subspace found; continue with a random direction
                V[:, j + 1], MV[:, j + 1] = fresh_vector(j + 1)
            j += 1

        H = MV[:, :j].T @ W[:, :j]
        H = 0.5 * (H + H.T)
        theta, Y = np.linalg.eigh(H)
        order = np.argsort(theta)[::-1]
        theta, Y = theta[order], Y[:, order]

        # purify: one inverse-iteration step (W Y = T V Y is already known)
        # removes rounding-level pollution along the huge eigenvalues of A,
        # then Rayleigh-Ritz on the original pencil
        lam, X = _rayleigh_ritz(A, M, W[:, :j] @ Y[:, :K])
        res = explicit_residuals(A, M, lam, X)
        floor = residual_floor(A, M, lam, X)
        best = np.minimum(best, res)
        log.debug("restart %d: residuals %s (floor %s)", restart, res, floor)
        if np.all(res <= np.maximum(tol, 10.0 * floor)) or j >= n:
            return EigenResult(lam, _fix_signs(X), explicit_residuals(A, M, lam, _fix_signs(X)))

        if restart == max_restarts:
            break
        # thick restart: keep the best Ritz vectors plus the continuation vector
        Yk = Y[:, :keep]
        cont = V[:, j].copy()
        mcont = MV[:, j].copy()
        V[:, :keep] = V[:, :j] @ Yk
        MV[:, :keep] = MV[:, :j] @ Yk
        W[:, :keep] = W[:, :j] @ Yk
        V[:, keep], MV[:, keep] = cont, mcont
        j = keep

    raise ConvergenceError(
        f"{K} eigenpairs not converged after {max_restarts} restarts", best
    )
