"""Sparse SPD linear algebra: CSR storage, products and Jacobi-preconditioned CG.

Storage is :class:`scipy.sparse.csr_matrix` with sorted column indices;
the conjugate gradient loop is written out here so that iteration counts,
stopping rule and failure modes are under our control and reproducible.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from fpgalerkin.errors import BreakdownError, ConvergenceError, DomainError

SparseMatrixCSR = sp.csr_matrix


def as_csr(A) -> sp.csr_matrix:
    """Convert to square CSR with sorted, duplicate-free column indices."""
    A = sp.csr_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise DomainError(f"matrix must be square, got shape {A.shape}")
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise DomainError(f"dimension mismatch: matrix {A.shape}, vector {x.shape}")
    return A @ x


def cg_solve(A, b, rtol=1e-10, maxit=None, precond="jacobi", x0=None):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Parameters
    ----------
    A : sparse matrix, shape (n, n)
    b : ndarray, shape (n,)
    rtol : float
        Stop once ``||b - A x||_2 <= rtol * ||b||_2``.
    maxit : int, optional
        Iteration cap, ``10 * n`` by default.
    precond : {"jacobi", "none"}
    x0 : ndarray, optional
        Starting guess.

    Returns
    -------
    x : ndarray
    iterations : int
    residual : float
        Achieved relative residual.

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``maxit`` iterations.
    BreakdownError
        If a search direction has non-positive curvature.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise DomainError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    if not 0 < rtol < 1:
        raise DomainError(f"rtol must lie in (0, 1), got {rtol}")
    if maxit is None:
        maxit = 10 * max(n, 1)

    if precond == "jacobi":
        d = A.diagonal()
        if np.any(d <= 0):
            raise BreakdownError("non-positive diagonal entry; matrix is not SPD")
        inv_diag = 1.0 / d
    elif precond == "none":
        inv_diag = None
    else:
        raise DomainError(f"unknown preconditioner {precond!r}")

    bnorm = np.sqrt(b @ b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    r = b - A @ x if x0 is not None else b.copy()
    rnorm = np.sqrt(r @ r)
    if rnorm <= rtol * bnorm:
        return x, 0, rnorm / bnorm

    z = r * inv_diag if inv_diag is not None else r
    p = z.copy()
    rz = r @ z
    for k in range(1, maxit + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise BreakdownError(f"non-positive curvature {curv:g} at iteration {k}",
                                 iterations=k, residual=rnorm / bnorm)
        step = rz / curv
        x += step * p
        r -= step * Ap
        rnorm = np.sqrt(r @ r)
        if rnorm <= rtol * bnorm:
            # the updated residual drifts from b - Ax; confirm before returning
            r = b - A @ x
            rnorm = np.sqrt(r @ r)
            if rnorm <= rtol * bnorm:
                return x, k, rnorm / bnorm
            z = r * inv_diag if inv_diag is not None else r
            p = z.copy()
            rz = r @ z
            continue
        z = r * inv_diag if inv_diag is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"CG did not reach rtol={rtol:g} in {maxit} iterations (residual {rnorm / bnorm:.3e})",
        iterations=maxit, residual=rnorm / bnorm)
