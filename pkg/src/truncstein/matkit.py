"""Small dense linear-algebra kit used by the estimator and asymptotics code.

Convention used repo-wide: ``vec`` stacks matrix COLUMNS (column-major).
This is forced by the commutation-matrix identity
``K_{p,q} @ vec(A) == vec(A.T)`` on which the symmetrised Jacobian blocks
rely, and it must not be mixed with C-order raveling.
"""

import numpy as np

from .errors import SingularSystemError

# Reciprocal condition estimate below this is treated as singular; separates
# genuine rank deficiency from round-off on the small systems we solve.
RCOND_SINGULAR = 1e-12


def vec(m):
    """Column-stack a matrix into a vector (column-major order)."""
    return np.asarray(m, dtype=float).reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec` for a ``rows x cols`` matrix."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape {v.size} entries to {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def kron(a, b):
    """Standard Kronecker product."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def commutation_matrix(p, q):
    """Permutation matrix K with ``K @ vec(A) == vec(A.T)`` for p x q ``A``.

    Entry layout: vec(A) puts A[i, j] at position i + j*p, vec(A.T) puts it
    at j + i*q.
    """
    if p < 1 or q < 1:
        raise ValueError("commutation_matrix requires p, q >= 1")
    k = np.zeros((p * q, p * q))
    i, j = np.meshgrid(np.arange(p), np.arange(q), indexing="ij")
    rows = (j + i * q).ravel()
    cols = (i + j * p).ravel()
    k[rows, cols] = 1.0
    return k


def symmetrize(a):
    """Return (A + A.T)/2; the result is exactly symmetric.

    Entrywise the output is 0.5*(a_ij + a_ji) computed in both slots with the
    same floating-point addition, so no symmetry tolerance is ever needed
    downstream.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("symmetrize expects a square matrix")
    return 0.5 * (a + a.T)


def is_positive_definite(a, tol=None):
    """Cholesky-based positive definiteness test.

    True iff the factorisation succeeds and every pivot (squared diagonal of
    the factor) exceeds ``tol``. Returns False for matrices asymmetric beyond
    ``tol`` rather than raising. Default tol: 1e-12 * max diagonal entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if not np.all(np.isfinite(a)):
        return False
    if tol is None:
        tol = 1e-12 * max(float(np.max(np.diag(a))), 0.0)
    if np.max(np.abs(a - a.T)) > max(tol, 0.0):
        return False
    try:
        chol = np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(np.diag(chol) ** 2 > tol))


def reciprocal_condition(a):
    """Reciprocal 2-norm condition estimate (exact SVD; matrices here are tiny)."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        return 0.0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def solve_linear(a, b):
    """Solve A @ X = B; returns ``(X, rcond)``.

    Raises :class:`SingularSystemError` when the reciprocal condition
    estimate falls below ``RCOND_SINGULAR``; upstream estimators convert that
    into ineligibility rather than aborting. One step of iterative refinement
    keeps the relative residual at or below 1e-10 for condition numbers up to
    around 1e8.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rcond = reciprocal_condition(a)
    if not np.isfinite(rcond) or rcond < RCOND_SINGULAR:
        raise SingularSystemError(
            f"matrix is numerically singular (rcond={rcond:.3e})", rcond=rcond
        )
    x = np.linalg.solve(a, b)
    x = x + np.linalg.solve(a, b - a @ x)
    return x, rcond
