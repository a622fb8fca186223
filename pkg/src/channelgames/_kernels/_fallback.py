"""Pure-numpy implementations of the hot linear-algebra kernels.

Same contract as the compiled backend in ``_core.pyx``; used when the
extension is unavailable or when ``CHANNELGAMES_BACKEND=python`` is set.
"""

import numpy as np

BACKEND = "python"


def logdet_pd(a):
    """Log-determinant of a symmetric positive-definite matrix via Cholesky.

    Raises numpy.linalg.LinAlgError if the matrix is not positive definite.
    """
    chol = np.linalg.cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def inv_pd(a):
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    chol = np.linalg.cholesky(a)
    ident = np.eye(a.shape[0])
    half = np.linalg.solve(chol, ident)
    inv = half.T @ half
    return 0.5 * (inv + inv.T)


def eigh_sym(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    return np.linalg.eigh(a)


def eigvals_sym(a):
    """Eigenvalues only, ascending."""
    return np.linalg.eigvalsh(a)


def trace_shift(eigvals, budget, tol=1e-12, max_iter=200):
    """Common shift s >= 0 so that sum(max(eigvals - s, 0)) == budget.

    Returns 0.0 when the clamped sum already fits inside the budget. The
    clamped sum is piecewise linear and strictly decreasing until it hits
    zero, so bisection on [0, max(eigvals)] converges unconditionally.
    """
    vals = np.asarray(eigvals, dtype=np.float64)
    if float(np.maximum(vals, 0.0).sum()) <= budget:
        return 0.0
    lo = 0.0
    hi = float(vals.max())
    scale = max(1.0, abs(budget))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        clamped = float(np.maximum(vals - mid, 0.0).sum())
        if abs(clamped - budget) <= tol * scale:
            return mid
        if clamped > budget:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
