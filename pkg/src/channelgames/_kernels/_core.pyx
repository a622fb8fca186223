# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled linear-algebra kernels.

Thin wrappers over LAPACK (through scipy's cython_lapack bindings) for the
small symmetric matrices this package factorizes millions of times inside
projected-gradient loops: Cholesky log-determinant, positive-definite
inverse, symmetric eigendecomposition and the clamped-eigenvalue trace
shift used by the feasible-set projection.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log
from scipy.linalg.cython_lapack cimport dpotrf, dpotri, dsyev

cnp.import_array()

BACKEND = "compiled"


cdef inline cnp.ndarray _fortran_copy(object a):
    arr = np.array(a, dtype=np.float64, order="F", copy=True)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("expected a square matrix")
    return arr


def logdet_pd(a):
    """Log-determinant of a symmetric positive-definite matrix via Cholesky."""
    cdef cnp.ndarray buf = _fortran_copy(a)
    cdef double[::1, :] m = buf
    cdef int n = m.shape[0]
    cdef int info = 0
    cdef char uplo = b'L'
    dpotrf(&uplo, &n, &m[0, 0], &n, &info)
    if info != 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    cdef double acc = 0.0
    cdef int i
    for i in range(n):
        acc += log(m[i, i])
    return 2.0 * acc


def inv_pd(a):
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    cdef cnp.ndarray buf = _fortran_copy(a)
    cdef double[::1, :] m = buf
    cdef int n = m.shape[0]
    cdef int info = 0
    cdef char uplo = b'L'
    dpotrf(&uplo, &n, &m[0, 0], &n, &info)
    if info != 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    dpotri(&uplo, &n, &m[0, 0], &n, &info)
    if info != 0:
        raise np.linalg.LinAlgError("inversion from Cholesky factor failed")
    # dpotri fills one triangle only; mirror it.
    cdef int i, j
    for j in range(n):
        for i in range(j + 1, n):
            m[j, i] = m[i, j]
    return buf


cdef _syev(object a, char jobz):
    cdef cnp.ndarray buf = _fortran_copy(a)
    cdef double[::1, :] m = buf
    cdef int n = m.shape[0]
    cdef int info = 0
    cdef int lwork = -1
    cdef char uplo = b'L'
    cdef double wkopt = 0.0
    cdef cnp.ndarray w = np.empty(n, dtype=np.float64)
    cdef double[::1] wv = w
    dsyev(&jobz, &uplo, &n, &m[0, 0], &n, &wv[0], &wkopt, &lwork, &info)
    lwork = <int> wkopt
    cdef cnp.ndarray work = np.empty(lwork, dtype=np.float64)
    cdef double[::1] workv = work
    dsyev(&jobz, &uplo, &n, &m[0, 0], &n, &wv[0], &workv[0], &lwork, &info)
    if info != 0:
        raise np.linalg.LinAlgError("symmetric eigendecomposition failed")
    return w, buf


def eigh_sym(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    w, vecs = _syev(a, b'V')
    return w, vecs


def eigvals_sym(a):
    """Eigenvalues only, ascending."""
    w, _ = _syev(a, b'N')
    return w


def trace_shift(eigvals, double budget, double tol=1e-12, int max_iter=200):
    """Common shift s >= 0 with sum(max(eigvals - s, 0)) == budget.

    Zero when the clamped sum already fits; otherwise bisection on
    [0, max(eigvals)].
    """
    cdef cnp.ndarray arr = np.ascontiguousarray(eigvals, dtype=np.float64)
    cdef double[::1] v = arr
    cdef Py_ssize_t k, nv = v.shape[0]
    cdef double total = 0.0
    cdef double hi = 0.0
    for k in range(nv):
        if v[k] > 0.0:
            total += v[k]
        if v[k] > hi:
            hi = v[k]
    if total <= budget:
        return 0.0
    cdef double lo = 0.0
    cdef double scale = budget if budget > 1.0 else 1.0
    cdef double mid, clamped, d
    cdef int it
    for it in range(max_iter):
        mid = 0.5 * (lo + hi)
        clamped = 0.0
        for k in range(nv):
            d = v[k] - mid
            if d > 0.0:
                clamped += d
        if clamped - budget <= tol * scale and budget - clamped <= tol * scale:
            return mid
        if clamped > budget:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
