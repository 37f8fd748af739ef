# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: cyclic Jacobi eigensolver on real symmetric matrices
and the golden-section dual search built on it.

The Python fallback in ``_pykernels`` implements the same functions with the
same algorithms; ``dicert._backend`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

cnp.import_array()

DEF MAX_SWEEPS = 60


cdef int _jacobi(double* a, double* v, int n, bint vectors) noexcept nogil:
    """Diagonalise the symmetric n x n row-major matrix ``a`` in place.

    On return the diagonal of ``a`` holds the (unsorted) eigenvalues and, when
    ``vectors`` is set, the columns of ``v`` the eigenvectors.  Returns the
    number of sweeps used (MAX_SWEEPS + 1 signals non-convergence).
    """
    cdef int i, j, k, p, q, sweep
    cdef double off, fro, apq, theta, t, c, s, akp, akq, tol2
    if vectors:
        for i in range(n):
            for j in range(n):
                v[i * n + j] = 1.0 if i == j else 0.0
    fro = 0.0
    for i in range(n * n):
        fro += a[i] * a[i]
    tol2 = 1e-32 * fro
    for sweep in range(MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p * n + q] * a[p * n + q]
        if 2.0 * off <= tol2 or off == 0.0:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p * n + q]
                if apq == 0.0:
                    continue
                theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k * n + p]
                    akq = a[k * n + q]
                    a[k * n + p] = c * akp - s * akq
                    a[k * n + q] = s * akp + c * akq
                for k in range(n):
                    akp = a[p * n + k]
                    akq = a[q * n + k]
                    a[p * n + k] = c * akp - s * akq
                    a[q * n + k] = s * akp + c * akq
                a[p * n + q] = 0.0
                a[q * n + p] = 0.0
                if vectors:
                    for k in range(n):
                        akp = v[k * n + p]
                        akq = v[k * n + q]
                        v[k * n + p] = c * akp - s * akq
                        v[k * n + q] = s * akp + c * akq
    return MAX_SWEEPS + 1


cdef double _lambda_min(double* work, int n) noexcept nogil:
    cdef int i
    cdef double m
    _jacobi(work, NULL, n, False)
    m = work[0]
    for i in range(1, n):
        if work[i * n + i] < m:
            m = work[i * n + i]
    return m


cdef double _pencil_min(const double* M, const double* B, double mu,
                        double* work, int n) noexcept nogil:
    cdef int i
    for i in range(n * n):
        work[i] = M[i] - mu * B[i]
    return _lambda_min(work, n)


def eigh_sym(a):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Returns ``(w, v, sweeps)`` with ``w`` ascending and ``v`` column
    eigenvectors.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] work = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef int n = work.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] vec = np.empty((n, n), dtype=np.float64)
    cdef int sweeps
    with nogil:
        sweeps = _jacobi(&work[0, 0], &vec[0, 0], n, True)
    w = np.diagonal(work).copy()
    order = np.argsort(w, kind="stable")
    return w[order], vec[:, order], sweeps


def eigvalsh_sym(a):
    """Ascending eigenvalues of a real symmetric matrix (Jacobi, no vectors)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] work = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef int n = work.shape[0]
    with nogil:
        _jacobi(&work[0, 0], NULL, n, False)
    return np.sort(np.diagonal(work).copy())


def lambda_min_batch(mats):
    """Smallest eigenvalue of each matrix in a ``(m, n, n)`` symmetric stack."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] A = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t m = A.shape[0], i
    cdef int n = A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m, dtype=np.float64)
    cdef double* work = <double*> malloc(n * n * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(m):
                memcpy(work, &A[i, 0, 0], n * n * sizeof(double))
                out[i] = _lambda_min(work, n)
    finally:
        free(work)
    return out


def pencil_lambda_min(Ms, Bs, mus):
    """``out[i, k] = lambda_min(Ms[i] - mus[k] * Bs[i])`` for symmetric stacks."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] M = np.ascontiguousarray(Ms, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3, mode="c"] B = np.ascontiguousarray(Bs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mu = np.ascontiguousarray(mus, dtype=np.float64)
    cdef Py_ssize_t m = M.shape[0], K = mu.shape[0], i, k
    cdef int n = M.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((m, K), dtype=np.float64)
    cdef double* work = <double*> malloc(n * n * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(m):
                for k in range(K):
                    out[i, k] = _pencil_min(&M[i, 0, 0], &B[i, 0, 0], mu[k], work, n)
    finally:
        free(work)
    return out


def golden_dual(Mm, Bm, double beta, double lo, double hi, double tol, int maxit):
    """Golden-section maximisation of ``h(mu) = lambda_min(M - mu B) + mu beta``.

    Returns ``(a, b, mu_best, h_best, evaluations)`` where ``[a, b]`` is the
    final bracket.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] M = np.ascontiguousarray(Mm, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] B = np.ascontiguousarray(Bm, dtype=np.float64)
    cdef int n = M.shape[0], it = 0, evals = 0
    cdef double invphi = (sqrt(5.0) - 1.0) / 2.0
    cdef double a = lo, b = hi, c, d, fc, fd, best_mu, best_h
    cdef double* work = <double*> malloc(n * n * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            c = b - invphi * (b - a)
            d = a + invphi * (b - a)
            fc = _pencil_min(&M[0, 0], &B[0, 0], c, work, n) + c * beta
            fd = _pencil_min(&M[0, 0], &B[0, 0], d, work, n) + d * beta
            evals = 2
            while (b - a) > tol * (1.0 + fabs(a) + fabs(b)) and it < maxit:
                if fc >= fd:
                    b = d
                    d = c
                    fd = fc
                    c = b - invphi * (b - a)
                    fc = _pencil_min(&M[0, 0], &B[0, 0], c, work, n) + c * beta
                else:
                    a = c
                    c = d
                    fc = fd
                    d = a + invphi * (b - a)
                    fd = _pencil_min(&M[0, 0], &B[0, 0], d, work, n) + d * beta
                evals += 1
                it += 1
            if fc >= fd:
                best_mu = c
                best_h = fc
            else:
                best_mu = d
                best_h = fd
    finally:
        free(work)
    return a, b, best_mu, best_h, evals
