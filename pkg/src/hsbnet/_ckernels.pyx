# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in _pure.py (same signatures)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

BACKEND = "cython"


def gather(double[:, ::1] src, long long[:, ::1] idx, double[:, ::1] w):
    cdef Py_ssize_t B = src.shape[0], P = idx.shape[1], K = idx.shape[0]
    cdef Py_ssize_t b, p, k
    cdef double acc
    out = np.empty((B, P))
    cdef double[:, ::1] o = out
    for b in range(B):
        for p in range(P):
            acc = 0.0
            for k in range(K):
                acc += w[k, p] * src[b, idx[k, p]]
            o[b, p] = acc
    return out


def scatter(double[:, ::1] src, long long[:, ::1] idx, double[:, ::1] w, Py_ssize_t size):
    cdef Py_ssize_t B = src.shape[0], P = idx.shape[1], K = idx.shape[0]
    cdef Py_ssize_t b, p, k
    cdef double v
    out = np.zeros((B, size))
    cdef double[:, ::1] o = out
    for b in range(B):
        for p in range(P):
            v = src[b, p]
            for k in range(K):
                o[b, idx[k, p]] += w[k, p] * v
    return out


cdef int _jacobi_tall(double complex[:, ::1] W, double complex[:, ::1] V,
                      double tol, int max_sweeps):
    # W is stored transposed: W[j, :] is column j of the working matrix
    cdef Py_ssize_t n = W.shape[0], m = W.shape[1], nv = V.shape[1]
    cdef Py_ssize_t p, q, i
    cdef double a, b, ag, zeta, t, c, s
    cdef double complex g, ph, x, y
    cdef int sweep, rotated
    for sweep in range(max_sweeps):
        rotated = 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = 0.0
                b = 0.0
                g = 0.0
                for i in range(m):
                    x = W[p, i]
                    y = W[q, i]
                    a += x.real * x.real + x.imag * x.imag
                    b += y.real * y.real + y.imag * y.imag
                    g += x.conjugate() * y
                ag = sqrt(g.real * g.real + g.imag * g.imag)
                if ag <= tol * sqrt(a * b):
                    continue
                rotated = 1
                ph = g / ag
                zeta = (b - a) / (2 * ag)
                t = (1.0 if zeta >= 0 else -1.0) / (fabs(zeta) + sqrt(1 + zeta * zeta))
                c = 1 / sqrt(1 + t * t)
                s = c * t
                for i in range(m):
                    x = W[p, i]
                    y = W[q, i] / ph
                    W[p, i] = c * x - s * y
                    W[q, i] = s * x + c * y
                for i in range(nv):
                    x = V[p, i]
                    y = V[q, i] / ph
                    V[p, i] = c * x - s * y
                    V[q, i] = s * x + c * y
        if not rotated:
            return sweep + 1
    return -1


def jacobi_svd(A, double tol=1e-12, int max_sweeps=60):
    A = np.asarray(A, dtype=complex)
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1]
    wide = m < n
    T = A.conj().T if wide else A
    Wt = np.ascontiguousarray(T.T)
    k = Wt.shape[0]
    Vt = np.eye(k, dtype=complex)
    sweeps = _jacobi_tall(Wt, Vt, tol, max_sweeps)
    if sweeps < 0:
        return None, None, None, max_sweeps
    W = Wt.T
    V = Vt.T
    s = np.linalg.norm(W, axis=0)
    order = np.argsort(-s, kind="stable")
    s, W, V = s[order], W[:, order], V[:, order]
    U = np.zeros_like(W)
    nz = s > 0
    U[:, nz] = W[:, nz] / s[nz]
    if wide:
        return V, s, U.conj().T, sweeps
    return U, s, V.conj().T, sweeps
