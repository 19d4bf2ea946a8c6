"""Reference implementations of the hot kernels in numpy / plain Python."""

import numpy as np

BACKEND = "python"


def gather(src, idx, w):
    """out[b, p] = sum_k w[k, p] * src[b, idx[k, p]]."""
    out = w[0] * src[:, idx[0]]
    for k in range(1, idx.shape[0]):
        out += w[k] * src[:, idx[k]]
    return out


def scatter(src, idx, w, size):
    """Transpose of gather: out[b, idx[k, p]] += w[k, p] * src[b, p]."""
    B = src.shape[0]
    off = (np.arange(B) * size)[:, None]
    out = np.zeros(B * size)
    for k in range(idx.shape[0]):
        out += np.bincount((off + idx[k][None, :]).ravel(),
                           weights=(w[k][None, :] * src).ravel(),
                           minlength=B * size)
    return out.reshape(B, size)


def _jacobi_tall(A, tol, max_sweeps):
    W = np.array(A, dtype=complex, order="F")
    m, n = W.shape
    V = np.eye(n, dtype=complex)
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp, wq = W[:, p], W[:, q]
                a = np.vdot(wp, wp).real
                b = np.vdot(wq, wq).real
                g = np.vdot(wp, wq)
                ag = abs(g)
                if ag <= tol * np.sqrt(a * b):
                    continue
                rotated = True
                ph = g / ag
                zeta = (b - a) / (2 * ag)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1 + zeta * zeta))
                c = 1 / np.sqrt(1 + t * t)
                s = c * t
                wq = wq / ph
                W[:, p], W[:, q] = c * wp - s * wq, s * wp + c * wq
                vp, vq = V[:, p], V[:, q] / ph
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            return W, V, sweep + 1
    return None, None, max_sweeps


def jacobi_svd(A, tol=1e-12, max_sweeps=60):
    """One-sided Jacobi SVD of a complex matrix.

    Returns (U, s, Vh, sweeps) with s descending and A = U diag(s) Vh.
    U is None when the iteration did not converge.
    """
    A = np.asarray(A, dtype=complex)
    m, n = A.shape
    wide = m < n
    W, V, sweeps = _jacobi_tall(A.conj().T if wide else A, tol, max_sweeps)
    if W is None:
        return None, None, None, sweeps
    s = np.linalg.norm(W, axis=0)
    order = np.argsort(-s, kind="stable")
    s, W, V = s[order], W[:, order], V[:, order]
    U = np.zeros_like(W)
    nz = s > 0
    U[:, nz] = W[:, nz] / s[nz]
    if wide:
        return V, s, U.conj().T, sweeps
    return U, s, V.conj().T, sweeps
