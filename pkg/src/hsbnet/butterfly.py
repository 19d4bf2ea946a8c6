"""Blockwise low-rank compression of the radial kernel and its U*M*V form.

The kernel matrix is split into n_r x n_r contiguous blocks; block (i, j) is
replaced by its best rank-r approximation U_ij diag(s_ij) Vh_ij. The factors
are arranged as

    U = blockdiag(U_1, ..., U_nr),   U_i = [U_i1, ..., U_i,nr]
    V = blockdiag(V_1, ..., V_nr),   V_j = [Vh_1j; ...; Vh_nr,j]

and M routes sub-block (j, i) of V-space to sub-block (i, j) of U-space with
weights s_ij. Storage layout:

    U[i, a, j, k]  row a of row-block i, rank-k vector of block (i, j)
    S[i, j, k]     k-th kept singular value of block (i, j)
    V[j, i, k, b]  column b of column-block j, rank-k vector of block (i, j)
"""

from dataclasses import dataclass
from math import factorial

import numpy as np

from . import _kernels
from .adjoint import phi0_complex
from .core import ConfigError, NumericalError, ShapeError


@dataclass(frozen=True)
class LowRankKernelSpec:
    r: int
    n_r: int

    def __post_init__(self):
        if self.r < 1 or self.n_r < 1:
            raise ConfigError("rank and block count must be positive")

    def check(self, cfg):
        if cfg.n_theta % self.n_r or cfg.n_rho % self.n_r:
            raise ConfigError("n_theta and n_rho must be divisible by n_r")

    def centers(self, cfg):
        p = np.arange(1, self.n_r + 1)
        tau = np.pi * (2 * p - 1) / self.n_r
        varrho = cfg.omega2 / (2 * cfg.omega1) * (2 * p - 1) / self.n_r
        return tau, varrho


def lowrank_bound(r, n_r, omega2):
    """Analytic max-entry bound (pi*omega2/2)^r / r! * n_r^(-2r)."""
    return (np.pi * omega2 / 2) ** r / factorial(r) * float(n_r) ** (-2 * r)


def taylor_kernel(t, rho, t0, rho0, r, omega1):
    """Rank-r separable expansion of exp(-i*omega1*rho*cos t) about (t0, rho0)."""
    t, rho = np.asarray(t, dtype=float), np.asarray(rho, dtype=float)
    dc = np.cos(t) - np.cos(t0)
    dr = rho - rho0
    pre = np.exp(-1j * omega1 * rho0 * dc) * np.exp(-1j * omega1 * rho * np.cos(t0))
    acc = np.zeros(np.broadcast(dc, dr).shape, dtype=complex)
    term = np.ones_like(acc)
    for l in range(r):
        acc += term
        term = term * (-1j * omega1) * dc * dr / (l + 1)
    return pre * acc


def taylor_matrix(spec, cfg):
    """Blockwise Taylor construction on the polar grid, each block about its centre."""
    from .core import polar_grid
    spec.check(cfg)
    g = polar_grid(cfg)
    tau, varrho = spec.centers(cfg)
    a, b = cfg.n_theta // spec.n_r, cfg.n_rho // spec.n_r
    out = np.empty((cfg.n_theta, cfg.n_rho), dtype=complex)
    for p in range(spec.n_r):
        for q in range(spec.n_r):
            T, R = np.meshgrid(g.thetas[p * a:(p + 1) * a], g.rhos[q * b:(q + 1) * b], indexing="ij")
            out[p * a:(p + 1) * a, q * b:(q + 1) * b] = taylor_kernel(
                T, R, tau[p], varrho[q], spec.r, cfg.omega1)
    return out


class ButterflyFactor:
    def __init__(self, U, S, V):
        self.U, self.S, self.V = U, S, V
        n_r, a, n_r2, r = U.shape
        if n_r2 != n_r or S.shape != (n_r, n_r, r) or V.shape[:3] != (n_r, n_r, r):
            raise ShapeError("inconsistent butterfly factor shapes")
        self.n_r, self.r, self.a, self.b = n_r, r, a, V.shape[3]
        self.shape = (n_r * a, n_r * self.b)

    # -- dense views (tests and accounting only) --
    def U_dense(self):
        n_r, a, r = self.n_r, self.a, self.r
        out = np.zeros((n_r * a, n_r * n_r * r), dtype=complex)
        w = n_r * r
        for i in range(n_r):
            out[i * a:(i + 1) * a, i * w:(i + 1) * w] = self.U[i].reshape(a, w)
        return out

    def V_dense(self):
        n_r, b, r = self.n_r, self.b, self.r
        out = np.zeros((n_r * n_r * r, n_r * b), dtype=complex)
        w = n_r * r
        for j in range(n_r):
            out[j * w:(j + 1) * w, j * b:(j + 1) * b] = self.V[j].reshape(w, b)
        return out

    def M_dense(self):
        n_r, r = self.n_r, self.r
        N = n_r * n_r * r
        out = np.zeros((N, N), dtype=complex)
        for i in range(n_r):
            for j in range(n_r):
                row = (i * n_r + j) * r
                col = (j * n_r + i) * r
                out[row:row + r, col:col + r] = np.diag(self.S[i, j])
        return out

    def dense(self):
        return np.einsum("iajk,ijk,jikb->iajb", self.U, self.S, self.V).reshape(self.shape)

    def nnz(self):
        """Structural nonzeros of U, M, V."""
        n, m = self.shape
        return {"U": n * self.n_r * self.r, "V": m * self.n_r * self.r,
                "M": self.n_r * self.n_r * self.r}

    def flops(self, cols=1):
        """Complex multiply-adds of one apply: one per structural nonzero per column."""
        return sum(self.nnz().values()) * cols

    # -- block-sparse applies --
    def apply(self, X):
        """U M V X without densifying; X is (n_rho, ...) ."""
        X = np.asarray(X)
        if X.shape[0] != self.shape[1]:
            raise ShapeError("butterfly_apply: inner dimension mismatch")
        tail = X.shape[1:]
        Xb = X.reshape(self.n_r, self.b, -1)
        y = np.einsum("jikb,jbc->jikc", self.V, Xb)
        z = self.S[..., None] * y.transpose(1, 0, 2, 3)
        out = np.einsum("iajk,ijkc->iac", self.U, z)
        return out.reshape((self.shape[0],) + tail)

    def apply_adjoint(self, Y):
        """(U M V)^H Y without densifying; Y is (n_theta, ...)."""
        Y = np.asarray(Y)
        if Y.shape[0] != self.shape[0]:
            raise ShapeError("butterfly_apply: inner dimension mismatch")
        tail = Y.shape[1:]
        Yb = Y.reshape(self.n_r, self.a, -1)
        z = np.einsum("iajk,iac->ijkc", np.conj(self.U), Yb)
        y = (np.conj(self.S)[..., None] * z).transpose(1, 0, 2, 3)
        out = np.einsum("jikb,jikc->jbc", np.conj(self.V), y)
        return out.reshape((self.shape[1],) + tail)

    def quad_diag(self, A):
        """diag(K^H A K) for K = U M V, batched over leading axes of A."""
        A = np.asarray(A)
        n_r, a, r = self.n_r, self.a, self.r
        lead = A.shape[:-2]
        Ab = A.reshape(lead + (n_r, a, n_r, a))
        # Z_J[i,k,x,l] = U[i,:,J,k]^H A[blk i, blk x] U[x,:,J,l]
        AU = np.einsum("...iaxb,xbJl->...iaJxl", Ab, self.U)
        Z = np.einsum("iaJk,...iaJxl->...Jikxl", np.conj(self.U), AU)
        SJ = self.S.transpose(1, 0, 2)                      # [J, i, k]
        W = np.conj(SJ)[:, :, :, None, None] * Z * SJ[:, None, None, :, :]
        WV = np.einsum("...Jikxl,Jxlb->...Jikb", W, self.V)
        out = np.einsum("Jikb,...Jikb->...Jb", np.conj(self.V), WV)
        return out.reshape(lead + (self.shape[1],))


def butterfly_apply(bf, X, adjoint=False):
    return bf.apply_adjoint(X) if adjoint else bf.apply(X)


def block_truncate(K, spec, cfg=None):
    """Best rank-r approximation of every block; returns (dense K_r, factor)."""
    K = np.asarray(K, dtype=complex)
    n, m = K.shape
    n_r, r = spec.n_r, spec.r
    if n % n_r or m % n_r:
        raise ConfigError("kernel dimensions must be divisible by n_r")
    a, b = n // n_r, m // n_r
    U = np.zeros((n_r, a, n_r, r), dtype=complex)
    S = np.zeros((n_r, n_r, r))
    V = np.zeros((n_r, n_r, r, b), dtype=complex)
    for i in range(n_r):
        for j in range(n_r):
            blk = K[i * a:(i + 1) * a, j * b:(j + 1) * b]
            u, s, vh, _ = _kernels.jacobi_svd(blk)
            if u is None:
                raise NumericalError(f"Jacobi SVD did not converge on block ({i}, {j})")
            k = min(r, len(s))
            U[i, :, j, :k] = u[:, :k]
            S[i, j, :k] = s[:k]
            V[j, i, :k, :] = vh[:k]
    bf = ButterflyFactor(U, S.astype(complex), V)
    return bf.dense(), bf


def phi1_apply(lam, bf, cfg, C=None, d=None, return_imag=False):
    """Compressed network: phi0 with the kernel replaced by the butterfly factor."""
    if bf.shape != (cfg.n_theta, cfg.n_rho):
        raise ShapeError("butterfly factor does not match the configuration")
    z = phi0_complex(lam, bf, cfg, C=C, d=d)
    if return_imag:
        return z.real, z.imag
    return z.real
