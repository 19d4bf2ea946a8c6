"""Convolution structure of the regularized normal operator.

The normal operator F*F + alpha*I acts on a stacked pair (f1; f2) as a 2x2
block convolution with real, radially symmetric filters g_11, g_12 = g_21,
g_22 (one set per frequency, summed). Two discretizations live here:

* ``FilterBank``: the filters sampled at pixel offsets k*h, k = -n_c..n_c-1,
  covering [-2, 2)^2. These are the convolution kernels of the scaled
  residual CNN (psi1, psi2).
* ``SymbolField``: the 2x2 Fourier symbol on a zero-padded periodic grid of
  pad*n_c points per side. Each plane wave of the angular quadrature is
  deposited at its nearest grid frequency with a rank-one PSD weight, so the
  symbol is band limited to |xi| <= 2*omega2 (plus half a cell diagonal) and
  det(symbol + alpha*I) >= alpha^2 holds exactly. apply_normal_op and
  tikhonov_solve are inverses of each other, exactly on the padded grid and
  to solver tolerance on the pixel grid.

Convolutions carry the pixel area h^2 = (2/n_c)^2, so (g * f)(y_q) is
h^2 * sum_p g(y_q - y_p) f(y_p).
"""

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from .core import ConfigError, ShapeError, NumericalError
from .forward import adjoint_direct, far_field, kappa

DEFAULT_NQ = 512
DEFAULT_PAD = 6


def _quad_angles(n_q):
    t = 2 * np.pi * np.arange(1, n_q + 1) / n_q
    return np.cos(t), np.sin(t)


def _profiles(omega, px, py, n_q, chunk=4096):
    """(g11, g12, g22) at points (px, py), trapezoid rule with n_q angles each."""
    c, s = _quad_angles(n_q)
    px, py = np.ravel(px), np.ravel(py)
    pref = abs(kappa(omega)) ** 2 * (2 * np.pi / n_q) ** 2
    out = np.empty((3, px.size))
    for a in range(0, px.size, chunk):
        e = np.exp(1j * omega * (px[a:a + chunk, None] * c + py[a:a + chunk, None] * s))
        sq = lambda w: np.abs(e @ w) ** 2
        out[2, a:a + chunk] = sq(np.ones_like(c))
        out[1, a:a + chunk] = -(sq(c) + sq(s))
        out[0, a:a + chunk] = sq(c * c) + 2 * sq(c * s) + sq(s * s)
    return pref * out


def filter_value(j, jp, omega, y, n_q=DEFAULT_NQ):
    """Quadrature value of g_{j j'}^omega at y (a 2-vector or (..., 2) array)."""
    if j not in (1, 2) or jp not in (1, 2):
        raise ConfigError("filter indices must be 1 or 2")
    y = np.asarray(y, dtype=float)
    shape = y.shape[:-1]
    g = _profiles(omega, y[..., 0], y[..., 1], n_q)
    k = {(1, 1): 0, (1, 2): 1, (2, 1): 1, (2, 2): 2}[(j, jp)]
    return g[k].reshape(shape) if shape else float(g[k][0])


def offsets(n_c):
    """Filter sample offsets k*h for k = -n_c..n_c-1 (centre at index n_c)."""
    return np.arange(-n_c, n_c) * (2.0 / n_c)


class FilterBank:
    """Sampled filters G[(j, j', w)] of shape (2n_c, 2n_c); w indexes the frequency.

    G[(1, 2, w)] and G[(2, 1, w)] are the same array object.
    """

    def __init__(self, cfg, n_q=DEFAULT_NQ, n_c=None):
        self.cfg, self.n_q = cfg, n_q
        self.n_c = cfg.n_c if n_c is None else n_c
        self.G = {}
        for w, om in enumerate(cfg.omegas):
            g11, g12, g22 = _bank_for(om, self.n_c, n_q)
            self.G[(1, 1, w)] = g11
            self.G[(2, 2, w)] = g22
            self.G[(1, 2, w)] = self.G[(2, 1, w)] = g12

    def __getitem__(self, key):
        return self.G[key]

    def summed(self):
        """Frequency sums (S11, S12, S22)."""
        W = range(len(self.cfg.omegas))
        return tuple(sum(self.G[(a, b, w)] for w in W) for a, b in ((1, 1), (1, 2), (2, 2)))


_bank_cache = {}


def _bank_for(omega, n_c, n_q):
    key = (float(omega), int(n_c), int(n_q))
    if key not in _bank_cache:
        k = np.arange(-n_c, n_c)
        r2 = k[:, None] ** 2 + k[None, :] ** 2
        uniq, inv = np.unique(r2, return_inverse=True)
        rad = np.sqrt(uniq) * (2.0 / n_c)
        prof = _profiles(omega, rad, np.zeros_like(rad), n_q)
        arrs = [p[inv].reshape(r2.shape) for p in prof]
        for a in arrs:
            a.setflags(write=False)
        _bank_cache[key] = tuple(arrs)
    return _bank_cache[key]


def build_filter_bank(cfg, n_q=DEFAULT_NQ, n_c=None):
    if n_q < 4 * int(np.ceil(cfg.omega2)):
        raise ConfigError("n_q too small to resolve the highest frequency")
    return FilterBank(cfg, n_q, n_c)


# -- Fourier symbol --------------------------------------------------------

class SymbolField:
    """Band-limited 2x2 symbol of F*F on a padded periodic grid (alpha excluded)."""

    def __init__(self, cfg, n_q=DEFAULT_NQ, pad=DEFAULT_PAD, n_c=None):
        if pad < 3:
            raise ConfigError("pad must be at least 3")
        self.cfg, self.n_q, self.pad = cfg, n_q, pad
        self.n_c = cfg.n_c if n_c is None else n_c
        self.h = 2.0 / self.n_c
        P = self.P = pad * self.n_c
        self.dxi = 2 * np.pi / (P * self.h)
        c, s = _quad_angles(n_q)
        cosd = c[:, None] * c[None, :] + s[:, None] * s[None, :]
        s11 = np.zeros(P * P)
        s12 = np.zeros(P * P)
        s22 = np.zeros(P * P)
        wq = (2 * np.pi / n_q) ** 2
        for om in cfg.omegas:
            kx = om * (c[:, None] - c[None, :])
            ky = om * (s[:, None] - s[None, :])
            ix = np.rint(kx / self.dxi).astype(np.int64) % P
            iy = np.rint(ky / self.dxi).astype(np.int64) % P
            if np.max(np.abs(np.rint(kx / self.dxi))) >= P // 2:
                raise ConfigError("grid too coarse for the frequency band")
            flat = (ix * P + iy).ravel()
            # (2pi)^2 delta(xi - k) integrates to one cell of area dxi^2
            wt = abs(kappa(om)) ** 2 * wq * (2 * np.pi) ** 2 / self.dxi ** 2
            cd = cosd.ravel()
            s11 += np.bincount(flat, weights=wt * cd * cd, minlength=P * P)
            s12 += np.bincount(flat, weights=-wt * cd, minlength=P * P)
            s22 += np.bincount(flat, weights=np.full(cd.size, wt), minlength=P * P)
        self.s11 = s11.reshape(P, P)
        self.s12 = s12.reshape(P, P)
        self.s22 = s22.reshape(P, P)
        f = np.fft.fftfreq(P, d=self.h) * 2 * np.pi
        self.xi = np.meshgrid(f, f, indexing="ij")

    def det_field(self, alpha):
        return (self.s11 + alpha) * (self.s22 + alpha) - self.s12 ** 2

    def band_radius(self):
        """Radius outside which the symbol vanishes identically."""
        return 2 * self.cfg.omega2 + self.dxi / np.sqrt(2)

    def g2alpha_symbol(self, alpha):
        return alpha ** -2 - 1.0 / self.det_field(alpha)

    def torus_kernels(self):
        """Spatial kernels (k11, k12, k22) on the padded grid, index 0 = offset 0."""
        return tuple(sfft.ifft2(s).real / self.h ** 2 for s in (self.s11, self.s12, self.s22))

    def g2alpha_kernel(self, alpha):
        """g_{2,alpha} sampled at offsets k*h, k = -n_c..n_c-1, shape (2n_c, 2n_c)."""
        k = sfft.ifft2(self.g2alpha_symbol(alpha)).real / self.h ** 2
        idx = np.arange(-self.n_c, self.n_c) % self.P
        return k[np.ix_(idx, idx)]


_sym_cache = {}


def build_symbol(cfg, n_q=DEFAULT_NQ, pad=DEFAULT_PAD, n_c=None):
    key = (cfg.omegas, cfg.n_c if n_c is None else n_c, n_q, pad)
    if key not in _sym_cache:
        _sym_cache[key] = SymbolField(cfg, n_q, pad, n_c)
    return _sym_cache[key]


def _pairs(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-2:] != (2 * n, n):
        raise ShapeError(f"expected (..., {2 * n}, {n}), got {x.shape}")
    return x[..., :n, :], x[..., n:, :]


def _embed(f, P):
    n = f.shape[-1]
    out = np.zeros(f.shape[:-2] + (P, P))
    out[..., :n, :n] = f
    return out


def apply_normal_op(f, sym, alpha, full=False):
    """(F*F + alpha*I) f via the symbol; full=True returns the padded-grid field."""
    P, n = sym.P, sym.n_c
    if full:
        f1, f2 = _pairs(f, P)
    else:
        f1, f2 = (_embed(b, P) for b in _pairs(f, n))
    F1, F2 = sfft.fft2(f1), sfft.fft2(f2)
    o1 = sfft.ifft2((sym.s11 + alpha) * F1 + sym.s12 * F2).real
    o2 = sfft.ifft2(sym.s12 * F1 + (sym.s22 + alpha) * F2).real
    if not full:
        o1, o2 = o1[..., :n, :n], o2[..., :n, :n]
    return np.concatenate([o1, o2], axis=-2)


def _fft_inverse(h1, h2, sym, alpha, det):
    H1, H2 = sfft.fft2(h1), sfft.fft2(h2)
    o1 = sfft.ifft2(((sym.s22 + alpha) * H1 - sym.s12 * H2) / det).real
    o2 = sfft.ifft2((-sym.s12 * H1 + (sym.s11 + alpha) * H2) / det).real
    return o1, o2


def tikhonov_solve(h, sym, alpha, full=None, tol=1e-13, maxiter=2000):
    """Solve (F*F + alpha*I) f = h.

    On the padded grid the 2x2 symbol is inverted exactly. On the pixel grid
    the operator is the restriction to the pixel square, which is not a
    convolution; it is solved by conjugate gradients preconditioned with the
    padded-grid inverse.
    """
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    P, n = sym.P, sym.n_c
    h = np.asarray(h, dtype=float)
    if full is None:
        full = h.shape[-1] == P
    det = sym.det_field(alpha)
    if det.min() < alpha ** 2 / 2:
        raise NumericalError("symbol determinant below alpha^2/2")
    if full:
        h1, h2 = _pairs(h, P)
        return np.concatenate(_fft_inverse(h1, h2, sym, alpha, det), axis=-2)
    _pairs(h, n)
    lead = h.shape[:-2]
    flat = h.reshape((-1, 2 * n, n))
    size = 2 * n * n

    def precond(v):
        f1, f2 = (_embed(b, P) for b in _pairs(v.reshape(2 * n, n), n))
        o1, o2 = _fft_inverse(f1, f2, sym, alpha, det)
        return np.concatenate([o1[:n, :n], o2[:n, :n]]).ravel()

    A = LinearOperator((size, size), dtype=float,
                       matvec=lambda v: apply_normal_op(v.reshape(2 * n, n), sym, alpha).ravel())
    return _pcg_batch(A, precond, flat, tol, maxiter).reshape(lead + (2 * n, n))


def _pcg_batch(A, precond, rhs, tol, maxiter):
    n2 = rhs.shape[-2:]
    size = rhs[0].size
    M = LinearOperator((size, size), dtype=float, matvec=precond)
    out = np.zeros_like(rhs)
    for k, b in enumerate(rhs):
        if not np.any(b):
            continue
        x, info = cg(A, b.ravel(), x0=precond(b.ravel()), rtol=tol, atol=0.0, maxiter=maxiter, M=M)
        if info != 0:
            raise NumericalError(f"conjugate gradients did not converge (info={info})")
        out[k] = x.reshape(n2)
    return out


def born_normal_apply(f, cfg, alpha=0.0):
    """Re(F*F f) + alpha*f with the discrete far-field operator and its adjoint."""
    return adjoint_direct(far_field(f, cfg), cfg, n_c=f.shape[-1]).real + alpha * np.asarray(f)


def tikhonov_reconstruct(lam, cfg, alpha, sym=None, tol=1e-12, maxiter=2000):
    """Regularized pseudo-inverse (F*F + alpha*I)^-1 F* lam for real fields.

    F is the same discrete operator that synthesizes the data, so noiseless
    data are inverted consistently. The symbol inverse serves as
    preconditioner.
    """
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    lam = np.asarray(lam)
    n = cfg.n_c
    sym = build_symbol(cfg) if sym is None else sym
    det = sym.det_field(alpha)
    rhs = adjoint_direct(lam, cfg).real
    lead = rhs.shape[:-2]
    flat = rhs.reshape((-1, 2 * n, n))
    size = 2 * n * n

    def precond(v):
        f1, f2 = (_embed(b, sym.P) for b in _pairs(v.reshape(2 * n, n), n))
        o1, o2 = _fft_inverse(f1, f2, sym, alpha, det)
        return np.concatenate([o1[:n, :n], o2[:n, :n]]).ravel()

    A = LinearOperator((size, size), dtype=float,
                       matvec=lambda v: born_normal_apply(v.reshape(2 * n, n), cfg, alpha).ravel())
    return _pcg_batch(A, precond, flat, tol, maxiter).reshape(lead + (2 * n, n))


# -- scaled residual CNN with exact kernels --------------------------------

def conv(x, G, h):
    """Zero-padded linear convolution, h^2 * sum_p G[q - p + n] x[p], 'same' size.

    x is (..., n, n); G is (2n, 2n) with offset 0 at index n.
    """
    n = x.shape[-1]
    if G.shape != (2 * n, 2 * n):
        raise ShapeError("kernel must be (2n, 2n) for an (n, n) input")
    L = 3 * n
    X = sfft.rfft2(x, s=(L, L))
    K = sfft.rfft2(G, s=(L, L))
    full = sfft.irfft2(X * K, s=(L, L))
    return h * h * full[..., n:2 * n, n:2 * n]


def psi1_apply(O, bank, alpha):
    """Adjugate-pattern convolution layer plus alpha times the input."""
    n = bank.n_c
    top, bot = _pairs(O, n)
    h = 2.0 / n
    S11, S12, S22 = bank.summed()
    o1 = conv(top, S22, h) - conv(bot, S12, h) + alpha * top
    o2 = conv(bot, S11, h) - conv(top, S12, h) + alpha * bot
    return np.concatenate([o1, o2], axis=-2)


def psi2_apply(O, g2, alpha):
    """alpha^-2 times the input minus channel-wise convolution with g_{2,alpha}."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    n = g2.shape[-1] // 2
    top, bot = _pairs(O, n)
    h = 2.0 / n
    o1 = alpha ** -2 * top - conv(top, g2, h)
    o2 = alpha ** -2 * bot - conv(bot, g2, h)
    return np.concatenate([o1, o2], axis=-2)


def adjugate_kernel(bank):
    """2x2 block kernel [[S22, -S12], [-S12, S11]] assembled as one array (2, 2, 2n, 2n)."""
    S11, S12, S22 = bank.summed()
    return np.array([[S22, -S12], [-S12, S11]])


def pipeline_reconstruct(lam, cfg, alpha, sym=None):
    """tikhonov_solve applied to the resampled exact-weight polar adjoint.

    Linear in lam. Interpolation error of the polar-to-pixel step enters the
    right-hand side unregularized, so for small alpha this is far less
    accurate than tikhonov_reconstruct.
    """
    from .adjoint import cosine_matrix, kernel_matrix, phi0_apply
    from .core import polar_to_cartesian
    sym = build_symbol(cfg) if sym is None else sym
    P = phi0_apply(lam, kernel_matrix(cfg), cosine_matrix(cfg.n_theta), cfg)
    return tikhonov_solve(polar_to_cartesian(P, cfg), sym, alpha)
