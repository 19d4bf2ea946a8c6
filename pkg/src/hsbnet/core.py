"""Problem configuration, grids, index shifts and the polar to Cartesian map.

Index convention: the math uses 1-based angle and radius indices
(theta_i = 2*pi*i/n_theta for i = 1..n_theta, rho_j = j/n_c for j = 1..n_rho).
Arrays are 0-based, so array position k holds node k+1 everywhere in this
package.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


class ConfigError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class StateError(RuntimeError):
    pass


def _as_int_ratio(x, what):
    k = int(round(x))
    if k < 1 or abs(x - k) > 1e-9 * max(1.0, abs(x)):
        raise ConfigError(f"{what} must be a positive integer, got {x!r}")
    return k


@dataclass(frozen=True)
class ProblemConfig:
    """Frequencies, resolutions and the Tikhonov weight.

    n_c defaults to n_theta and n_rho to (omega2/omega1)*n_c, so
    ``ProblemConfig(n_theta=32)`` is the default profile n_c = n_theta.
    """

    omega1: float = 2.5
    omega2: float = 5.0
    n_theta: int = 16
    n_c: int = None
    n_rho: int = None
    alpha: float = 0.1
    R: float = 1.0

    def __post_init__(self):
        if not (self.omega1 > 0 and self.omega2 > self.omega1):
            raise ConfigError("need 0 < omega1 < omega2")
        q = _as_int_ratio(self.omega2 / self.omega1, "omega2/omega1")
        if self.n_c is None:
            object.__setattr__(self, "n_c", int(self.n_theta))
        if self.n_rho is None:
            object.__setattr__(self, "n_rho", q * int(self.n_c))
        for name in ("n_theta", "n_c", "n_rho"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(v))
        if self.n_rho != q * self.n_c:
            raise ConfigError("n_rho must equal (omega2/omega1)*n_c")
        if self.n_theta > self.n_rho:
            raise ConfigError("n_theta must not exceed n_rho")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.R != 1.0:
            raise ConfigError("only R = 1 is supported")

    @property
    def ratio(self):
        """Integer omega2/omega1."""
        return int(round(self.omega2 / self.omega1))

    @property
    def omegas(self):
        return (float(self.omega1), float(self.omega2))

    @property
    def n_out(self):
        """Number of output radii, (omega1/omega2)*n_rho (equals n_c)."""
        return self.n_rho // self.ratio

    def replace(self, **kw):
        d = dict(omega1=self.omega1, omega2=self.omega2, n_theta=self.n_theta,
                 n_c=self.n_c, alpha=self.alpha, R=self.R)
        if "n_c" in kw or "n_theta" in kw or "omega1" in kw or "omega2" in kw:
            d["n_rho"] = None
        else:
            d["n_rho"] = self.n_rho
        if "n_theta" in kw and "n_c" not in kw:
            d["n_c"] = None
        d.update(kw)
        return ProblemConfig(**d)


@dataclass(frozen=True)
class PolarGrid:
    thetas: np.ndarray
    rhos: np.ndarray
    out_rho_count: int

    @property
    def out_rhos(self):
        return self.rhos[:self.out_rho_count]


def angles(n):
    """theta_i = 2*pi*i/n for i = 1..n."""
    return 2 * np.pi * np.arange(1, n + 1) / n


def polar_grid(cfg):
    rhos = cfg.ratio * np.arange(1, cfg.n_rho + 1) / cfg.n_rho
    return PolarGrid(angles(cfg.n_theta), rhos, cfg.n_out)


def cartesian_nodes(n_c):
    """Pixel centres (2i-1)/n_c - 1 for i = 1..n_c."""
    return (2 * np.arange(1, n_c + 1) - 1) / n_c - 1


def cartesian_grid(n_c):
    """Return (X, Y) with X[i, j] = x_i and Y[i, j] = x_j."""
    x = cartesian_nodes(n_c)
    return np.meshgrid(x, x, indexing="ij")


def disc_mask(n_c):
    X, Y = cartesian_grid(n_c)
    return (X * X + Y * Y) <= 1.0


def shift_indices(m, A):
    """Cyclic diagonal shift: out[i, j] = A[i+m, j+m] with wraparound."""
    A = np.asarray(A)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ShapeError("shift_indices expects a square matrix")
    if not (1 <= m <= n):
        raise ShapeError(f"shift index m={m} outside 1..{n}")
    idx = (np.arange(n) + m) % n
    return A[np.ix_(idx, idx)]


def all_shifts(A):
    """Stack of shift_indices(m, A) for m = 1..n along a new axis -3.

    A may carry leading batch axes: (..., n, n) -> (..., n, n, n).
    """
    n = A.shape[-1]
    idx = (np.arange(n)[None, :] + np.arange(1, n + 1)[:, None]) % n
    return A[..., idx[:, :, None], idx[:, None, :]]


def freq_select_map(omega, cfg):
    """0-based source columns (omega/omega1)*j - 1 for j = 1..n_out."""
    if not any(abs(omega - w) <= 1e-12 * w for w in cfg.omegas):
        raise ShapeError("omega must be one of the configured frequencies")
    step = omega / cfg.omega1
    cols = step * np.arange(1, cfg.n_out + 1)
    k = np.rint(cols)
    if np.any(np.abs(cols - k) > 1e-9) or k[-1] > cfg.n_rho:
        raise ConfigError("frequency selection does not land on grid columns")
    return k.astype(np.int64) - 1


class PolarToCartesian:
    """Bilinear resampling from the polar output grid to pixels.

    Interpolation is periodic in theta. Radii below the first ring take the
    first ring value and pixels outside the unit disc are set to zero. The
    same weights act on the gamma block and the eta block.
    """

    def __init__(self, n_theta, n_out, n_c):
        self.n_theta, self.n_out, self.n_c = n_theta, n_out, n_c
        X, Y = cartesian_grid(n_c)
        r = np.hypot(X, Y).ravel()
        th = np.mod(np.arctan2(Y, X).ravel(), 2 * np.pi)
        inside = r <= 1.0
        # theta_k at array position k-1, radii rho_j = j/n_out at j-1
        u = th * n_theta / (2 * np.pi) - 1.0
        i0 = np.floor(u)
        fu = u - i0
        i0 = i0.astype(np.int64) % n_theta
        i1 = (i0 + 1) % n_theta
        v = np.clip(r * n_out - 1.0, 0.0, n_out - 1)
        j0 = np.minimum(np.floor(v).astype(np.int64), n_out - 1)
        fv = v - j0
        j1 = np.minimum(j0 + 1, n_out - 1)
        idx = np.stack([i0 * n_out + j0, i0 * n_out + j1,
                        i1 * n_out + j0, i1 * n_out + j1])
        w = np.stack([(1 - fu) * (1 - fv), (1 - fu) * fv,
                      fu * (1 - fv), fu * fv])
        w[:, ~inside] = 0.0
        idx[:, ~inside] = 0
        self.idx = np.ascontiguousarray(idx, dtype=np.int64)
        self.w = np.ascontiguousarray(w)

    def _check(self, P, shape):
        P = np.asarray(P, dtype=float)
        if P.shape[-2:] != shape:
            raise ShapeError(f"expected trailing shape {shape}, got {P.shape}")
        return P

    def apply(self, P):
        """(..., 2*n_theta, n_out) polar field -> (..., 2*n_c, n_c)."""
        n, m, c = self.n_theta, self.n_out, self.n_c
        P = self._check(P, (2 * n, m))
        lead = P.shape[:-2]
        src = np.ascontiguousarray(P.reshape(-1, n * m))
        out = _kernels.gather(src, self.idx, self.w)
        return out.reshape(lead + (2 * c, c))

    def apply_T(self, X):
        """Adjoint map: (..., 2*n_c, n_c) -> (..., 2*n_theta, n_out)."""
        n, m, c = self.n_theta, self.n_out, self.n_c
        X = self._check(X, (2 * c, c))
        lead = X.shape[:-2]
        src = np.ascontiguousarray(X.reshape(-1, c * c))
        out = _kernels.scatter(src, self.idx, self.w, n * m)
        return out.reshape(lead + (2 * n, m))

    def matrix(self):
        """Dense single-block matrix (n_c^2, n_theta*n_out)."""
        A = np.zeros((self.n_c ** 2, self.n_theta * self.n_out))
        rows = np.arange(self.n_c ** 2)
        for k in range(4):
            np.add.at(A, (rows, self.idx[k]), self.w[k])
        return A


_resamplers = {}


def resampler(cfg):
    key = (cfg.n_theta, cfg.n_out, cfg.n_c)
    if key not in _resamplers:
        _resamplers[key] = PolarToCartesian(*key)
    return _resamplers[key]


def polar_to_cartesian(P, cfg):
    return resampler(cfg).apply(P)
