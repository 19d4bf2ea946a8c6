"""Linearized far-field operator, its direct adjoint, and synthetic datasets.

Coefficient fields are stacked (gamma; eta) arrays of shape (2*n_c, n_c) on
the pixel grid of ``core.cartesian_grid``. Far-field data are stacked
(Lambda^omega1; Lambda^omega2) arrays of shape (2*n_theta, n_theta), entry
[i, j] for observation angle theta_i and incidence angle theta_j.

Inner products: pixel sums carry the weight (2/n_c)^2 and angular sums carry
(2*pi/n_theta)^2. With these weights ``adjoint_direct`` is the exact adjoint
of ``far_field``.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, ShapeError, angles, cartesian_grid


def kappa(omega):
    """Born prefactor exp(i*pi/4) * omega^2 / sqrt(8*pi*omega)."""
    return np.exp(1j * np.pi / 4) * omega ** 2 / np.sqrt(8 * np.pi * omega)


def kappa_bar(omega):
    return np.conj(kappa(omega))


def pixel_weight(n_c):
    return (2.0 / n_c) ** 2


def angle_weight(n_theta):
    return (2 * np.pi / n_theta) ** 2


def _split_coef(coef):
    coef = np.asarray(coef)
    if coef.ndim < 2 or coef.shape[-2] != 2 * coef.shape[-1]:
        raise ShapeError(f"coefficient array must be (..., 2n_c, n_c), got {coef.shape}")
    n_c = coef.shape[-1]
    return coef[..., :n_c, :], coef[..., n_c:, :], n_c


def _split_data(lam):
    lam = np.asarray(lam)
    if lam.ndim < 2 or lam.shape[-2] != 2 * lam.shape[-1]:
        raise ShapeError(f"far-field array must be (..., 2n_theta, n_theta), got {lam.shape}")
    n = lam.shape[-1]
    return lam[..., :n, :], lam[..., n:, :], n


def _phases(omega, th, pts):
    # E[i, p] = exp(-i*omega*xhat_i . y_p)
    d = np.cos(th)[:, None] * pts[0][None, :] + np.sin(th)[:, None] * pts[1][None, :]
    return np.exp(-1j * omega * d)


def far_field(coef, cfg, n_theta=None):
    """Midpoint-rule far field of a stacked coefficient pair.

    n_theta overrides the angular resolution of ``cfg``; n_c is read from the
    array, so finer synthesis grids are allowed.
    """
    gam, eta, n_c = _split_coef(coef)
    n = cfg.n_theta if n_theta is None else int(n_theta)
    th = angles(n)
    X, Y = cartesian_grid(n_c)
    pts = (X.ravel(), Y.ravel())
    lead = gam.shape[:-2]
    g = gam.reshape(lead + (n_c * n_c,))
    e = eta.reshape(lead + (n_c * n_c,))
    cosm = np.cos(th[:, None] - th[None, :])
    out = []
    for om in cfg.omegas:
        Ex = _phases(om, th, pts)
        EzT = np.conj(Ex).T
        Ag = (Ex * g[..., None, :]) @ EzT
        Ae = (Ex * e[..., None, :]) @ EzT
        out.append(kappa(om) * pixel_weight(n_c) * (-cosm * Ag + Ae))
    return np.concatenate(out, axis=-2)


def adjoint_at(lam, cfg, points):
    """Angular-quadrature adjoint evaluated at arbitrary points.

    points is a pair (x, y) of equal-shape arrays. Returns complex arrays
    (gamma_part, eta_part) of that shape, summed over both frequencies.
    n_theta is read from lam.
    """
    l1, l2, n = _split_data(lam)
    px, py = (np.asarray(p, dtype=float) for p in points)
    shape = px.shape
    pts = (px.ravel(), py.ravel())
    th = angles(n)
    cosm = np.cos(th[:, None] - th[None, :])
    lead = l1.shape[:-2]
    outg = np.zeros(lead + (pts[0].size,), dtype=complex)
    oute = np.zeros_like(outg)
    for om, L in zip(cfg.omegas, (l1, l2)):
        Ec = np.conj(_phases(om, th, pts))
        s = kappa_bar(om) * angle_weight(n)
        # sum_ij conj(Ex[i,p]) conj(Ez[j,p]) M[i,j] with Ez = conj(Ex)
        outg += s * np.sum(Ec * ((-cosm * L) @ np.conj(Ec)), axis=-2)
        oute += s * np.sum(Ec * (L @ np.conj(Ec)), axis=-2)
    return outg.reshape(lead + shape), oute.reshape(lead + shape)


def adjoint_direct(lam, cfg, n_c=None):
    """Adjoint applied to data, on the pixel grid: complex (..., 2n_c, n_c)."""
    n_c = cfg.n_c if n_c is None else int(n_c)
    X, Y = cartesian_grid(n_c)
    g, e = adjoint_at(lam, cfg, (X, Y))
    return np.concatenate([g, e], axis=-2)


# -- datasets --------------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixtureSpec:
    J: int = 5
    concentrated: bool = False

    def __post_init__(self):
        if self.J < 1:
            raise ConfigError("J must be >= 1")


@dataclass(frozen=True)
class TrigMixtureSpec:
    J: int = 20

    def __post_init__(self):
        if self.J < 1:
            raise ConfigError("J must be >= 1")


@dataclass
class DatasetSample:
    input: np.ndarray
    target: np.ndarray
    seed: tuple
    kind: str = ""
    params: dict = field(default_factory=dict, repr=False)


def rng_for(seed, index=0, stream=0):
    """PCG64 stream keyed by (seed, sample index, stream id)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index), int(stream)])))


def draw_gaussian(spec, rng):
    """Peak parameters for one field: arrays c, x, y, sigma of length J."""
    J = spec.J
    c = rng.uniform(0, 1 / J, J)
    r = rng.uniform(0, 0.5, J)
    th = rng.uniform(0, 2 * np.pi, J)
    x, y = r * np.cos(th), r * np.sin(th)
    room = 1 - np.maximum(np.abs(x), np.abs(y))
    u = rng.uniform(0.3, 1.0, J) if spec.concentrated else rng.uniform(0, 1.0, J)
    Rw = room * u
    sigma = Rw / np.sqrt(8 * np.log(2))
    return dict(c=c, x=x, y=y, sigma=sigma)


def eval_gaussian(p, n_c):
    X, Y = cartesian_grid(n_c)
    out = np.zeros_like(X)
    for c, x0, y0, s in zip(p["c"], p["x"], p["y"], p["sigma"]):
        if c == 0 or s == 0:
            continue
        out += c * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2 * s * s))
    out[X * X + Y * Y > 1] = 0.0
    return out


def draw_trig(spec, rng):
    J = spec.J
    return dict(c=rng.standard_normal((J, J)),
                x=rng.uniform(-1, 1, J), y=rng.uniform(-1, 1, J))


def eval_trig(p, n_c):
    X, Y = cartesian_grid(n_c)
    x, y = X[:, 0], Y[0, :]
    J = p["c"].shape[0]
    k = np.arange(1, J + 1)
    cx = np.abs(np.cos(k[:, None] * (x[None, :] + p["x"][:, None]) * np.pi))
    cy = np.abs(np.cos(k[:, None] * (y[None, :] + p["y"][:, None]) * np.pi))
    wts = p["c"] / (k[:, None] ** 3 + k[None, :] ** 3)
    out = np.einsum("ia,ij,jb->ab", cx, wts, cy)
    out[X * X + Y * Y > 1] = 0.0
    return out


def gen_gaussian(spec, seed, n_c, index=0):
    pg = draw_gaussian(spec, rng_for(seed, index, 0))
    pe = draw_gaussian(spec, rng_for(seed, index, 1))
    return np.concatenate([eval_gaussian(pg, n_c), eval_gaussian(pe, n_c)])


def gen_trig(spec, seed, n_c, index=0):
    pg = draw_trig(spec, rng_for(seed, index, 0))
    pe = draw_trig(spec, rng_for(seed, index, 1))
    return np.concatenate([eval_trig(pg, n_c), eval_trig(pe, n_c)])


def add_noise(lam, level, seed, index=0):
    """Add complex Gaussian noise with expected Frobenius size level*||lam||."""
    if level < 0:
        raise ConfigError("noise level must be nonnegative")
    lam = np.asarray(lam)
    if level == 0:
        return lam.copy()
    rng = rng_for(seed, index, 2)
    z = (rng.standard_normal(lam.shape) + 1j * rng.standard_normal(lam.shape)) / np.sqrt(2)
    n = lam.shape[-1]
    return lam + level * np.linalg.norm(lam) / np.sqrt(2 * n * n) * z


def gen_dataset(kind, N, cfg, spec=None, seed=0, fine=False, noise=0.0, tspec=None):
    """N samples of (far field, coefficient pair).

    kind is "gaussian", "trig" or "mixed" (alternating g, t, g, t, ...). With
    fine=True the far field is synthesized from the same draws on a grid with
    twice the pixel resolution.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    if kind not in ("gaussian", "trig", "mixed"):
        raise ConfigError(f"unknown dataset kind {kind!r}")
    gspec = spec if isinstance(spec, GaussianMixtureSpec) else GaussianMixtureSpec()
    tspec = tspec or (spec if isinstance(spec, TrigMixtureSpec) else TrigMixtureSpec())
    out = []
    for s in range(N):
        k = kind if kind != "mixed" else ("gaussian" if s % 2 == 0 else "trig")
        if k == "gaussian":
            draw, ev, sp = draw_gaussian, eval_gaussian, gspec
        else:
            draw, ev, sp = draw_trig, eval_trig, tspec
        pg = draw(sp, rng_for(seed, s, 0))
        pe = draw(sp, rng_for(seed, s, 1))
        target = np.concatenate([ev(pg, cfg.n_c), ev(pe, cfg.n_c)])
        if fine:
            src = np.concatenate([ev(pg, 2 * cfg.n_c), ev(pe, 2 * cfg.n_c)])
        else:
            src = target
        lam = far_field(src, cfg)
        if noise:
            lam = add_noise(lam, noise, seed, s)
        out.append(DatasetSample(lam, target, (int(seed), s), k[0], dict(gamma=pg, eta=pe)))
    return out


def stack(samples):
    """(inputs, targets) arrays with a leading sample axis."""
    if not samples:
        raise ConfigError("empty dataset")
    return (np.stack([s.input for s in samples]), np.stack([s.target for s in samples]))
