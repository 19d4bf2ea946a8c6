"""Polar-coordinate evaluation of the adjoint as a shared-weight network.

For every frequency and every angle shift m, the shifted data block
Lambda_m[i, j] = Lambda[i+m, j+m] is contracted against the radial kernel
K[i, n] = exp(-i*omega1*rho_n*cos(t_i)):

    row_m[n] = sum_i conj(K[i, n]) * sum_j (W o Lambda_m)[i, j] * K[j, n]

with W the cosine matrix C for the gamma branch and all-ones for the eta
branch. Output row m, column j of the result is the adjoint evaluated at
radius j/n_c and angle theta_m.
"""

import numpy as np

from .core import ShapeError, all_shifts, angles, freq_select_map, polar_grid
from .forward import angle_weight, kappa, kappa_bar

# kappa_bar(omega) has phase -pi/4 for every omega; rotating the input by it
# turns the complex prefactor into a positive real scale.
PHASE = np.exp(-1j * np.pi / 4)


def kernel_matrix(cfg):
    g = polar_grid(cfg)
    return np.exp(-1j * cfg.omega1 * np.outer(np.cos(g.thetas), g.rhos))


def kernel_parts(cfg):
    """(K_cos, K_sin) with K = K_cos - i*K_sin."""
    K = kernel_matrix(cfg)
    return K.real.copy(), -K.imag


def cosine_matrix(n):
    k = np.arange(n)
    return -np.cos(2 * np.pi * (k[:, None] - k[None, :]) / n)


def circulant(c):
    """Circulant matrix with first column c: out[i, j] = c[(i - j) mod n]."""
    n = len(c)
    k = np.arange(n)
    return np.asarray(c)[(k[:, None] - k[None, :]) % n]


def phase_diag(n):
    """Diagonal of D: exp(-i*theta_i)."""
    return np.exp(-1j * angles(n))


def quad_diag(A, K):
    """diag(K^H A K) for a dense K or any object with a quad_diag method."""
    if hasattr(K, "quad_diag"):
        return K.quad_diag(A)
    return np.sum(np.conj(K) * (A @ K), axis=-2)


def _check(lam_shift, K):
    n = lam_shift.shape[-1]
    if lam_shift.shape[-2] != n or K.shape[0] != n:
        raise ShapeError("shifted input and kernel sizes disagree")


def phi1_row(lam_shift, K, C, omega):
    _check(lam_shift, K)
    n = lam_shift.shape[-1]
    return kappa_bar(omega) * angle_weight(n) * quad_diag(C * lam_shift, K)


def phi2_row(lam_shift, K, omega):
    _check(lam_shift, K)
    n = lam_shift.shape[-1]
    return kappa_bar(omega) * angle_weight(n) * quad_diag(lam_shift, K)


def cosine_via_phase(lam_shift, d):
    """-(1/2)(D^H L D + D L D^H) for D = diag(d)."""
    d = np.asarray(d)
    if d.shape[-1] != lam_shift.shape[-1]:
        raise ShapeError("phase diagonal length mismatch")
    outer = np.conj(d)[:, None] * d[None, :]
    return -0.5 * (outer * lam_shift + np.conj(outer) * lam_shift)


def _blocks(lam, cfg):
    lam = np.asarray(lam)
    n = cfg.n_theta
    if lam.shape[-2:] != (2 * n, n):
        raise ShapeError(f"far field must be (..., {2 * n}, {n}), got {lam.shape}")
    return lam[..., :n, :], lam[..., n:, :]


def phi0_complex(lam, K, cfg, C=None, d=None):
    """Complex assembled output (..., 2n_theta, n_out) before taking real part.

    Exactly one of C (cosine matrix) or d (phase diagonal) selects the
    gamma-branch weighting.
    """
    if (C is None) == (d is None):
        raise ValueError("pass exactly one of C or d")
    out = 0
    for om, L in zip(cfg.omegas, _blocks(lam, cfg)):
        S = all_shifts(L)
        W = C * S if C is not None else cosine_via_phase(S, d)
        cols = freq_select_map(om, cfg)
        s = kappa_bar(om) * angle_weight(cfg.n_theta)
        r1 = s * quad_diag(W, K)[..., cols]
        r2 = s * quad_diag(S, K)[..., cols]
        out = out + np.concatenate([r1, r2], axis=-2)
    return out


def phi0_apply(lam, K, C, cfg, return_imag=False):
    """Real polar field (..., 2n_theta, n_out); optionally also the imaginary residual."""
    z = phi0_complex(lam, K, cfg, C=C)
    if return_imag:
        return z.real, z.imag
    return z.real


def default_scales(cfg):
    """Real per-channel scales [omega1 b1, omega1 b2, omega2 b1, omega2 b2]."""
    w = angle_weight(cfg.n_theta)
    return np.array([w * abs(kappa(om)) for om in cfg.omegas for _ in (0, 1)])


def _real_form(Lr, Li, Kc, Ks):
    # Re(b^T(conj(K) o (L K))) with K = Kc - i Ks, L = Lr + i Li
    return (np.sum(Kc * (Lr @ Kc), axis=-2) + np.sum(Ks * (Lr @ Ks), axis=-2)
            + np.sum(Kc * (Li @ Ks), axis=-2) - np.sum(Ks * (Li @ Kc), axis=-2))


def phi0_real_channels(lam, K_cos, K_sin, C, cfg, scales=None):
    """Real-arithmetic evaluation with four real channel scales.

    The input is rotated by exp(-i*pi/4) first, which absorbs the phase of
    the complex prefactor. With default scales this equals phi0_apply.
    """
    scales = default_scales(cfg) if scales is None else np.asarray(scales)
    out = 0
    for k, (om, L) in enumerate(zip(cfg.omegas, _blocks(lam, cfg))):
        S = all_shifts(PHASE * np.asarray(L))
        Sr, Si = S.real, S.imag
        cols = freq_select_map(om, cfg)
        r1 = scales[2 * k] * _real_form(C * Sr, C * Si, K_cos, K_sin)[..., cols]
        r2 = scales[2 * k + 1] * _real_form(Sr, Si, K_cos, K_sin)[..., cols]
        out = out + np.concatenate([r1, r2], axis=-2)
    return out


class SharedWeights:
    """Single storage for K and C referenced by every weight layer."""

    def __init__(self, K, C):
        self.K = K
        self.C = C

    def sites(self, cfg):
        """(frequency, branch, role, array) for each weight application."""
        out = []
        for om in cfg.omegas:
            out += [(om, 1, "C", self.C), (om, 1, "K", self.K),
                    (om, 1, "Kbar", self.K), (om, 1, "b", None)]
            out += [(om, 2, "K", self.K), (om, 2, "Kbar", self.K), (om, 2, "b", None)]
        return out

    def apply(self, lam, cfg):
        return phi0_apply(lam, self.K, self.C, cfg)


def free_parameter_counts(cfg):
    """Free entries of K under k(2pi - t, rho) = k(t, rho), and of circulant C."""
    n = cfg.n_theta
    rows = n // 2 + 1 if n % 2 == 0 else (n + 1) // 2
    return {"K": rows * cfg.n_rho, "C": n}


def unique_rows(n):
    """Row index of the representative for each row under t -> 2pi - t."""
    # t_i = 2pi(i+1)/n at array position i, so 2pi - t_i sits at n-2-i (mod n)
    i = np.arange(n)
    return np.minimum(i, (n - 2 - i) % n)
