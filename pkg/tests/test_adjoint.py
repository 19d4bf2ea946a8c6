import numpy as np
import pytest
from hypothesis import given, strategies as st

from hsbnet import adjoint as ad
from hsbnet import forward as fw
from hsbnet.core import ProblemConfig, ShapeError, all_shifts, polar_grid, shift_indices


def _setup(n=8, seed=0):
    cfg = ProblemConfig(n_theta=n)
    lam = fw.far_field(fw.gen_gaussian(fw.GaussianMixtureSpec(), seed, n), cfg)
    return cfg, lam, ad.kernel_matrix(cfg), ad.cosine_matrix(n)


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_rows_hadamard_diag_bruteforce(n):
    cfg = ProblemConfig(n_theta=n)
    rng = np.random.default_rng(n)
    L = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    K, C = ad.kernel_matrix(cfg), ad.cosine_matrix(n)
    om = cfg.omega1
    s = fw.kappa_bar(om) * fw.angle_weight(n)
    for m in range(1, n + 1):
        Lm = shift_indices(m, L)
        r1, r2 = ad.phi1_row(Lm, K, C, om), ad.phi2_row(Lm, K, om)
        # diag form
        d1 = s * np.diag(K.conj().T @ (C * Lm) @ K)
        d2 = s * np.diag(K.conj().T @ Lm @ K)
        # brute-force triple sum
        b1 = np.zeros(K.shape[1], complex)
        b2 = np.zeros(K.shape[1], complex)
        for q in range(K.shape[1]):
            for i in range(n):
                for j in range(n):
                    t = np.conj(K[i, q]) * Lm[i, j] * K[j, q]
                    b1[q] += C[i, j] * t
                    b2[q] += t
        for a, b, c in ((r1, d1, s * b1), (r2, d2, s * b2)):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12) and np.allclose(a, c, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n", [8, 16, 32])
def test_phi0_equals_adjoint_at_polar_points(n):
    cfg, lam, K, C = _setup(n)
    z = ad.phi0_complex(lam, K, cfg, C=C)
    g = polar_grid(cfg)
    T, R = np.meshgrid(g.thetas, g.out_rhos, indexing="ij")
    dg, de = fw.adjoint_at(lam, cfg, (R * np.cos(T), R * np.sin(T)))
    ref = np.concatenate([dg, de])
    assert np.abs(z - ref).max() <= 1e-10 * np.abs(ref).max()


@given(st.integers(0, 2 ** 20), st.floats(-2, 2), st.floats(-2, 2))
def test_phi0_linear(seed, a, b):
    cfg = ProblemConfig(n_theta=8)
    rng = np.random.default_rng(seed)
    L1, L2 = rng.standard_normal((2, 16, 8)) + 1j * rng.standard_normal((2, 16, 8))
    K, C = ad.kernel_matrix(cfg), ad.cosine_matrix(8)
    lhs = ad.phi0_apply(a * L1 + b * L2, K, C, cfg)
    rhs = a * ad.phi0_apply(L1, K, C, cfg) + b * ad.phi0_apply(L2, K, C, cfg)
    assert np.abs(lhs - rhs).max() <= 1e-12 * (np.abs(lhs).max() + np.abs(rhs).max()) + 1e-15


def test_real_channels_and_phase_forms():
    cfg, lam, K, C = _setup(16, seed=2)
    z = ad.phi0_complex(lam, K, cfg, C=C)
    assert np.abs(z.imag).max() <= 1e-10 * np.abs(z.real).max()
    Kc, Ks = ad.kernel_parts(cfg)
    assert np.abs(ad.phi0_real_channels(lam, Kc, Ks, C, cfg) - z.real).max() <= 1e-12 * np.abs(z).max()
    zd = ad.phi0_complex(lam, K, cfg, d=ad.phase_diag(16))
    assert np.abs(zd - z).max() <= 1e-12 * np.abs(z).max()
    with pytest.raises(ValueError):
        ad.phi0_complex(lam, K, cfg)


def test_cosine_via_phase():
    n = 6
    S = all_shifts(np.random.default_rng(0).standard_normal((n, n)))
    got = ad.cosine_via_phase(S, ad.phase_diag(n))
    assert np.allclose(got, ad.cosine_matrix(n) * S)
    with pytest.raises(ShapeError):
        ad.cosine_via_phase(S, np.ones(n + 1))


def test_cosine_matrix_is_circulant():
    C = ad.cosine_matrix(8)
    assert np.allclose(ad.circulant(C[:, 0]), C)


def test_kernel_row_symmetry_and_free_counts():
    cfg = ProblemConfig(n_theta=16)
    K = ad.kernel_matrix(cfg)
    rep = ad.unique_rows(16)
    assert np.allclose(K[rep], K)
    counts = ad.free_parameter_counts(cfg)
    assert len(set(rep)) * cfg.n_rho == counts["K"] == (16 // 2 + 1) * cfg.n_rho
    assert counts["C"] == 16


def test_shared_weights_sites():
    cfg = ProblemConfig(n_theta=8)
    K, C = ad.kernel_matrix(cfg), ad.cosine_matrix(8)
    sw = ad.SharedWeights(K, C)
    sites = sw.sites(cfg)
    assert len(sites) == 14
    assert all(a is K for *_, role, a in sites if role in ("K", "Kbar"))
    assert all(a is C for *_, role, a in sites if role == "C")
    lam = fw.far_field(fw.gen_gaussian(fw.GaussianMixtureSpec(), 0, 8), cfg)
    assert np.array_equal(sw.apply(lam, cfg), ad.phi0_apply(lam, K, C, cfg))


def test_shape_errors():
    cfg = ProblemConfig(n_theta=8)
    with pytest.raises(ShapeError):
        ad.phi0_apply(np.zeros((8, 8)), ad.kernel_matrix(cfg), ad.cosine_matrix(8), cfg)
    with pytest.raises(ShapeError):
        ad.phi1_row(np.zeros((4, 4)), ad.kernel_matrix(cfg), ad.cosine_matrix(4), 2.5)
