import numpy as np
import pytest
from hypothesis import given, strategies as st

from hsbnet import adjoint as ad
from hsbnet import butterfly as bt
from hsbnet import _kernels
from hsbnet.core import ConfigError, NumericalError, ProblemConfig, ShapeError

CASES = [(2, 2), (4, 4), (6, 4), (4, 8)]


def test_bound_values():
    # (pi*5/2)^2 / 2! / 2^4 evaluated by hand: 61.68502750680849 / 32
    assert bt.lowrank_bound(2, 2, 5.0) == pytest.approx(1.9276571095877653, rel=1e-15)
    assert bt.lowrank_bound(4, 8, 10.0) == pytest.approx((5 * np.pi) ** 4 / 24 / 8 ** 8, rel=1e-15)


@pytest.mark.parametrize("w2", [5.0, 10.0])
@pytest.mark.parametrize("r,n_r", CASES)
def test_svd_and_taylor_errors_below_bound(w2, r, n_r):
    cfg = ProblemConfig(omega1=w2 / 2, omega2=w2, n_theta=64)
    spec = bt.LowRankKernelSpec(r, n_r)
    K = ad.kernel_matrix(cfg)
    Kr, bf = bt.block_truncate(K, spec)
    T = bt.taylor_matrix(spec, cfg)
    bound = bt.lowrank_bound(r, n_r, w2)
    assert np.abs(K - Kr).max() <= bound
    assert np.abs(K - T).max() <= bound
    a, b = cfg.n_theta // n_r, cfg.n_rho // n_r
    for i in range(n_r):
        for j in range(n_r):
            blk = (slice(i * a, (i + 1) * a), slice(j * b, (j + 1) * b))
            # best rank-r in spectral norm, so never worse than the Taylor block
            assert np.linalg.norm(K[blk] - Kr[blk], 2) <= np.linalg.norm(K[blk] - T[blk], 2) * (1 + 1e-12)
    assert np.abs(bf.U_dense() @ bf.M_dense() @ bf.V_dense() - Kr).max() <= 1e-12
    nnz = bf.nnz()
    assert sum(nnz.values()) == (cfg.n_theta + cfg.n_rho + n_r) * n_r * r
    assert bf.flops() == sum(nnz.values())


def test_structural_nonzeros():
    cfg = ProblemConfig(n_theta=16)
    _, bf = bt.block_truncate(ad.kernel_matrix(cfg), bt.LowRankKernelSpec(2, 4))
    assert np.count_nonzero(bf.U_dense()) == bf.nnz()["U"]
    assert np.count_nonzero(bf.V_dense()) == bf.nnz()["V"]
    assert np.count_nonzero(bf.M_dense()) == bf.nnz()["M"]


@given(st.sampled_from(CASES[:3]), st.integers(0, 2 ** 20), st.integers(1, 4))
def test_apply_matches_dense(case, seed, cols):
    cfg = ProblemConfig(n_theta=16)
    _, bf = bt.block_truncate(ad.kernel_matrix(cfg), bt.LowRankKernelSpec(*case))
    D = bf.dense()
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((32, cols)) + 1j * rng.standard_normal((32, cols))
    Y = rng.standard_normal((16, cols)) + 1j * rng.standard_normal((16, cols))
    assert np.allclose(bt.butterfly_apply(bf, X), D @ X, atol=1e-12)
    assert np.allclose(bt.butterfly_apply(bf, Y, adjoint=True), D.conj().T @ Y, atol=1e-12)
    A = rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16))
    assert np.allclose(bf.quad_diag(A), ad.quad_diag(A, D), atol=1e-11)


def test_phi1_with_full_rank_equals_phi0():
    cfg = ProblemConfig(n_theta=8)
    K = ad.kernel_matrix(cfg)
    _, bf = bt.block_truncate(K, bt.LowRankKernelSpec(4, 2))   # blocks are 4x8: rank 4 is exact
    lam = np.random.default_rng(0).standard_normal((16, 8)) + 0j
    C = ad.cosine_matrix(8)
    assert np.allclose(bt.phi1_apply(lam, bf, cfg, C=C), ad.phi0_apply(lam, K, C, cfg), atol=1e-11)


def test_errors(monkeypatch):
    with pytest.raises(ConfigError):
        bt.LowRankKernelSpec(0, 2)
    with pytest.raises(ConfigError):
        bt.LowRankKernelSpec(2, 3).check(ProblemConfig(n_theta=16))
    with pytest.raises(ShapeError):
        bt.ButterflyFactor(np.zeros((2, 4, 2, 2)), np.zeros((2, 2, 3)), np.zeros((2, 2, 2, 4)))
    monkeypatch.setattr(_kernels, "jacobi_svd", lambda A: (None, None, None, 60))
    with pytest.raises(NumericalError, match=r"block \(0, 0\)"):
        bt.block_truncate(np.ones((4, 4)), bt.LowRankKernelSpec(1, 2))
