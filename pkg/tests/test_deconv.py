import numpy as np
import pytest
from hypothesis import given, strategies as st

from hsbnet import checks
from hsbnet import deconv as dc
from hsbnet import forward as fw
from hsbnet import train as tr
from hsbnet.core import ConfigError, NumericalError, ProblemConfig, ShapeError

CFG = ProblemConfig(n_theta=32)


@pytest.fixture(scope="module")
def sym():
    return dc.build_symbol(CFG)


@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_determinant(sym, alpha):
    det = sym.det_field(alpha)
    assert det.min() >= alpha ** 2 * (1 - 1e-8)
    out = np.hypot(*sym.xi) > sym.band_radius()
    assert out.any()
    assert np.abs(det[out] / alpha ** 2 - 1).max() <= 1e-12


def test_symbol_even_so_kernels_real(sym):
    P = sym.P
    neg = (-np.arange(P)) % P
    for s in (sym.s11, sym.s12, sym.s22):
        assert np.allclose(s, s[np.ix_(neg, neg)], atol=1e-12 * np.abs(s).max())
    for k in sym.torus_kernels():
        assert np.isrealobj(k)


def test_filter_values_at_origin():
    for om in (2.5, 5.0):
        kk = abs(fw.kappa(om)) ** 2
        assert dc.filter_value(2, 2, om, [0, 0]) == pytest.approx(np.pi * om ** 3 / 2, rel=1e-12)
        assert dc.filter_value(2, 2, om, [0, 0]) == pytest.approx(kk * 4 * np.pi ** 2, rel=1e-12)
        assert dc.filter_value(1, 1, om, [0, 0]) == pytest.approx(kk * 2 * np.pi ** 2, rel=1e-12)
        assert abs(dc.filter_value(1, 2, om, [0, 0])) <= 1e-10


@given(st.floats(0.05, 1.9), st.floats(0, 2 * np.pi))
def test_filters_radially_symmetric(r, t):
    for j, jp in ((1, 1), (1, 2), (2, 2)):
        a = dc.filter_value(j, jp, 5.0, [r, 0.0])
        b = dc.filter_value(j, jp, 5.0, [r * np.cos(t), r * np.sin(t)])
        assert abs(a - b) <= 1e-10 * abs(dc.filter_value(2, 2, 5.0, [0, 0]))


def test_filter_bank_matches_pointwise():
    cfg = ProblemConfig(n_theta=8)
    bank = dc.build_filter_bank(cfg)
    off = dc.offsets(8)
    G = bank[(1, 2, 1)]
    for i, j in ((0, 0), (3, 9), (8, 8), (15, 2)):
        assert G[i, j] == pytest.approx(dc.filter_value(1, 2, 5.0, [off[i], off[j]]), abs=1e-12)
    assert bank[(2, 1, 0)] is bank[(1, 2, 0)]
    with pytest.raises(ConfigError):
        dc.build_filter_bank(cfg, n_q=8)


def test_g2alpha_bounds(sym):
    # sup and Lipschitz bounds with the effective band half-width (grid cells add slack)
    w = sym.band_radius() / 2
    for a in (0.1, 1.0):
        g = sym.g2alpha_kernel(a)
        assert np.abs(g).max() <= w ** 2 / (np.pi * a * a)
        lip = max(np.abs(np.diff(g, axis=0)).max(), np.abs(np.diff(g, axis=1)).max()) / sym.h
        assert lip <= 4 * np.sqrt(2) * CFG.omega2 ** 3 / (3 * np.pi * a * a)


@pytest.mark.parametrize("n_c", [16, 32])
def test_roundtrip(n_c):
    cfg = ProblemConfig(n_theta=n_c)
    s = dc.build_symbol(cfg)
    rng = np.random.default_rng(n_c)
    f = rng.standard_normal((2 * s.P, s.P))
    g = dc.tikhonov_solve(dc.apply_normal_op(f, s, 0.1, full=True), s, 0.1)
    assert np.linalg.norm(g - f) <= 1e-12 * np.linalg.norm(f)
    f = rng.standard_normal((2 * n_c, n_c))
    g = dc.tikhonov_solve(dc.apply_normal_op(f, s, 0.1), s, 0.1)
    assert np.linalg.norm(g - f) <= 1e-8 * np.linalg.norm(f)


@given(st.integers(0, 95), st.integers(0, 95))
def test_solve_commutes_with_torus_translation(dx, dy):
    s = dc.build_symbol(ProblemConfig(n_theta=16))
    f = np.random.default_rng(0).standard_normal((2 * s.P, s.P))
    P = s.P

    def roll(x):
        return np.concatenate([np.roll(x[:P], (dx, dy), (0, 1)), np.roll(x[P:], (dx, dy), (0, 1))])

    a = dc.tikhonov_solve(roll(f), s, 0.3)
    b = roll(dc.tikhonov_solve(f, s, 0.3))
    assert np.allclose(a, b, atol=1e-12)


def test_normal_op_consistent_with_far_field_first_order():
    f = fw.gen_gaussian(fw.GaussianMixtureSpec(), 3, 32)
    ref = fw.adjoint_direct(fw.far_field(f, CFG), CFG).real
    errs = []
    for pad in (6, 12, 24):
        s = dc.SymbolField(CFG, n_q=32, pad=pad)
        errs.append(np.linalg.norm(dc.apply_normal_op(f, s, 0.0) - ref) / np.linalg.norm(ref))
    assert errs[0] <= 0.05
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[2] > 2.5


def test_born_normal_apply():
    f = fw.gen_gaussian(fw.GaussianMixtureSpec(), 3, 16)
    c = ProblemConfig(n_theta=16)
    assert np.allclose(dc.born_normal_apply(f, c, 0.5),
                       fw.adjoint_direct(fw.far_field(f, c), c).real + 0.5 * f)


def test_tikhonov_reconstruct_monotone_and_zero():
    c = ProblemConfig(n_theta=16)
    data = fw.gen_dataset("gaussian", 3, c, seed=11)
    lam = np.stack([s.input for s in data])
    prev = None
    for a in (1.0, 0.1, 0.01):
        rec = dc.tikhonov_reconstruct(lam, c, a)
        e = np.array([tr.relative_error(r, s.target) for r, s in zip(rec, data)])
        if prev is not None:
            assert np.all(e < prev)
        prev = e
    assert np.array_equal(dc.tikhonov_reconstruct(np.zeros_like(lam[0]), c, 0.1), np.zeros((32, 16)))


def test_pipeline_reconstruct_linear():
    c = ProblemConfig(n_theta=16)
    rng = np.random.default_rng(4)
    L1, L2 = rng.standard_normal((2, 32, 16)) + 1j * rng.standard_normal((2, 32, 16))
    lhs = dc.pipeline_reconstruct(2 * L1 - 3 * L2, c, 0.1)
    rhs = 2 * dc.pipeline_reconstruct(L1, c, 0.1) - 3 * dc.pipeline_reconstruct(L2, c, 0.1)
    assert np.abs(lhs - rhs).max() <= 1e-8 * np.abs(rhs).max()


def test_pipeline_reconstruct_monotone_in_alpha():
    # literal pipeline oracle; resampling error is amplified by 1/alpha (see decisions ledger)
    c = ProblemConfig(n_theta=16)
    data = fw.gen_dataset("gaussian", 3, c, seed=11)
    lam = np.stack([s.input for s in data])
    errs = [[tr.relative_error(r, s.target) for r, s in zip(dc.pipeline_reconstruct(lam, c, a), data)]
            for a in (1.0, 0.1, 0.01)]
    assert np.all(np.diff(np.array(errs), axis=0) < 0)


def test_cnn_self_convergence():
    rows = checks.cnn_self_convergence()
    e = [r["sup_error"] for r in rows]
    assert e[0] > e[1] > e[2]
    assert all(1.5 <= r["ratio"] <= 4.5 for r in rows[1:])


def test_psi_layers_match_symbol_away_from_truncation():
    # on the padded torus psi2(psi1(.)) inverts the symbol; here check psi1 against the adjugate
    c = ProblemConfig(n_theta=16)
    bank = dc.build_filter_bank(c)
    O = fw.gen_gaussian(fw.GaussianMixtureSpec(), 2, 16)
    h = 2.0 / 16
    S11, S12, S22 = bank.summed()
    top, bot = O[:16], O[16:]
    want = np.concatenate([dc.conv(top, S22, h) - dc.conv(bot, S12, h) + 0.5 * top,
                           dc.conv(bot, S11, h) - dc.conv(top, S12, h) + 0.5 * bot])
    assert np.allclose(dc.psi1_apply(O, bank, 0.5), want)
    K = dc.adjugate_kernel(bank)
    assert np.array_equal(K[0, 1], -S12) and np.array_equal(K[1, 1], S11)


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(0)
    n = 5
    x = rng.standard_normal((n, n))
    G = rng.standard_normal((2 * n, 2 * n))
    h = 0.3
    got = dc.conv(x, G, h)
    for q in ((0, 0), (2, 3), (4, 4)):
        ref = h * h * sum(G[q[0] - p0 + n, q[1] - p1 + n] * x[p0, p1] for p0 in range(n) for p1 in range(n))
        assert got[q] == pytest.approx(ref, abs=1e-12)


def test_errors(sym):
    with pytest.raises(ConfigError):
        dc.tikhonov_solve(np.zeros((64, 32)), sym, 0.0)
    with pytest.raises(ConfigError):
        dc.psi2_apply(np.zeros((64, 32)), np.zeros((64, 64)), -1.0)
    with pytest.raises(ShapeError):
        dc.apply_normal_op(np.zeros((10, 10)), sym, 0.1)
    with pytest.raises(ConfigError):
        dc.SymbolField(CFG, pad=2)
    bad = dc.SymbolField(ProblemConfig(n_theta=8), n_q=32, pad=3)
    bad.s12 = bad.s12 + 1e3
    with pytest.raises(NumericalError):
        dc.tikhonov_solve(np.zeros((16, 8)), bad, 0.1)
