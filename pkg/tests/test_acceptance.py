"""Acceptance criteria 1-11, one test each.

Every test records its verdict in conftest.ACCEPTANCE and prints a single
PASS/FAIL line; the terminal summary repeats all of them at the end.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from hsbnet import adjoint as adj
from hsbnet import butterfly as bt
from hsbnet import checks
from hsbnet import train as tr
from hsbnet.core import ProblemConfig


def record(k, ok, msg, t0, budget):
    wall = time.perf_counter() - t0
    ok = bool(ok) and wall < budget
    msg = f"{msg} [{wall:.1f} s, budget {budget:g} s]"
    ACCEPTANCE[k] = (ok, msg)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {msg}")
    assert ok, msg


def test_01_adjoint_identity():
    t0 = time.perf_counter()
    e = checks.adjoint_identity(pairs=20, n=16)
    record(1, e <= 1e-10, f"worst normalized adjoint gap {e:.2e} <= 1e-10", t0, 10)


def test_02_polar_matches_cartesian():
    t0 = time.perf_counter()
    errs = {n: checks.polar_matches_cartesian(n) for n in (8, 16, 32)}
    msg = ", ".join(f"n={n}: {e:.1e}" for n, e in errs.items())
    record(2, max(errs.values()) <= 1e-10, f"phi0 vs direct adjoint {msg}", t0, 30)


def test_03_angular_rate():
    t0 = time.perf_counter()
    rows = checks.angular_rate_errors(ns=(16, 32, 64))
    ratios = [r["ratio"] for r in rows[1:]]
    ok = all(1.6 <= q <= 2.6 for q in ratios)
    errs = " ".join(f"{r['sup_error']:.3g}" for r in rows)
    record(3, ok, f"sup errors {errs}, ratios {ratios[0]:.2f} {ratios[1]:.2f} in [1.6, 2.6]", t0, 120)


def test_04_lowrank_bound():
    t0 = time.perf_counter()
    worst_ratio, worst_fac, nnz_ok = 0.0, 0.0, True
    for w2 in (5.0, 10.0):
        cfg = ProblemConfig(omega1=w2 / 2, omega2=w2, n_theta=64)
        K = adj.kernel_matrix(cfg)
        for r, n_r in checks.LOWRANK_CASES:
            Kr, bf = bt.block_truncate(K, bt.LowRankKernelSpec(r, n_r))
            worst_ratio = max(worst_ratio, np.abs(K - Kr).max() / bt.lowrank_bound(r, n_r, w2))
            worst_fac = max(worst_fac, np.abs(bf.U_dense() @ bf.M_dense() @ bf.V_dense() - Kr).max())
            nnz_ok &= sum(bf.nnz().values()) == (cfg.n_theta + cfg.n_rho + n_r) * n_r * r
    ok = worst_ratio <= 1 and worst_fac <= 1e-12 and nnz_ok
    record(4, ok, f"max error/bound {worst_ratio:.3g}, UMV gap {worst_fac:.1e}, nnz formula {nnz_ok}",
           t0, 30)


def test_05_symbol_and_filters():
    t0 = time.perf_counter()
    res = checks.suite_deconv(n_c=64, n_q=512)
    sel = [c for c in res.checks if "tikhonov_solve" not in c.name]
    bad = [c.name for c in sel if not c.passed]
    record(5, not bad, f"{len(sel) - len(bad)}/{len(sel)} determinant and filter checks"
           + (f", failing: {bad}" if bad else ""), t0, 120)


def test_06_tikhonov_round_trip():
    from hsbnet import deconv as dc
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    errs = {}
    for m in (32, 64):
        s = dc.build_symbol(ProblemConfig(n_theta=m))
        f = rng.standard_normal((2 * m, m))
        g = dc.tikhonov_solve(dc.apply_normal_op(f, s, 0.1), s, 0.1)
        errs[m] = np.linalg.norm(g - f) / np.linalg.norm(f)
    msg = ", ".join(f"n_c={m}: {e:.1e}" for m, e in errs.items())
    record(6, max(errs.values()) <= 1e-8, f"round trip {msg} <= 1e-8", t0, 30)


def test_07_cnn_rate():
    # known failure, see the decisions ledger: cropping psi1 to the pixel
    # square leaves an O(1) boundary error that does not shrink with n_c
    t0 = time.perf_counter()
    rows = checks.cnn_rate_errors(ncs=(32, 64, 128), alpha=0.5)
    ratios = [r["ratio"] for r in rows[1:]]
    ok = all(1.5 <= q <= 2.7 for q in ratios)
    errs = " ".join(f"{r['sup_error']:.3g}" for r in rows)
    record(7, ok, f"sup errors/|O| {errs}, ratios {ratios[0]:.2f} {ratios[1]:.2f} in [1.5, 2.7]",
           t0, 180)


def test_08_gradients():
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for label, net in checks.GRAD_NETS.items():
        for k, e in checks.gradient_errors(net, entries=5, h=1e-5).items():
            if e > worst:
                worst, where = e, f"{label} {k}"
    record(8, worst <= 1e-4, f"worst relative FD gap {worst:.1e} ({where}) <= 1e-4", t0, 60)


def test_09_lipschitz():
    t0 = time.perf_counter()
    out = checks.lipschitz_pairs(pairs=20, n=16, N=4)
    record(9, len(out) == 20 and all(l <= r for l, r in out),
           f"20 pairs, max lhs/rhs {max(l / r for l, r in out):.3g}", t0, 60)


def test_10_training_smoke():
    t0 = time.perf_counter()
    _, rep = checks.training_smoke(n=32, n_train=100, n_test=100, steps=300)
    a = checks.training_smoke(n=16, n_train=8, n_test=4, steps=3)[0]
    b = checks.training_smoke(n=16, n_train=8, n_test=4, steps=3)[0]
    same = all(np.array_equal(a[k], b[k]) for k in a)
    ok = rep.e_a <= 0.5 * rep.e_a0 and rep.e_g <= 0.35 and same
    record(10, ok, f"e_a0 {rep.e_a0:.4g} -> e_a {rep.e_a:.4g} (need <= half), e_g {rep.e_g:.4g} "
           f"(need <= 0.35), deterministic {same}", t0, 600)


def test_11_baseline_monotone():
    t0 = time.perf_counter()
    rows = checks.baseline_errors(alphas=(1.0, 0.1, 0.01))
    keys = [k for k in rows[0] if k != "alpha"]
    ok = all(rows[i][k] > rows[i + 1][k] for k in keys for i in range(len(rows) - 1))
    msg = "; ".join(f"{k} " + " ".join(f"{r[k]:.3g}" for r in rows) for k in keys)
    record(11, ok, f"errors over alpha 1, 0.1, 0.01: {msg}", t0, 120)
