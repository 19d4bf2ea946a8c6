"""Numerical verification suites shared by ``hsbnet verify`` and the tests.

Each suite returns a SuiteResult: a list of Check records (measured value,
threshold, pass flag) plus optional tables of rows for CSV output.
"""

from dataclasses import dataclass, field
import time

import numpy as np

from . import adjoint as adj
from . import butterfly as bt
from . import deconv as dc
from . import forward as fw
from . import train as tr
from .core import ProblemConfig, angles, polar_grid


@dataclass
class Check:
    suite: str
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class SuiteResult:
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    wall: float = 0.0

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, suite, name, value, threshold, passed, detail=""):
        self.checks.append(Check(suite, name, float(value), float(threshold), bool(passed), detail))


def _le(res, suite, name, value, threshold, detail=""):
    res.add(suite, name, value, threshold, value <= threshold, detail)


def _rng(seed):
    return np.random.default_rng(seed)


# -- adjoint ---------------------------------------------------------------

def adjoint_identity(pairs=20, n=16, seed=0):
    """Worst normalized |<Fx, y> - <x, F*y>| over random complex pairs."""
    cfg = ProblemConfig(n_theta=n, n_c=n)
    rng = _rng(seed)
    wa, wp = fw.angle_weight(n), fw.pixel_weight(n)
    worst = 0.0
    for _ in range(pairs):
        x = rng.standard_normal((2 * n, n)) + 1j * rng.standard_normal((2 * n, n))
        y = rng.standard_normal((2 * n, n)) + 1j * rng.standard_normal((2 * n, n))
        Fx, Fy = fw.far_field(x, cfg), fw.adjoint_direct(y, cfg)
        lhs = wa * np.vdot(y, Fx)
        rhs = wp * np.vdot(Fy, x)
        scale = np.sqrt(wa) * np.linalg.norm(Fx) * np.sqrt(wa) * np.linalg.norm(y)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def polar_matches_cartesian(n, seed=0):
    """Relative sup difference between exact-weight phi0 and the direct adjoint."""
    cfg = ProblemConfig(n_theta=n)
    src = fw.gen_gaussian(fw.GaussianMixtureSpec(), seed, n)
    lam = fw.far_field(src, cfg)
    z = adj.phi0_complex(lam, adj.kernel_matrix(cfg), cfg, C=adj.cosine_matrix(n))
    g = polar_grid(cfg)
    T, R = np.meshgrid(g.thetas, g.out_rhos, indexing="ij")
    dg, de = fw.adjoint_at(lam, cfg, (R * np.cos(T), R * np.sin(T)))
    ref = np.concatenate([dg, de])
    return np.abs(z - ref).max() / np.abs(ref).max()


def suite_adjoint():
    res = SuiteResult()
    _le(res, "adjoint", "adjoint identity n=16, 20 pairs", adjoint_identity(), 1e-10)
    for n in (8, 16, 32):
        _le(res, "adjoint", f"polar phi0 vs direct adjoint n_theta={n}", polar_matches_cartesian(n), 1e-10)
    return res


# -- rates -----------------------------------------------------------------

def angular_rate_errors(ns=(16, 32, 64), seeds=(1, 2, 3), n_src=64):
    """Sup error of phi0 against a 4x finer angular reference.

    Coarse outputs are held constant on each coarse angular cell: fine angle
    index m' (1-based) reads coarse row ceil(m'/4). Returns rows with the
    mean error per n_theta and the error at shared nodes.
    """
    rows = []
    spec = fw.GaussianMixtureSpec(concentrated=True)
    srcs = [fw.gen_gaussian(spec, s, n_src) for s in seeds]
    for n in ns:
        cfg = ProblemConfig(n_theta=n)
        K, C = adj.kernel_matrix(cfg), adj.cosine_matrix(n)
        r = polar_grid(cfg).out_rhos
        T, R = np.meshgrid(angles(4 * n), r, indexing="ij")
        cell = (np.arange(1, 4 * n + 1) + 3) // 4 - 1
        errs, nodes = [], []
        for src in srcs:
            z = adj.phi0_complex(fw.far_field(src, cfg), K, cfg, C=C).real
            g, e = fw.adjoint_at(fw.far_field(src, cfg, n_theta=4 * n), cfg,
                                 (R * np.cos(T), R * np.sin(T)))
            prolong = np.concatenate([z[:n][cell], z[n:][cell]])
            errs.append(np.abs(prolong - np.concatenate([g.real, e.real])).max())
            nodes.append(np.abs(np.concatenate([z[:n] - g.real[3::4], z[n:] - e.real[3::4]])).max())
        rows.append({"n_theta": n, "sup_error": float(np.mean(errs)), "node_error": float(np.max(nodes))})
    for a, b in zip(rows, rows[1:]):
        b["ratio"] = a["sup_error"] / b["sup_error"]
    rows[0]["ratio"] = float("nan")
    return rows


def _center_average(F, k):
    # values at coarse pixel centres: mean of the 2x2 fine pixels around each
    n = F.shape[-1]
    idx = np.arange(n // k) * k + k // 2
    out = []
    for B in (F[:n], F[n:]):
        out.append(0.25 * (B[np.ix_(idx - 1, idx - 1)] + B[np.ix_(idx, idx - 1)]
                           + B[np.ix_(idx - 1, idx)] + B[np.ix_(idx, idx)]))
    return np.concatenate(out)


def _exact_cnn(n_c, alpha, O):
    cfg = ProblemConfig(n_theta=n_c)
    bank, sym = dc.build_filter_bank(cfg), dc.build_symbol(cfg)
    return dc.psi2_apply(dc.psi1_apply(O, bank, alpha), sym.g2alpha_kernel(alpha), alpha), sym


def cnn_rate_errors(ncs=(32, 64, 128), alpha=0.5, seed=11):
    """Exact-kernel psi2(psi1(O)) against tikhonov_solve(O), sup error / |O|_inf."""
    rows = []
    for n_c in ncs:
        O = fw.gen_gaussian(fw.GaussianMixtureSpec(), seed, n_c)
        got, sym = _exact_cnn(n_c, alpha, O)
        ref = dc.tikhonov_solve(O, sym, alpha)
        rows.append({"n_c": n_c, "sup_error": float(np.abs(got - ref).max() / np.abs(O).max())})
    for a, b in zip(rows, rows[1:]):
        b["ratio"] = a["sup_error"] / b["sup_error"]
    rows[0]["ratio"] = float("nan")
    return rows


def cnn_self_convergence(ncs=(32, 64, 128), fine=512, alpha=0.5, seed=11):
    """psi2(psi1(O)) against its own evaluation on a fine pixel grid."""
    O_f = fw.gen_gaussian(fw.GaussianMixtureSpec(), seed, fine)
    ref, _ = _exact_cnn(fine, alpha, O_f)
    rows = []
    for n_c in ncs:
        O = fw.gen_gaussian(fw.GaussianMixtureSpec(), seed, n_c)
        got, _ = _exact_cnn(n_c, alpha, O)
        e = np.abs(got - _center_average(ref, fine // n_c)).max() / np.abs(O).max()
        rows.append({"n_c": n_c, "sup_error": float(e)})
    for a, b in zip(rows, rows[1:]):
        b["ratio"] = a["sup_error"] / b["sup_error"]
    rows[0]["ratio"] = float("nan")
    return rows


def _ratio_checks(res, suite, label, rows, lo, hi):
    for r in rows[1:]:
        res.add(suite, f"{label} ratio at {r.get('n_theta', r.get('n_c'))}", r["ratio"], hi,
                lo <= r["ratio"] <= hi, f"required in [{lo}, {hi}]")


def suite_rates(self_convergence=False):
    res = SuiteResult()
    rows = angular_rate_errors()
    res.tables["rates_angular"] = rows
    _ratio_checks(res, "rates", "phi0 angular", rows, 1.6, 2.6)
    rows = cnn_rate_errors()
    res.tables["rates_cnn"] = rows
    _ratio_checks(res, "rates", "psi2 psi1 vs tikhonov_solve", rows, 1.5, 2.7)
    if self_convergence:
        rows = cnn_self_convergence()
        res.tables["rates_cnn_self"] = rows
        _ratio_checks(res, "rates", "psi2 psi1 self-convergence", rows, 1.5, 4.5)
    return res


# -- low rank --------------------------------------------------------------

LOWRANK_CASES = ((2, 2), (4, 4), (6, 4), (4, 8))


def suite_lowrank(n_theta=64):
    res = SuiteResult()
    rows = []
    for w2 in (5.0, 10.0):
        cfg = ProblemConfig(omega1=w2 / 2, omega2=w2, n_theta=n_theta)
        K = adj.kernel_matrix(cfg)
        for r, n_r in LOWRANK_CASES:
            Kr, bf = bt.block_truncate(K, bt.LowRankKernelSpec(r, n_r))
            err = np.abs(K - Kr).max()
            bound = bt.lowrank_bound(r, n_r, w2)
            rows.append({"omega2": w2, "r": r, "n_r": n_r, "error": err, "bound": bound})
            _le(res, "lowrank", f"block SVD error omega2={w2:g} r={r} n_r={n_r}", err, bound)
            fac = np.abs(bf.U_dense() @ bf.M_dense() @ bf.V_dense() - Kr).max()
            _le(res, "lowrank", f"UMV vs dense r={r} n_r={n_r}", fac, 1e-12)
            nnz = sum(bf.nnz().values())
            want = (cfg.n_theta + cfg.n_rho + n_r) * n_r * r
            res.add("lowrank", f"nonzeros r={r} n_r={n_r}", nnz, want, nnz == want)
    res.tables["lowrank"] = rows
    return res


# -- deconvolution ---------------------------------------------------------

def suite_deconv(n_c=64, n_q=512):
    res = SuiteResult()
    cfg = ProblemConfig(n_theta=n_c)
    sym = dc.build_symbol(cfg, n_q=n_q)
    r = np.hypot(*sym.xi)
    far = r > 2 * cfg.omega2 + sym.dxi
    for a in (0.1, 1.0):
        det = sym.det_field(a)
        res.add("deconv", f"det >= alpha^2 alpha={a:g}", det.min() / a ** 2, 1 - 1e-8,
                det.min() >= a ** 2 * (1 - 1e-8))
        _le(res, "deconv", f"det = alpha^2 outside band alpha={a:g}",
            np.abs(det[far] / a ** 2 - 1).max(), 1e-6)
    for om in cfg.omegas:
        for j, jp in ((1, 1), (1, 2), (2, 2)):
            worst = scale = 0.0
            for rad in (0.1, 0.37, 0.8, 1.3, 1.9):
                ref = dc.filter_value(j, jp, om, [rad, 0.0], n_q)
                for t in (0.3, 1.1, 2.0, np.pi / 2, 4.0):
                    v = dc.filter_value(j, jp, om, [rad * np.cos(t), rad * np.sin(t)], n_q)
                    worst, scale = max(worst, abs(v - ref)), max(scale, abs(ref))
            _le(res, "deconv", f"g{j}{jp} radial symmetry omega={om:g}", worst / scale, 1e-6)
        _le(res, "deconv", f"g12(0) omega={om:g}", abs(dc.filter_value(1, 2, om, [0, 0], n_q)), 1e-10)
        g22 = dc.filter_value(2, 2, om, [0, 0], n_q)
        _le(res, "deconv", f"g22(0) omega={om:g}", abs(g22 / (np.pi * om ** 3 / 2) - 1), 1e-8)
    rng = _rng(0)
    for m in (32, 64):
        c = ProblemConfig(n_theta=m)
        s = dc.build_symbol(c)
        f = rng.standard_normal((2 * m, m))
        g = dc.tikhonov_solve(dc.apply_normal_op(f, s, 0.1), s, 0.1)
        _le(res, "deconv", f"tikhonov_solve o normal op, pixel grid n_c={m}",
            np.linalg.norm(g - f) / np.linalg.norm(f), 1e-8)
        f = rng.standard_normal((2 * s.P, s.P))
        g = dc.tikhonov_solve(dc.apply_normal_op(f, s, 0.1, full=True), s, 0.1)
        _le(res, "deconv", f"tikhonov_solve o normal op, padded grid n_c={m}",
            np.linalg.norm(g - f) / np.linalg.norm(f), 1e-8)
    return res


def baseline_errors(alphas=(1.0, 0.1, 0.01), seeds=(11, 12, 13), n=32, noise=0.0):
    """Per-sample relative error of the regularized pseudo-inverse, one row per alpha."""
    cfg = ProblemConfig(n_theta=n)
    spec = fw.GaussianMixtureSpec(concentrated=True)
    samples = [fw.gen_dataset("gaussian", 1, cfg, spec=spec, seed=s, noise=noise)[0] for s in seeds]
    lam = np.stack([s.input for s in samples])
    rows = []
    for a in alphas:
        rec = dc.tikhonov_reconstruct(lam, cfg, a)
        row = {"alpha": a}
        for s, x in zip(samples, rec):
            row[f"seed{s.seed[0]}"] = tr.relative_error(x, s.target)
        rows.append(row)
    return rows


def suite_baseline():
    res = SuiteResult()
    rows = baseline_errors()
    res.tables["baseline"] = rows
    keys = [k for k in rows[0] if k != "alpha"]
    for k in keys:
        e = [r[k] for r in rows]
        res.add("baseline", f"error decreasing over alpha, {k}", max(np.diff(e)), 0.0,
                all(x > y for x, y in zip(e, e[1:])), " ".join(f"{v:.4g}" for v in e))
    return res


# -- gradients -------------------------------------------------------------

def random_params(cfg, net, seed=0):
    """Generic random parameters (no exact zeros, no identity layers)."""
    rng = _rng(seed)
    p = tr.init_params(cfg, net, init="random", seed=seed)
    out = {}
    for k, v in p.items():
        v = np.asarray(v, dtype=float)
        if k.startswith("cnn."):
            out[k] = np.array(rng.standard_normal(v.shape) * (0.3 / net.s) + (0.5 if v.ndim == 0 else 0.0))
        else:
            out[k] = np.array(v * (1 + 0.1 * rng.standard_normal(v.shape)))
    return out


def gradient_errors(net, entries=5, h=1e-5, n=8, seed=0):
    """Worst relative analytic vs central-difference error per parameter tensor."""
    cfg = ProblemConfig(n_theta=n)
    X, Y = fw.stack(fw.gen_dataset("gaussian", 2, cfg, seed=seed + 1))
    p = random_params(cfg, net, seed)
    pred, cache = tr.forward_pass(p, X, cfg, net)
    g = tr.backward_pass(cache, tr.loss_grad(pred, Y))
    gscale = max(np.abs(v).max() for v in g.values())
    rng = _rng(seed + 7)

    def L(q):
        return tr.loss(tr.forward_pass(q, X, cfg, net)[0], Y)

    out = {}
    for k, v in p.items():
        worst = 0.0
        for _ in range(entries):
            idx = tuple(int(rng.integers(0, s)) for s in v.shape)
            q = dict(p)
            a = v.copy()
            a[idx] += h
            q[k] = a
            lp = L(q)
            a = v.copy()
            a[idx] -= h
            q[k] = a
            lm = L(q)
            fd, an = (lp - lm) / (2 * h), g[k][idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6 * gscale))
        out[k] = worst
    return out


GRAD_NETS = {
    "uncompressed": tr.NetConfig(s=5, layers=3),
    "compressed": tr.NetConfig(s=5, layers=3, mode="compressed", r=2, n_r=2),
    "uncompressed D relu": tr.NetConfig(s=5, layers=3, form="D", relu=True),
    "compressed relu": tr.NetConfig(s=5, layers=3, mode="compressed", r=2, n_r=2, relu=True),
}


def suite_grad(nets=None):
    res = SuiteResult()
    for label, net in (nets or GRAD_NETS).items():
        errs = gradient_errors(net)
        for k, e in errs.items():
            _le(res, "grad", f"{label} {k}", e, 1e-4)
    return res


# -- Lipschitz -------------------------------------------------------------

def lipschitz_pairs(pairs=20, n=16, N=4, seed=0):
    cfg = ProblemConfig(n_theta=n)
    rng = _rng(seed)
    K0 = adj.kernel_matrix(cfg)
    B_K = 1.5 * np.linalg.norm(K0, 2)
    B_D = 1.5
    X = fw.stack(fw.gen_dataset("gaussian", N, cfg, seed=seed + 1))[0]
    B_in = np.max(np.linalg.norm(X.reshape(N, -1), axis=1))

    def draw():
        E = rng.standard_normal(K0.shape) + 1j * rng.standard_normal(K0.shape)
        K = K0 + rng.uniform(0.05, 0.5) * E * np.linalg.norm(K0, 2) / np.linalg.norm(E, 2)
        K *= min(1.0, B_K / np.linalg.norm(K, 2))
        d = adj.phase_diag(n) * rng.uniform(0.5, 1.0, n) * np.exp(1j * rng.uniform(-0.5, 0.5, n))
        return K, d * B_D

    prs = [(draw(), draw()) for _ in range(pairs)]
    return tr.lipschitz_check(prs, X, cfg, B_K, B_D, B_in)


def suite_lipschitz():
    res = SuiteResult()
    out = lipschitz_pairs()
    margin = max(l / r for l, r in out)
    res.add("lipschitz", "max lhs/rhs over 20 pairs", margin, 1.0, all(l <= r for l, r in out))
    return res


# -- training --------------------------------------------------------------

def training_smoke(n=32, n_train=100, n_test=100, steps=300, seed=0, lr=0.005, batch=50, log=None):
    # smooth data: bump widths drawn from [0.3, 1) of the room, no narrow spikes
    cfg = ProblemConfig(n_theta=n)
    spec = fw.GaussianMixtureSpec(concentrated=True)
    train_set = fw.stack(fw.gen_dataset("gaussian", n_train, cfg, spec=spec, seed=seed + 1))
    test_set = fw.stack(fw.gen_dataset("gaussian", n_test, cfg, spec=spec, seed=seed + 2))
    net = tr.NetConfig()
    params, rep = tr.train(train_set, tr.init_params(cfg, net), cfg, net, lr=lr,
                           batch=batch, steps=steps, seed=seed, test_set=test_set, log=log)
    return params, rep


def suite_train(steps=300):
    res = SuiteResult()
    _, rep = training_smoke(steps=steps)
    res.add("train", "e_a <= 0.5 initial e_a", rep.e_a / rep.e_a0, 0.5, rep.e_a <= 0.5 * rep.e_a0,
            f"e_a0={rep.e_a0:.4g} e_a={rep.e_a:.4g}")
    _le(res, "train", "e_g", rep.e_g, 0.35)
    a = training_smoke(n=16, n_train=8, n_test=4, steps=3)[0]
    b = training_smoke(n=16, n_train=8, n_test=4, steps=3)[0]
    same = all(np.array_equal(a[k], b[k]) for k in a)
    res.add("train", "deterministic given seed", float(same), 1.0, same)
    res.tables["train"] = [{"step": i, "loss": l} for i, l in enumerate(rep.losses)]
    return res


SUITES = {
    "adjoint": suite_adjoint,
    "rates": suite_rates,
    "lowrank": suite_lowrank,
    "deconv": suite_deconv,
    "baseline": suite_baseline,
    "grad": suite_grad,
    "lipschitz": suite_lipschitz,
    "train": suite_train,
}

# "all" leaves out the multi-minute training run
ALL = ("adjoint", "rates", "lowrank", "deconv", "baseline", "grad", "lipschitz")


def run_suite(name):
    t0 = time.perf_counter()
    res = SUITES[name]()
    res.wall = time.perf_counter() - t0
    return res
