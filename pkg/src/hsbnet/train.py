"""Trainable network h = psi o psi0 o phi, hand-written reverse mode, and Adam.

Parameters live in a flat dict of float64 arrays:

    K_cos, K_sin              (n_theta, n_rho), K = K_cos - i*K_sin
    C                         (n_theta,) first column of the circulant cosine matrix
    D_re, D_im                (n_theta,) phase diagonal (D-form instead of C)
    scales                    (4,) channel scales [w1 b1, w1 b2, w2 b1, w2 b2]
    cnn.layer{i}.filter{j}    (s, s), j = 0..5
    cnn.layer{i}.scale        () residual scale
    bf.U_re, bf.U_im, ...     butterfly factors replacing K_cos/K_sin (compressed)

CNN layer i maps (top, bot) to

    top' = scale*top + sum_b [f_{3b} * top + f_{3b+2} * bot]
    bot' = scale*bot + sum_b [f_{3b+1} * bot + f_{3b+2} * top]

for branches b = 0, 1, with zero-padded 'same' convolutions centred at s//2.

Complex gradients use g = dL/dRe + i*dL/dIm.
"""

from dataclasses import dataclass, field
import time

import numpy as np
from scipy import fft as sfft

from . import adjoint as adj
from .butterfly import LowRankKernelSpec, block_truncate
from .core import ConfigError, ShapeError, StateError, all_shifts, freq_select_map, resampler
from .forward import kappa, rng_for

N_FILTERS = 6


# -- network description ---------------------------------------------------

@dataclass(frozen=True)
class NetConfig:
    mode: str = "uncompressed"       # or "compressed"
    form: str = "C"                  # or "D"
    s: int = 9
    layers: int = 8
    relu: bool = False
    r: int = 4
    n_r: int = 4
    freeze: tuple = ()

    def __post_init__(self):
        if self.mode not in ("uncompressed", "compressed"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.form not in ("C", "D"):
            raise ConfigError(f"unknown form {self.form!r}")
        if self.s < 1 or self.layers < 1:
            raise ConfigError("filter size and layer count must be positive")


def filter_name(i, j):
    return f"cnn.layer{i}.filter{j}"


def scale_name(i):
    return f"cnn.layer{i}.scale"


def init_params(cfg, net, init="exact", seed=0):
    """Exact-kernel warm start (default) or random init for the phi stage.

    The CNN always starts as the identity: residual scale 1/2 plus 1/4-impulse
    filters on the four same-channel slots.
    """
    n, nr = cfg.n_theta, cfg.n_rho
    p = {}
    if init == "exact":
        Kc, Ks = adj.kernel_parts(cfg)
    elif init == "random":
        rng = rng_for(seed, 0, 5)
        Kc, Ks = rng.standard_normal((2, n, nr)) / np.sqrt(n)
    else:
        raise ConfigError(f"unknown init {init!r}")
    if net.mode == "uncompressed":
        p["K_cos"], p["K_sin"] = Kc, Ks
    else:
        _, bf = block_truncate(Kc - 1j * Ks, LowRankKernelSpec(net.r, net.n_r))
        for name, arr in (("U", bf.U), ("M", bf.S), ("V", bf.V)):
            p[f"bf.{name}_re"] = arr.real.copy()
            p[f"bf.{name}_im"] = arr.imag.copy()
    if net.form == "C":
        p["C"] = adj.cosine_matrix(n)[:, 0].copy()
    else:
        d = adj.phase_diag(n)
        p["D_re"], p["D_im"] = d.real.copy(), d.imag.copy()
    p["scales"] = adj.default_scales(cfg)
    imp = np.zeros((net.s, net.s))
    imp[net.s // 2, net.s // 2] = 0.25
    for i in range(net.layers):
        for j in range(N_FILTERS):
            p[filter_name(i, j)] = imp.copy() if j % 3 != 2 else np.zeros((net.s, net.s))
        p[scale_name(i)] = np.array(0.5)
    return p


def load_exact_cnn(params, cfg, net, alpha, bank, g2):
    """Set layer 0 to psi1, layer 1 to psi2, remaining layers to identity.

    Needs filters of size 2*n_c. Bank kernels include the pixel area h^2,
    which the CNN convolution does not.
    """
    n_c = cfg.n_c
    if net.s != 2 * n_c or net.layers < 2:
        raise ConfigError("exact CNN needs s = 2*n_c and at least two layers")
    h2 = (2.0 / n_c) ** 2
    p = dict(params)
    for w in range(2):
        p[filter_name(0, 3 * w)] = h2 * bank[(2, 2, w)]
        p[filter_name(0, 3 * w + 1)] = h2 * bank[(1, 1, w)]
        p[filter_name(0, 3 * w + 2)] = -h2 * bank[(1, 2, w)]
    p[scale_name(0)] = np.array(float(alpha))
    zero = np.zeros((net.s, net.s))
    p[filter_name(1, 0)] = p[filter_name(1, 1)] = -h2 * g2
    for j in (2, 3, 4, 5):
        p[filter_name(1, j)] = zero.copy()
    p[scale_name(1)] = np.array(alpha ** -2)
    imp = np.zeros((net.s, net.s))
    imp[net.s // 2, net.s // 2] = 0.25
    for i in range(2, net.layers):
        for j in range(N_FILTERS):
            p[filter_name(i, j)] = imp.copy() if j % 3 != 2 else zero.copy()
        p[scale_name(i)] = np.array(0.5)
    return p


def butterfly_kernel(params):
    U = params["bf.U_re"] + 1j * params["bf.U_im"]
    S = params["bf.M_re"] + 1j * params["bf.M_im"]
    V = params["bf.V_re"] + 1j * params["bf.V_im"]
    return U, S, V


def kernel_of(params, net):
    if net.mode == "uncompressed":
        return params["K_cos"] - 1j * params["K_sin"]
    U, S, V = butterfly_kernel(params)
    n_r, a = U.shape[:2]
    return np.einsum("iajk,ijk,jikb->iajb", U, S, V).reshape(n_r * a, -1)


def _gamma_weight(params, net, S):
    """W o S for the gamma branch (circulant C or phase diagonal D)."""
    if net.form == "C":
        return adj.circulant(params["C"]) * S
    d = params["D_re"] + 1j * params["D_im"]
    return adj.cosine_via_phase(S, d)


# -- convolution helpers ---------------------------------------------------

def _fft_len(n, s):
    return sfft.next_fast_len(n + s - 1, real=True)


def _spec(x, L):
    return sfft.rfft2(x, s=(L, L))


def _embed_at(x, L, off):
    out = np.zeros(x.shape[:-2] + (L, L))
    n = x.shape[-1]
    out[..., off:off + n, off:off + n] = x
    return out


# -- forward / backward ----------------------------------------------------

@dataclass
class Cache:
    cfg: object
    net: NetConfig
    params: dict
    lam: np.ndarray
    z: list
    acts: list
    masks: list


def _quad_real(A, K):
    # Re diag(K^H A K) over leading axes, as one large GEMM
    n = K.shape[0]
    AK = (A.reshape(-1, n) @ K).reshape(A.shape[:-1] + (K.shape[1],))
    return np.sum(np.conj(K) * AK, axis=-2).real


def _phi_forward(params, net, cfg, lam, K):
    n = cfg.n_theta
    rot = adj.PHASE * lam
    z = []
    P0 = np.zeros(lam.shape[:-2] + (2 * n, cfg.n_out))
    for w, om in enumerate(cfg.omegas):
        S = all_shifts(rot[..., w * n:(w + 1) * n, :])
        cols = freq_select_map(om, cfg)
        zw = []
        for b, A in enumerate((_gamma_weight(params, net, S), S)):
            zz = _quad_real(A, K)
            zw.append(zz)
            P0[..., b * n:(b + 1) * n, :] += params["scales"][2 * w + b] * zz[..., cols]
        z.append(zw)
    return P0, z


def _phi_backward(params, net, cfg, lam, K, z, gP0, grads):
    n, nr = cfg.n_theta, cfg.n_rho
    rot = adj.PHASE * lam
    gK = np.zeros_like(K)
    gsc = np.zeros(4)
    gW = np.zeros((n, n), dtype=complex)
    for w, om in enumerate(cfg.omegas):
        S = all_shifts(rot[..., w * n:(w + 1) * n, :]).reshape(-1, n * n)
        Sr, Si = np.ascontiguousarray(S.real), np.ascontiguousarray(S.imag)
        cols = freq_select_map(om, cfg)
        for b in range(2):
            g_out = gP0[..., b * n:(b + 1) * n, :]
            gsc[2 * w + b] = np.sum(g_out * z[w][b][..., cols])
            G = np.zeros(g_out.shape[:-1] + (nr,))
            G[..., cols] = params["scales"][2 * w + b] * g_out
            G = G.reshape(-1, nr)
            # T[i, j, n] = sum over (sample, shift) of S[., i, j] * G[., n]
            T = (Sr.T @ G + 1j * (Si.T @ G)).reshape(n, n, nr)
            if b == 0:
                if net.form == "C":
                    AT = adj.circulant(params["C"])[:, :, None] * T
                else:
                    d = params["D_re"] + 1j * params["D_im"]
                    AT = adj.cosine_via_phase(T.transpose(2, 0, 1), d).transpose(1, 2, 0)
                # d z / d W_ij = Re sum_n conj(K_in) K_jn T_ijn (complex form kept for D)
                gW += np.sum(np.conj(K)[:, None, :] * K[None, :, :] * T, axis=-1)
            else:
                AT = T
            gK += np.sum(AT * K[None, :, :], axis=1) + np.sum(np.conj(AT) * K[:, None, :], axis=0)
    grads["scales"] = gsc
    if net.form == "C":
        gC = gW.real
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        grads["C"] = np.bincount(idx.ravel(), weights=gC.ravel(), minlength=n)
    else:
        d = params["D_re"] + 1j * params["D_im"]
        Tm = gW
        gd = -0.5 * (Tm @ d + np.conj(Tm @ np.conj(d)) + np.conj(Tm.T @ np.conj(d)) + Tm.T @ d)
        grads["D_re"], grads["D_im"] = gd.real, gd.imag
    return gK


def _kernel_backward(params, net, gK, grads):
    if net.mode == "uncompressed":
        grads["K_cos"] = gK.real
        grads["K_sin"] = -gK.imag
        return
    U, S, V = butterfly_kernel(params)
    n_r, a, _, r = U.shape
    b = V.shape[-1]
    g = gK.reshape(n_r, a, n_r, b)
    gU = np.einsum("iajb,ijk,jikb->iajk", g, np.conj(S), np.conj(V))
    gS = np.einsum("iajb,iajk,jikb->ijk", g, np.conj(U), np.conj(V))
    gV = np.einsum("iajb,iajk,ijk->jikb", g, np.conj(U), np.conj(S))
    for name, arr in (("U", gU), ("M", gS), ("V", gV)):
        grads[f"bf.{name}_re"] = arr.real
        grads[f"bf.{name}_im"] = arr.imag


def _cnn_forward(params, net, x):
    n = x.shape[-1]
    L = _fft_len(n, net.s)
    c = net.s // 2
    acts, masks = [], []
    top, bot = x[..., :n, :], x[..., n:, :]
    for i in range(net.layers):
        acts.append((top, bot))
        F = [_spec(params[filter_name(i, j)], L) for j in range(N_FILTERS)]
        Xt, Xb = _spec(top, L), _spec(bot, L)
        Yt = Xt * (F[0] + F[3]) + Xb * (F[2] + F[5])
        Yb = Xb * (F[1] + F[4]) + Xt * (F[2] + F[5])
        sc = float(params[scale_name(i)])
        yt = sc * top + sfft.irfft2(Yt, s=(L, L))[..., c:c + n, c:c + n]
        yb = sc * bot + sfft.irfft2(Yb, s=(L, L))[..., c:c + n, c:c + n]
        if net.relu and i < net.layers - 1:
            mt, mb = yt > 0, yb > 0
            masks.append((mt, mb))
            yt, yb = yt * mt, yb * mb
        else:
            masks.append(None)
        top, bot = yt, yb
    return np.concatenate([top, bot], axis=-2), acts, masks


def _cnn_backward(params, net, acts, masks, g, grads):
    n = g.shape[-1]
    L = _fft_len(n, net.s)
    c, s = net.s // 2, net.s
    gt, gb = g[..., :n, :], g[..., n:, :]
    for i in reversed(range(net.layers)):
        if masks[i] is not None:
            gt, gb = gt * masks[i][0], gb * masks[i][1]
        top, bot = acts[i]
        sc = float(params[scale_name(i)])
        grads[scale_name(i)] = np.array(np.sum(gt * top) + np.sum(gb * bot))
        F = [_spec(params[filter_name(i, j)], L) for j in range(N_FILTERS)]
        Gt, Gb = _spec(_embed_at(gt, L, c), L), _spec(_embed_at(gb, L, c), L)
        Xt, Xb = np.conj(_spec(top, L)), np.conj(_spec(bot, L))
        # filter gradients: correlation of the output gradient with the input
        red = lambda Z: sfft.irfft2(Z.reshape((-1,) + Z.shape[-2:]).sum(axis=0), s=(L, L))[:s, :s]
        g_tt, g_bb = red(Gt * Xt), red(Gb * Xb)
        g_x = red(Gt * Xb) + red(Gb * Xt)
        for bch in range(2):
            grads[filter_name(i, 3 * bch)] = g_tt
            grads[filter_name(i, 3 * bch + 1)] = g_bb
            grads[filter_name(i, 3 * bch + 2)] = g_x
        Ft, Fb, Fx = (np.conj(F[0] + F[3]), np.conj(F[1] + F[4]), np.conj(F[2] + F[5]))
        nt = sc * gt + sfft.irfft2(Gt * Ft + Gb * Fx, s=(L, L))[..., :n, :n]
        nb = sc * gb + sfft.irfft2(Gb * Fb + Gt * Fx, s=(L, L))[..., :n, :n]
        gt, gb = nt, nb
    return np.concatenate([gt, gb], axis=-2)


def forward_pass(params, lam, cfg, net):
    """Prediction (..., 2n_c, n_c) and the cache needed by backward_pass."""
    lam = np.asarray(lam)
    if lam.shape[-2:] != (2 * cfg.n_theta, cfg.n_theta):
        raise ShapeError("far-field shape does not match the configuration")
    K = kernel_of(params, net)
    P0, z = _phi_forward(params, net, cfg, lam, K)
    x = resampler(cfg).apply(P0)
    pred, acts, masks = _cnn_forward(params, net, x)
    return pred, Cache(cfg, net, params, lam, z, acts, masks)


def backward_pass(cache, gpred):
    """Gradients of sum(gpred * pred) with respect to every parameter."""
    if cache is None or not isinstance(cache, Cache):
        raise StateError("backward_pass needs the cache from forward_pass")
    cfg, net, params = cache.cfg, cache.net, cache.params
    grads = {}
    gx = _cnn_backward(params, net, cache.acts, cache.masks, np.asarray(gpred, dtype=float), grads)
    gP0 = resampler(cfg).apply_T(gx)
    K = kernel_of(params, net)
    gK = _phi_backward(params, net, cfg, cache.lam, K, cache.z, gP0, grads)
    _kernel_backward(params, net, gK, grads)
    for name in net.freeze:
        grads[name] = np.zeros_like(params[name])
    return grads


def predict(params, lam, cfg, net, chunk=50):
    lam = np.asarray(lam)
    if lam.ndim == 2:
        return forward_pass(params, lam, cfg, net)[0]
    return np.concatenate([forward_pass(params, lam[a:a + chunk], cfg, net)[0]
                           for a in range(0, len(lam), chunk)])


# -- loss and metrics ------------------------------------------------------

def loss(pred, target):
    """Sum over samples of the Frobenius distance."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError("prediction and target shapes differ")
    d = (pred - target).reshape(-1, *pred.shape[-2:]) if pred.ndim > 2 else (pred - target)[None]
    return float(np.sum(np.sqrt(np.sum(d * d, axis=(-2, -1)))))


def loss_grad(pred, target):
    d = pred - target
    nrm = np.sqrt(np.sum(d * d, axis=(-2, -1), keepdims=True))
    return np.divide(d, nrm, out=np.zeros_like(d), where=nrm > 0)


def relative_error(pred, target):
    """Aggregate ratio sum ||pred - target||_F / sum ||target||_F."""
    den = loss(np.zeros_like(target), target)
    if den == 0:
        raise ConfigError("all targets are zero")
    return loss(pred, target) / den


def generalization_gap(params, train_set, test_set, cfg, net):
    """(e_a, e_g, e_g - e_a) on (inputs, targets) pairs."""
    for s in (train_set, test_set):
        if s is None or len(s[0]) == 0:
            raise ConfigError("empty dataset")
    ea = relative_error(predict(params, train_set[0], cfg, net), train_set[1])
    eg = relative_error(predict(params, test_set[0], cfg, net), test_set[1])
    return ea, eg, eg - ea


# -- optimizer -------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, lr=0.005):
    return AdamState({k: np.zeros_like(v) for k, v in params.items()},
                     {k: np.zeros_like(v) for k, v in params.items()}, 0, lr)


def adam_step(params, grads, st):
    st.t += 1
    b1, b2 = st.beta1, st.beta2
    out = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            out[k] = p
            continue
        st.m[k] = b1 * st.m[k] + (1 - b1) * g
        st.v[k] = b2 * st.v[k] + (1 - b2) * g * g
        mh = st.m[k] / (1 - b1 ** st.t)
        vh = st.v[k] / (1 - b2 ** st.t)
        out[k] = p - st.lr * mh / (np.sqrt(vh) + st.eps)
    return out


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    e_a0: float = float("nan")
    e_a: float = float("nan")
    e_g: float = float("nan")
    wall: float = 0.0
    seed: int = 0
    steps: int = 0


def train(train_set, params0, cfg, net, lr=0.005, batch=100, steps=300, seed=0,
          test_set=None, log=None):
    """Adam on the summed Frobenius loss; returns (params, TrainReport)."""
    X, Y = train_set
    N = len(X)
    if N == 0:
        raise ConfigError("empty training set")
    t0 = time.perf_counter()
    params = {k: np.array(v, dtype=float) for k, v in params0.items()}
    st = adam_init(params, lr)
    rep = TrainReport(seed=seed)
    rep.e_a0 = relative_error(predict(params, X, cfg, net), Y)
    batch = min(batch, N)
    order, epoch, pos = None, 0, N
    for step in range(steps):
        if pos + batch > N:
            order = rng_for(seed, epoch, 3).permutation(N)
            epoch += 1
            pos = 0
        idx = np.sort(order[pos:pos + batch])
        pos += batch
        pred, cache = forward_pass(params, X[idx], cfg, net)
        rep.losses.append(loss(pred, Y[idx]))
        grads = backward_pass(cache, loss_grad(pred, Y[idx]))
        if lr != 0:
            params = adam_step(params, grads, st)
        if log:
            log(step, rep.losses[-1])
    rep.steps = steps
    rep.e_a = relative_error(predict(params, X, cfg, net), Y)
    if test_set is not None:
        rep.e_g = relative_error(predict(params, test_set[0], cfg, net), test_set[1])
    rep.wall = time.perf_counter() - t0
    return params, rep


def param_norms(params, net):
    """Spectral norms used by the Lipschitz bounds."""
    out = {}
    if net.mode == "uncompressed":
        out["B_K"] = np.linalg.norm(params["K_cos"] - 1j * params["K_sin"], 2)
    if net.form == "D":
        out["B_D"] = np.max(np.abs(params["D_re"] + 1j * params["D_im"]))
    return out


# -- Lipschitz bounds for the phi stage -----------------------------------

def _kappa_sum(cfg):
    return sum(abs(kappa(om)) for om in cfg.omegas)


def lipschitz_constants(cfg, B_K, B_D, B_in):
    base = 8 * np.pi ** 2 * _kappa_sum(cfg) * B_in
    return base * np.sqrt(B_D ** 4 + 1) * B_K, base * B_D * B_K ** 2


def lipschitz_check(pairs, inputs, cfg, B_K, B_D, B_in):
    """Both sides of the phi0 Lipschitz inequality for each ((K, d), (K~, d~)) pair.

    d is the phase diagonal. Returns a list of (lhs, rhs) and raises when a
    parameter or input lies outside the declared balls.
    """
    inputs = np.asarray(inputs)
    if np.max(np.linalg.norm(inputs.reshape(len(inputs), -1), axis=1)) > B_in * (1 + 1e-12):
        raise ConfigError("input outside the B_in ball")
    cK, cD = lipschitz_constants(cfg, B_K, B_D, B_in)
    N = len(inputs)
    out = []
    for (K, d), (Kt, dt) in pairs:
        for M in (K, Kt):
            if np.linalg.norm(M, 2) > B_K * (1 + 1e-12):
                raise ConfigError("kernel outside the B_K ball")
        for v in (d, dt):
            if np.max(np.abs(v)) > B_D * (1 + 1e-12):
                raise ConfigError("phase diagonal outside the B_D ball")
        a = adj.phi0_complex(inputs, K, cfg, d=d)
        b = adj.phi0_complex(inputs, Kt, cfg, d=dt)
        lhs = np.sqrt(np.sum(np.abs(a - b) ** 2))
        dK = np.linalg.norm(K - Kt, 2)
        dD = np.max(np.abs(d - dt))
        rhs = (cK * dK + cD * dD) * cfg.n_c ** -1.5 * np.sqrt(N)
        out.append((lhs, rhs))
    return out


def lipschitz_check_compressed(pairs, inputs, cfg, B_U, B_M, B_V, B_D, B_in):
    """Compressed analogue; each parameter is (ButterflyFactor, d)."""
    from .butterfly import phi1_apply  # noqa: F401  (same graph as phi0 with K_r)
    inputs = np.asarray(inputs)
    base = 8 * np.pi ** 2 * _kappa_sum(cfg) * B_in
    cKr = base * np.sqrt(B_D ** 4 + 1) * B_U * B_M * B_V
    cU, cM, cV = cKr * B_M * B_V, cKr * B_U * B_V, cKr * B_U * B_M
    cDr = base * B_D * (B_U * B_M * B_V) ** 2
    N = len(inputs)
    out = []
    for (bf, d), (bft, dt) in pairs:
        for f in (bf, bft):
            if (np.linalg.norm(f.U_dense(), 2) > B_U * (1 + 1e-12)
                    or np.linalg.norm(f.M_dense(), 2) > B_M * (1 + 1e-12)
                    or np.linalg.norm(f.V_dense(), 2) > B_V * (1 + 1e-12)):
                raise ConfigError("butterfly factor outside its norm ball")
        a = adj.phi0_complex(inputs, bf, cfg, d=d)
        b = adj.phi0_complex(inputs, bft, cfg, d=dt)
        lhs = np.sqrt(np.sum(np.abs(a - b) ** 2))
        rhs = (cU * np.linalg.norm(bf.U_dense() - bft.U_dense(), 2)
               + cM * np.linalg.norm(bf.M_dense() - bft.M_dense(), 2)
               + cV * np.linalg.norm(bf.V_dense() - bft.V_dense(), 2)
               + cDr * np.max(np.abs(d - dt))) * cfg.n_c ** -1.5 * np.sqrt(N)
        out.append((lhs, rhs))
    return out
