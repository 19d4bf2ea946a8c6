"""Compare the compiled kernels with the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Times gather/scatter on the polar-to-pixel resampler and the Jacobi SVD on
kernel-matrix blocks, and checks that both backends agree.
"""

import argparse
import timeit

import numpy as np

from hsbnet import _pure
from hsbnet.adjoint import kernel_matrix
from hsbnet.core import ProblemConfig, resampler

try:
    from hsbnet import _ckernels
except ImportError:
    _ckernels = None


def cases():
    for n in (32, 64, 128):
        cfg = ProblemConfig(n_theta=n)
        R = resampler(cfg)
        rng = np.random.default_rng(n)
        P = rng.standard_normal((100, n * cfg.n_out))
        X = rng.standard_normal((100, n * n))
        yield f"gather n={n} batch=100", lambda m, P=P, R=R: m.gather(P, R.idx, R.w)
        yield f"scatter n={n} batch=100", lambda m, X=X, R=R, k=n * cfg.n_out: m.scatter(X, R.idx, R.w, k)
    for n, nr in ((32, 4), (64, 4), (64, 2)):
        cfg = ProblemConfig(n_theta=n)
        K = kernel_matrix(cfg)
        a, b = n // nr, cfg.n_rho // nr
        blk = np.ascontiguousarray(K[:a, :b])
        yield f"jacobi_svd block {a}x{b}", lambda m, blk=blk: m.jacobi_svd(blk)[:3]


def agree(x, y):
    if isinstance(x, tuple):
        # singular vectors are unique up to phase; compare the reconstruction
        return max(np.abs((x[0] * x[1]) @ x[2] - (y[0] * y[1]) @ y[2]).max(), np.abs(x[1] - y[1]).max())
    return np.abs(x - y).max()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return
    print(f"{'case':32s} {'pure ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in cases():
        tp = min(timeit.repeat(lambda: fn(_pure), number=1, repeat=a.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=a.repeat)) * 1e3
        d = agree(fn(_pure), fn(_ckernels))
        print(f"{name:32s} {tp:10.3f} {tc:10.3f} {tp / tc:8.2f} {d:10.2e}")


if __name__ == "__main__":
    main()
