"""Command-line entry point and file formats.

Subcommands: gen-data, verify, train, eval, baseline.
Exit codes: 0 success, 1 IO or data error, 2 usage error, 3 failed check.

Array files use the HSB1 container (little-endian):

    magic "HSB1" | version u32 | entry count u32
    per entry: name length u16, name bytes (utf-8), dtype u8 (1 = f64,
    2 = complex128 interleaved), ndim u8, dims u64 each, row-major payload

Every array file has a sibling plain-text manifest (same stem, suffix
".manifest") of key=value lines in sorted key order.
"""

import argparse
import csv
import os
import struct
import sys
from pathlib import Path

import numpy as np

from . import checks
from . import deconv as dc
from . import forward as fw
from . import train as tr
from .core import ConfigError, ProblemConfig, ShapeError

MAGIC = b"HSB1"
VERSION = 1
DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<c16")}
CODES = {np.dtype("f8"): 1, np.dtype("c16"): 2}


class FormatError(ValueError):
    pass


def fmt(x):
    """Floats with 17 significant digits; everything else via str."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


# -- array container -------------------------------------------------------

def write_arrays(path, arrays):
    """Write a name -> array mapping; insertion order is kept."""
    out = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, a in arrays.items():
        a = np.asarray(a)
        if a.dtype.kind in "biuf":
            a = a.astype("<f8")
        elif a.dtype.kind == "c":
            a = a.astype("<c16")
        else:
            raise FormatError(f"array {name!r}: unsupported dtype {a.dtype}")
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack("<BB", CODES[np.dtype(a.dtype.newbyteorder("="))], a.ndim))
        out.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        out.append(np.ascontiguousarray(a).tobytes())
    Path(path).write_bytes(b"".join(out))


def read_arrays(path):
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise FormatError(f"{path}: not an HSB1 container")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    pos, out = 12, {}
    try:
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + ln].decode("utf-8")
            pos += ln
            code, ndim = struct.unpack_from("<BB", buf, pos)
            pos += 2
            if code not in DTYPES:
                raise FormatError(f"{path}: array {name!r} has unknown dtype code {code}")
            shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
            pos += 8 * ndim
            dt = DTYPES[code]
            size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + size > len(buf):
                raise FormatError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(buf, dtype=dt, count=size // dt.itemsize, offset=pos).reshape(shape).copy()
            pos += size
    except struct.error as e:
        raise FormatError(f"{path}: truncated header ({e})") from None
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return out


# -- manifest --------------------------------------------------------------

class Manifest(dict):
    """String key=value pairs; serialized in sorted key order."""

    def serialize(self):
        return "".join(f"{k}={self[k]}\n" for k in sorted(self))

    @classmethod
    def parse(cls, text):
        m = cls()
        for no, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"manifest line {no}: expected key=value")
            k, v = line.split("=", 1)
            m[k.strip()] = v.strip()
        return m

    def set(self, **kw):
        for k, v in kw.items():
            self[k] = fmt(v)
        return self

    def get_float(self, k, default=None):
        return float(self[k]) if k in self else default

    def get_int(self, k, default=None):
        return int(self[k]) if k in self else default

    def get_bool(self, k, default=False):
        return self[k] == "true" if k in self else default

    def write(self, path):
        Path(path).write_text(self.serialize(), encoding="utf-8")

    @classmethod
    def read(cls, path):
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def manifest_path(path):
    return Path(path).with_suffix(".manifest")


def config_to_manifest(cfg, m=None):
    m = Manifest() if m is None else m
    return m.set(omega1=float(cfg.omega1), omega2=float(cfg.omega2), n_theta=cfg.n_theta,
                 n_c=cfg.n_c, n_rho=cfg.n_rho, alpha=float(cfg.alpha))


def config_from_manifest(m):
    try:
        return ProblemConfig(omega1=m.get_float("omega1"), omega2=m.get_float("omega2"),
                             n_theta=m.get_int("n_theta"), n_c=m.get_int("n_c"),
                             n_rho=m.get_int("n_rho"), alpha=m.get_float("alpha", 0.1))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest does not describe a configuration: {e}") from None


def load_dataset(path):
    arrays = read_arrays(path)
    m = Manifest.read(manifest_path(path))
    cfg = config_from_manifest(m)
    if "inputs" not in arrays or "targets" not in arrays:
        raise FormatError(f"{path}: dataset needs arrays 'inputs' and 'targets'")
    X, Y = arrays["inputs"], arrays["targets"]
    if len(X) == 0 or len(X) != len(Y):
        raise FormatError(f"{path}: empty or inconsistent dataset")
    if X.shape[1:] != (2 * cfg.n_theta, cfg.n_theta) or Y.shape[1:] != (2 * cfg.n_c, cfg.n_c):
        raise ShapeError(f"{path}: array shapes disagree with the manifest")
    return X, Y, cfg, m


# -- network configuration in manifests ------------------------------------

def net_to_manifest(net, m):
    return m.set(mode=net.mode, form=net.form, s=net.s, layers=net.layers, relu=net.relu,
                 r=net.r, n_r=net.n_r, freeze=",".join(net.freeze))


def net_from_manifest(m):
    freeze = tuple(x for x in m.get("freeze", "").split(",") if x)
    return tr.NetConfig(mode=m["mode"], form=m["form"], s=m.get_int("s"), layers=m.get_int("layers"),
                        relu=m.get_bool("relu"), r=m.get_int("r"), n_r=m.get_int("n_r"), freeze=freeze)


def load_checkpoint(path):
    params = read_arrays(path)
    m = Manifest.read(manifest_path(path))
    try:
        net = net_from_manifest(m)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{path}: manifest does not describe a network: {e}") from None
    return params, config_from_manifest(m), net, m


# -- CSV and images --------------------------------------------------------

def write_csv(path, rows, columns=None):
    columns = columns or list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])


def write_pgm(path, img):
    """8-bit binary graymap scaled to the image's own min/max; returns (min, max)."""
    img = np.asarray(img, dtype=float)
    lo, hi = float(img.min()), float(img.max())
    span = hi - lo if hi > lo else 1.0
    q = np.rint((img - lo) / span * 255).astype(np.uint8)
    h, w = q.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes())
    return lo, hi


def emit_images(out_dir, idx, target, pred, rows):
    """Six panels per sample: gamma and eta, each exact / network / |difference|."""
    n = target.shape[-1]
    for label, sl in (("gamma", slice(0, n)), ("eta", slice(n, 2 * n))):
        t, p = target[sl], pred[sl]
        # row index = x, column index = y; transpose so y runs up the page
        for kind, img in (("exact", t), ("nn", p), ("absdiff", np.abs(t - p))):
            name = f"sample{idx:04d}_{label}_{kind}.pgm"
            lo, hi = write_pgm(Path(out_dir) / name, img.T[::-1])
            rows.append({"file": name, "sample": idx, "field": label, "panel": kind, "min": lo, "max": hi})


def metric_rows(preds, targets, kinds=None):
    rows = []
    for k, (p, t) in enumerate(zip(preds, targets)):
        rows.append({"sample": k, "kind": kinds[k] if kinds else "",
                     "rel_error": tr.relative_error(p, t)})
    rows.append({"sample": "aggregate", "kind": "", "rel_error": tr.relative_error(preds, targets)})
    return rows


# -- commands --------------------------------------------------------------

def cmd_gen_data(a):
    cfg = ProblemConfig(omega1=a.omega1, omega2=a.omega2, n_theta=a.n_theta, n_c=a.n_c)
    spec = fw.GaussianMixtureSpec(J=a.J_gauss, concentrated=a.concentrated)
    data = fw.gen_dataset(a.kind, a.n, cfg, spec=spec, seed=a.seed, fine=a.fine_grid,
                          noise=a.noise, tspec=fw.TrigMixtureSpec(J=a.J_trig))
    X, Y = fw.stack(data)
    write_arrays(a.out, {"inputs": X, "targets": Y})
    m = config_to_manifest(cfg)
    m.set(kind=a.kind, kinds=",".join(s.kind for s in data), n=a.n, seed=a.seed,
          fine_grid=a.fine_grid, noise=float(a.noise), J_gauss=a.J_gauss, J_trig=a.J_trig,
          concentrated=a.concentrated)
    m.write(manifest_path(a.out))
    print(f"wrote {a.n} samples to {a.out}")
    return 0


def _print_check(c):
    status = "PASS" if c.passed else "FAIL"
    extra = f"  ({c.detail})" if c.detail else ""
    print(f"{status} [{c.suite}] {c.name}: value={fmt(c.value)} threshold={fmt(c.threshold)}{extra}")


def cmd_verify(a):
    names = checks.ALL if a.suite == "all" else (a.suite,)
    ok = True
    out_dir = Path(a.csv_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        res = checks.run_suite(name)
        for c in res.checks:
            _print_check(c)
        for tname, rows in res.tables.items():
            write_csv(out_dir / f"{tname}.csv", rows)
        print(f"suite {name}: {'pass' if res.passed else 'FAIL'} in {res.wall:.1f} s")
        ok = ok and res.passed
    return 0 if ok else 3


def cmd_train(a):
    X, Y, cfg, _ = load_dataset(a.data)
    test = None
    if a.val:
        Xv, Yv, cfg_v, _ = load_dataset(a.val)
        if cfg_v != cfg:
            raise ShapeError("validation set configuration differs from the training set")
        test = (Xv, Yv)
    net = tr.NetConfig(mode=a.mode, form=a.form, s=a.s, layers=a.layers, relu=a.relu,
                       r=a.r, n_r=a.n_r, freeze=("C",) if a.freeze_c else ())
    p0 = tr.init_params(cfg, net, init=a.init, seed=a.seed)
    log = None
    if a.verbose:
        def log(step, value):
            print(f"step {step} loss {fmt(value)}")
    params, rep = tr.train((X, Y), p0, cfg, net, lr=a.lr, batch=a.batch, steps=a.steps,
                           seed=a.seed, test_set=test, log=log)
    write_arrays(a.out, params)
    m = net_to_manifest(net, config_to_manifest(cfg))
    m.set(steps=rep.steps, seed=a.seed, lr=float(a.lr), batch=a.batch, init=a.init)
    m.write(manifest_path(a.out))
    stem = Path(a.out).with_suffix("")
    write_csv(f"{stem}.loss.csv", [{"step": i, "loss": v} for i, v in enumerate(rep.losses)])
    write_csv(f"{stem}.report.csv", [{"e_a0": rep.e_a0, "e_a": rep.e_a, "e_g": rep.e_g,
                                      "steps": rep.steps, "seed": rep.seed}])
    print(f"e_a0={fmt(rep.e_a0)} e_a={fmt(rep.e_a)} e_g={fmt(rep.e_g)}")
    return 0


def _kinds(m, N):
    k = m.get("kinds", "").split(",")
    return k if len(k) == N else None


def cmd_eval(a):
    params, cfg, net, _ = load_checkpoint(a.checkpoint)
    X, Y, cfg_d, md = load_dataset(a.data)
    if (cfg_d.n_theta, cfg_d.n_c, cfg_d.omegas) != (cfg.n_theta, cfg.n_c, cfg.omegas):
        raise ShapeError("checkpoint and data were built for different configurations")
    pred = tr.predict(params, X, cfg, net)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = metric_rows(pred, Y, _kinds(md, len(X)))
    write_csv(out / "metrics.csv", rows)
    if a.emit_images:
        img_rows = []
        for k in range(len(X)):
            emit_images(out, k, Y[k], pred[k], img_rows)
        write_csv(out / "images.csv", img_rows)
    print(f"aggregate relative error {fmt(rows[-1]['rel_error'])}")
    return 0


def cmd_baseline(a):
    X, Y, cfg, md = load_dataset(a.data)
    kinds = _kinds(md, len(X))
    rows = []
    for alpha in a.alpha:
        rec = dc.tikhonov_reconstruct(X, cfg, alpha)
        for r in metric_rows(rec, Y, kinds):
            rows.append({"alpha": alpha, **r})
        print(f"alpha={fmt(alpha)} aggregate relative error {fmt(rows[-1]['rel_error'])}")
    write_csv(a.out, rows, ["alpha", "sample", "kind", "rel_error"])
    return 0


# -- argument parsing ------------------------------------------------------

def _alphas(text):
    try:
        vals = [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("alpha values must be positive")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="hsbnet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="synthesize a Born far-field dataset")
    g.add_argument("--kind", choices=("gaussian", "trig", "mixed"), default="gaussian")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--n-theta", type=int, default=32)
    g.add_argument("--n-c", type=int, default=None)
    g.add_argument("--omega1", type=float, default=2.5)
    g.add_argument("--omega2", type=float, default=5.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--J-gauss", type=int, default=5)
    g.add_argument("--J-trig", type=int, default=20)
    g.add_argument("--concentrated", action="store_true")
    g.add_argument("--fine-grid", action="store_true", help="synthesize data on a 2x finer pixel grid")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    v = sub.add_parser("verify", help="run numerical verification suites")
    v.add_argument("--suite", choices=("all",) + tuple(checks.SUITES), default="all")
    v.add_argument("--csv-dir", default=".")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("train", help="train the network on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--val", default=None)
    t.add_argument("--steps", type=int, default=300)
    t.add_argument("--lr", type=float, default=0.005)
    t.add_argument("--batch", type=int, default=100)
    t.add_argument("--mode", choices=("uncompressed", "compressed"), default="uncompressed")
    t.add_argument("--form", choices=("C", "D"), default="C")
    t.add_argument("--init", choices=("exact", "random"), default="exact")
    t.add_argument("--s", type=int, default=9)
    t.add_argument("--layers", type=int, default=8)
    t.add_argument("--relu", action="store_true")
    t.add_argument("--r", type=int, default=4)
    t.add_argument("--n-r", type=int, default=4)
    t.add_argument("--freeze-c", action="store_true")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--verbose", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--emit-images", action="store_true")
    e.add_argument("--out-dir", default=".")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("baseline", help="regularized pseudo-inverse reconstruction")
    b.add_argument("--data", required=True)
    b.add_argument("--alpha", type=_alphas, default=[0.1], help="comma-separated list")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.func(a)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, FormatError, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
