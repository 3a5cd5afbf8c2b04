"""Command-line interface and experiment runner.

Moment/measure subcommands print to standard output.  ``fig-*``
experiments write ``results.csv``, ``config.echo`` and per-experiment CSV
files into ``--out``; every CSV starts with a ``#`` line carrying the
configuration hash.  Reruns with the same configuration and seed produce
byte-identical CSVs regardless of ``--jobs``.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import math
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import closedform as cf
from . import estimators as est
from . import freeconv as fc
from . import rmt
from .errors import FreeDeconvError, ParseError
from .measures import (AtomicMeasure, DensityCurve, MomentSequence, mp_density, moments_of,
                       sqrt_edge_extent)

DEFAULT_SEED = 0
GLOBAL_KEYS = ("seed", "trials", "moments", "out", "jobs", "full_scale")


# ---------------------------------------------------------------------------
# input / output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _fmt_short(v):
    return format(float(v), ".15g")


def _read_text(path):
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text()


def read_moments(path, K=None):
    """Moments from a measure file (``atom x p`` lines) or a list of numbers."""
    text = _read_text(path)
    body = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    if any(ln.startswith("atom") for ln in body):
        mu = AtomicMeasure.from_text(text)
        return moments_of(mu, K or fc.DEFAULT_ORDER)
    values = []
    for lineno, ln in enumerate(body, start=1):
        for tok in ln.replace(",", " ").split():
            try:
                values.append(float(Fraction(tok)))
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"not a number: {tok!r}", lineno) from None
    if not values:
        raise ParseError("no moments found")
    m = MomentSequence(values)
    return m.truncate(K) if K and K < m.K else m


def read_measure(path):
    return AtomicMeasure.from_text(_read_text(path))


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _moments_line(m):
    return " ".join(_fmt_short(v) for v in m.array) + "\n"


def _key_values(pairs):
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ParseError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

def _coerce(default, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise ParseError(f"not a boolean: {raw!r}")
    if isinstance(default, tuple):
        items = raw if isinstance(raw, (tuple, list)) else [x for x in str(raw).split(",") if x.strip()]
        proto = default[0] if default else 0.0
        return tuple(_coerce(proto, x) for x in items)
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ParseError(f"bad value {raw!r} for a {type(default).__name__} setting") from None
    return str(raw)


@dataclass
class Experiment:
    name: str
    runner: object
    defaults: dict
    full_scale: dict = field(default_factory=dict)
    help: str = ""


EXPERIMENTS = {}


def experiment(name, defaults, full_scale=None, help=""):
    def register(fn):
        EXPERIMENTS[name] = Experiment(name, fn, defaults, full_scale or {}, help)
        return fn
    return register


@dataclass
class ExperimentConfig:
    """Fully resolved settings of one experiment run."""

    experiment: str
    seed: int = DEFAULT_SEED
    full_scale: bool = False
    params: dict = field(default_factory=dict)
    jobs: int = 1

    @classmethod
    def build(cls, name, overrides=None, *, seed=DEFAULT_SEED, full_scale=False, jobs=1):
        if name not in EXPERIMENTS:
            raise ParseError(f"unknown experiment {name!r}")
        exp = EXPERIMENTS[name]
        params = dict(exp.defaults)
        if full_scale:
            params.update(exp.full_scale)
        for k, v in (overrides or {}).items():
            if k not in params:
                raise ParseError(f"experiment {name} has no setting {k!r}")
            params[k] = _coerce(exp.defaults[k], v)
        return cls(name, int(seed), bool(full_scale), params, int(jobs))

    def to_text(self):
        lines = [f"experiment = {self.experiment}", f"seed = {self.seed}",
                 f"full_scale = {_fmt(self.full_scale)}"]
        lines += [f"{k} = {_fmt(self.params[k])}" for k in sorted(self.params)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = parse_config_text(text)
        name = kv.pop("experiment", None)
        if name is None:
            raise ParseError("config has no experiment key")
        seed = int(kv.pop("seed", DEFAULT_SEED))
        full = _coerce(False, kv.pop("full_scale", "false"))
        jobs = int(kv.pop("jobs", 1))
        kv.pop("out", None)
        cfg = cls.build(name, seed=seed, full_scale=full, jobs=jobs)
        for k, v in kv.items():
            if k not in cfg.params:
                raise ParseError(f"experiment {name} has no setting {k!r}")
            cfg.params[k] = _coerce(EXPERIMENTS[name].defaults[k], v)
        return cfg

    @property
    def hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def __getitem__(self, key):
        return self.params[key]


def parse_config_text(text):
    """Flat ``key = value`` lines (``key value`` also accepted); ``#`` comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            k, v = line.split("=", 1)
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
            k, v = parts
        out[k.strip().replace("-", "_")] = v.strip()
    return out


class Artifacts:
    """Collects output files and publishes them only if the run succeeds."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.files = {}
        self.header = f"# experiment={cfg.experiment} config_hash={cfg.hash}\n"

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        buf.write(self.header)
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        self.files[name] = buf.getvalue()

    def raw_csv(self, name, body):
        self.files[name] = self.header + body

    def publish(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir.parent))
        try:
            for name, text in self.files.items():
                (staging / name).write_text(text)
            (staging / "config.echo").write_text(self.cfg.to_text() + f"jobs = {self.cfg.jobs}\n")
            out_dir.mkdir(exist_ok=True)
            for item in sorted(staging.iterdir()):
                os.replace(item, out_dir / item.name)
        finally:
            shutil.rmtree(staging, ignore_errors=True)


def run_experiment(cfg, out_dir):
    """Run ``cfg`` and write its artifacts into ``out_dir``; returns the file names."""
    art = Artifacts(cfg)
    EXPERIMENTS[cfg.experiment].runner(cfg, art)
    if "results.csv" not in art.files:
        raise RuntimeError(f"{cfg.experiment} wrote no results")
    art.publish(out_dir)
    return sorted(art.files) + ["config.echo"]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _trials(cfg, block, fn):
    return rmt.run_trials(fn, cfg.seed, cfg["trials"], jobs=cfg.jobs, block=block)


@experiment("fig-mp-laws", {"c": (0.1, 0.5, 0.9), "points": 2001},
            help="Marchenko-Pastur densities for several ratios")
def _fig_mp_laws(cfg, art):
    top = (1 + math.sqrt(max(cfg["c"]))) ** 2 * 1.05
    grid = np.linspace(0.0, top, cfg["points"])
    rows = []
    for c in cfg["c"]:
        curve = mp_density(c, grid)
        art.raw_csv(f"mp_c{_fmt(c)}.csv", curve.to_csv())
        rows.append((c, curve.support[0], curve.support[1], curve.atom_at_zero, curve.mass()))
    art.csv("results.csv", ["c", "lower_edge", "upper_edge", "atom_at_zero", "mass"], rows)


@experiment("fig-exact-conv", {"p": 0.5, "lam": 1.0, "c": (0.5, 0.25), "n": 512, "trials": 1,
                               "bins": 50, "points": 2001},
            help="two-atom densities against sample covariance histograms")
def _fig_exact_conv(cfg, art):
    rows = []
    for block, c in enumerate(cfg["c"]):
        params = cf.TwoAtomParams(cfg["p"], cfg["lam"], c)
        I = params.conv_support()
        grid = np.linspace(0.0, I.hi * 1.1, cfg["points"])
        grid = np.union1d(grid, np.linspace(I.lo, I.hi, cfg["points"]))
        curve = cf.conv_density(params, grid)
        art.raw_csv(f"exact_c{_fmt(c)}.csv", curve.to_csv())
        n = cfg["n"]
        L = int(round(n / c))
        mu = params.measure()
        samples = _trials(cfg, block, lambda s: rmt.sample_product(mu, n, L, s))
        vr = (0.0, I.hi * 1.1)
        edges, counts = rmt.histogram(samples, cfg["bins"], vr)
        art.raw_csv(f"hist_c{_fmt(c)}.csv", rmt.histogram_to_csv(edges, counts))
        observed = rmt.histogram_density(samples, cfg["bins"], vr)
        rec = cf.recover_two_atom(observed, c)
        x_star, f_star = cf.conv_maximum(params) if params.cp < 1 else (float("nan"), float("nan"))
        rows.append((c, L, I.lo, I.hi, x_star, f_star, observed.argmax[1], rec.p, rec.lam))
    art.csv("results.csv", ["c", "L", "support_lo", "support_hi", "x_max", "f_max",
                            "hist_peak", "p_hat", "lam_hat"], rows)


def _mse_rows(cfg, transform):
    mu = AtomicMeasure.two_atom(cfg["p"], cfg["lam"])
    K = cfg["moments"]
    c = cfg["c"]
    truth = transform.truth(mu, K, c)
    rows, per_trial = [], []
    for block, n in enumerate(cfg["sizes"]):
        L = int(round(n / c))
        sample_moments = _trials(cfg, block, lambda s: rmt.empirical_moments(rmt.sample_product(mu, n, L, s), K))
        m4s, mks = [], []
        for t, m in enumerate(sample_moments):
            e4 = est.moment_mse(transform.apply(m.truncate(4), c), truth.truncate(4))
            ek = est.moment_mse(transform.apply(m, c), truth)
            m4s.append(e4)
            mks.append(ek)
            per_trial.append((n, t, e4, ek))
        rows.append((n, L, float(np.mean(m4s)), float(np.mean(mks))))
    return rows, per_trial


class _MethodB:
    @staticmethod
    def truth(mu, K, c):
        return fc.mult_mp_convolve(moments_of(mu, K), c)

    @staticmethod
    def apply(m, c):
        return m


class _G2:
    @staticmethod
    def truth(mu, K, c):
        return moments_of(mu, K)

    @staticmethod
    def apply(m, c):
        return est.g2_estimate(m, c)


_MSE_DEFAULTS = {"p": 0.5, "lam": 1.0, "c": 0.5, "sizes": (32, 128, 512), "trials": 50, "moments": 8}


@experiment("fig-method-b", dict(_MSE_DEFAULTS),
            help="moment MSE of sampled products against exact convolution")
def _fig_method_b(cfg, art):
    rows, per_trial = _mse_rows(cfg, _MethodB)
    K = cfg["moments"]
    art.csv("results.csv", ["n", "L", "mse_4", f"mse_{K}"], rows)
    art.csv("trials.csv", ["n", "trial", "mse_4", f"mse_{K}"], per_trial)


@experiment("fig-g2", dict(_MSE_DEFAULTS),
            help="moment MSE of the G2 estimator against the true covariance")
def _fig_g2(cfg, art):
    rows, per_trial = _mse_rows(cfg, _G2)
    K = cfg["moments"]
    art.csv("results.csv", ["n", "L", "mse_4", f"mse_{K}"], rows)
    art.csv("trials.csv", ["n", "trial", "mse_4", f"mse_{K}"], per_trial)


def _components(grid, values, threshold):
    """Intervals where ``values > threshold``."""
    pos = values > threshold
    out, start = [], None
    for i, flag in enumerate(pos):
        if flag and start is None:
            start = i
        if not flag and start is not None:
            out.append((grid[start], grid[i - 1]))
            start = None
    if start is not None:
        out.append((grid[start], grid[-1]))
    return out


@experiment("fig-splitting", {"locations": (1.0, 3.0, 4.0), "c": (0.2, 0.05), "n": 512, "trials": 1,
                              "bins": 150, "points": 1201, "threshold": 1e-3},
            full_scale={"n": 1536},
            help="support splitting of a three-atom measure as c decreases")
def _fig_splitting(cfg, art):
    mu = AtomicMeasure.uniform(cfg["locations"])
    top = max(cfg["locations"]) * (1 + math.sqrt(max(cfg["c"]))) ** 2 * 1.1
    rows = []
    for block, c in enumerate(cfg["c"]):
        grid = np.linspace(top / cfg["points"], top, cfg["points"])
        curve = cf.eta_convolution_density(mu, c, grid)
        art.raw_csv(f"split_c{_fmt(c)}_density.csv", curve.to_csv())
        n = cfg["n"]
        L = int(round(n / c))
        samples = _trials(cfg, block, lambda s: rmt.sample_product(mu, n, L, s))
        edges, counts = rmt.histogram(samples, cfg["bins"], (0.0, top))
        art.raw_csv(f"split_c{_fmt(c)}_hist.csv", rmt.histogram_to_csv(edges, counts))
        comps = _components(curve.grid, curve.values, cfg["threshold"])
        desc = " ".join(f"[{lo:.4f};{hi:.4f}]" for lo, hi in comps)
        rows.append((c, L, len(comps), desc, curve.mass()))
    art.csv("results.csv", ["c", "L", "components", "intervals", "mass"], rows)


@experiment("fig-power", {"powers": (0.5, 1.0, 1.5), "n": 256, "N": 36, "sigma2": 0.1,
                          "L": (256, 512, 1024, 2048), "trials": 100, "atoms": 3},
            help="power distribution of CDMA users from sample covariance moments")
def _fig_power(cfg, art):
    P = AtomicMeasure.uniform(cfg["powers"])
    K = cfg["atoms"]
    truth = moments_of(P, K)
    n, N, s2 = cfg["n"], cfg["N"], cfg["sigma2"]
    rows, cdf_rows, trial_rows = [], [], []
    for block, L in enumerate(cfg["L"]):
        def one(seed):
            m = rmt.empirical_moments(rmt.sample_cdma(P, n, N, L, s2, seed), K)
            return est.estimate_power_distribution(m, n, N, L, s2, K)
        results = _trials(cfg, block, one)
        roots = [r.extras["roots"] for r in results]
        mses = [est.moment_mse(r.extras["moments"], truth) for r in results]
        for t, (r, e) in enumerate(zip(roots, mses)):
            trial_rows.append((L, t) + tuple(r) + (e,))
        avg = est.rankwise_average(roots)
        for k, x in enumerate(avg):
            cdf_rows.append((L, x, (k + 1) / K))
        adjusted = sum(r.extras["adjusted_roots"] for r in results)
        rows.append((L,) + tuple(float(x) for x in avg) + (float(np.mean(mses)), adjusted))
    atom_cols = [f"atom_{k + 1}" for k in range(K)]
    art.csv("results.csv", ["L"] + atom_cols + [f"mse_{K}", "adjusted_roots"], rows)
    art.csv("cdf.csv", ["L", "x", "F"], cdf_rows)
    art.csv("trials.csv", ["L", "trial"] + atom_cols + [f"mse_{K}"], trial_rows)


@experiment("fig-users", {"power": 1.0, "n": 256, "N": 36, "sigma2": 0.1,
                          "L": (16, 32, 64, 128, 256, 512, 1024, 2048), "trials": 10,
                          "moments": 4, "threshold": 1.5, "tolerance": 2},
            full_scale={"L": (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 1500, 2000, 2500, 3000, 3500, 4000)},
            help="number of users: free deconvolution against eigenvalue thresholding")
def _fig_users(cfg, art):
    P = AtomicMeasure.point_mass(cfg["power"])
    n, N, s2, K = cfg["n"], cfg["N"], cfg["sigma2"], cfg["moments"]
    tol = cfg["tolerance"]
    rows, trial_rows = [], []
    for block, L in enumerate(cfg["L"]):
        def one(seed):
            s = rmt.sample_cdma(P, n, N, L, s2, seed)
            free = est.estimate_user_count(rmt.empirical_moments(s, K), n, L, s2, P, K=K).estimate
            return free, est.classical_rank(s, s2, cfg["threshold"])
        res = _trials(cfg, block, one)
        free = np.array([r[0] for r in res])
        classical = np.array([r[1] for r in res])
        for t, (a, b) in enumerate(res):
            trial_rows.append((L, t, int(a), int(b)))
        rows.append((L, float(np.mean(np.abs(free - N) <= tol)), float(np.mean(np.abs(classical - N) <= tol)),
                     float(np.median(free)), float(np.median(classical))))
    art.csv("results.csv", ["L", "free_within_tol", "classical_within_tol", "free_median",
                            "classical_median"], rows)
    art.csv("trials.csv", ["L", "trial", "free", "classical"], trial_rows)


@experiment("fig-channel", {"p": 0.5, "lam": 1.0, "n": 256, "sigma2": 0.1, "L": (128, 512),
                            "trials": 100, "moments": 4},
            help="channel covariance spectrum from sample covariance moments")
def _fig_channel(cfg, art):
    R = AtomicMeasure.two_atom(cfg["p"], cfg["lam"])
    theta = R.shifted(cfg["sigma2"]) if cfg["sigma2"] else R
    n, K, s2 = cfg["n"], cfg["moments"], cfg["sigma2"]
    rows, cdf_rows = [], []
    for block, L in enumerate(cfg["L"]):
        def one(seed):
            m = rmt.empirical_moments(rmt.sample_covariance_observations(theta, n, L, seed), K)
            r = est.estimate_channel_covariance(m, n / L, s2)
            return r, est.atoms_from_moments(r, K)[2]
        res = _trials(cfg, block, one)
        mean_m = np.mean([np.asarray(r[0].array) for r in res], axis=0)
        avg = est.rankwise_average([r[1] for r in res])
        for k, x in enumerate(avg):
            cdf_rows.append((L, x, (k + 1) / K))
        rows.append((L,) + tuple(float(x) for x in mean_m))
    art.csv("results.csv", ["L"] + [f"m_{k + 1}" for k in range(K)], rows)
    art.csv("cdf.csv", ["L", "x", "F"], cdf_rows)


@experiment("fig-noise-var", {"p": 0.5, "lam": 1.0, "n": 256, "sigma2": 0.1, "L": (128, 512),
                              "trials": 1, "moments": 4, "half_width": 0.1, "step": 0.001},
            help="noise standard deviation by moment matching, on shared draws")
def _fig_noise_var(cfg, art):
    R = AtomicMeasure.two_atom(cfg["p"], cfg["lam"])
    theta = R.shifted(cfg["sigma2"])
    n, K, Ls = cfg["n"], cfg["moments"], cfg["L"]
    sigma = math.sqrt(cfg["sigma2"])
    grid = (max(sigma - cfg["half_width"], 0.0), sigma + cfg["half_width"], cfg["step"])
    r_moments = moments_of(R, K)
    spectra = _trials(cfg, 0, lambda s: rmt.sample_covariance_nested(theta, n, Ls, s))
    rows = []
    for t, per_L in enumerate(spectra):
        for L, spec in zip(Ls, per_L):
            m = rmt.empirical_moments(spec, K)
            res = est.estimate_noise_variance(m, r_moments, n / L, grid, K=K)
            if t == 0:
                art.raw_csv(f"trace_L{L}.csv", res.trace_csv())
            rows.append((L, t, res.estimate, res.objective))
    art.csv("results.csv", ["L", "trial", "eta_hat", "objective"], rows)


@experiment("fig-capacity", {"eigenvalues": (0.5, 1.0, 1.5), "n": 126, "sigma2": 0.01, "rho": 1.0,
                             "blocks": (1, 2, 4, 8), "trials": 20, "atoms": 3, "model": "blocks"},
            help="capacity from noisy block-fading channel measurements")
def _fig_capacity(cfg, art):
    H = AtomicMeasure.uniform(cfg["eigenvalues"])
    truth = est.capacity_from_eigenvalues(rmt.diagonal_realization(H, cfg["n"]), cfg["rho"])
    n, s2, K = cfg["n"], cfg["sigma2"], cfg["atoms"]
    rows = []
    for block, Lb in enumerate(cfg["blocks"]):
        def one(seed):
            m = rmt.empirical_moments(rmt.sample_mimo_blocks(H, n, Lb, s2, seed), K)
            return est.estimate_capacity(m, n, Lb, s2, cfg["rho"], K_atoms=K, model=cfg["model"]).estimate
        caps = np.array(_trials(cfg, block, one))
        rows.append((Lb, truth, float(np.mean(caps)), float(np.mean(np.abs(caps - truth)))))
    art.csv("results.csv", ["blocks", "truth", "mean_estimate", "mean_abs_error"], rows)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_convolve(args):
    m = read_moments(args.input, args.moments)
    if args.mp_c is not None:
        out = fc.mult_mp_convolve(m, args.mp_c)
    elif args.shift is not None:
        out = fc.shift(m, args.shift)
    elif args.add is not None:
        out = fc.additive_free_convolve(m, read_moments(args.add, m.K))
    else:
        out = fc.scale_and_pad(m, args.pad)
    _finish_moments(out, args)


def _cmd_deconvolve(args):
    m = read_moments(args.input, args.moments)
    if args.mp_c is not None:
        out = fc.mult_mp_deconvolve(m, args.mp_c)
    elif args.shift is not None:
        out = fc.shift_deconvolve(m, args.shift)
    elif args.sub is not None:
        out = fc.additive_free_deconvolve(m, read_moments(args.sub, m.K))
    else:
        out = fc.unpad(m, args.unpad)
    _finish_moments(out, args)


def _finish_moments(m, args):
    text = _moments_line(m)
    if getattr(args, "atoms", None):
        mu, adjusted, roots = est.atoms_from_moments(m, args.atoms)
        text += "# atoms: " + " ".join(_fmt_short(x) for x in roots) + f" (adjusted {adjusted})\n"
    _emit(text, args.out)


def _cmd_density(args):
    if args.two_atom:
        kv = _key_values(args.two_atom)
        try:
            params = cf.TwoAtomParams(float(kv["p"]), float(kv.get("lambda", kv.get("lam"))), float(kv["c"]))
        except (KeyError, TypeError):
            raise ParseError("--two-atom needs p=, lambda= and c=") from None
        if args.deconv:
            J = params.deconv_support()
            curve = cf.deconv_density(params, np.linspace(J.lo, J.hi, args.points))
        else:
            I = params.conv_support()
            curve = cf.conv_density(params, np.linspace(I.lo, I.hi, args.points))
    elif args.measure:
        if args.mp_c is None:
            raise ParseError("--measure needs --mp-c")
        mu = read_measure(args.measure)
        top = max(mu.locations) * (1 + math.sqrt(args.mp_c)) ** 2 * 1.1
        grid = np.linspace(top / args.points, top, args.points)
        curve = cf.eta_convolution_density(mu, args.mp_c, grid)
    else:
        raise ParseError("density needs --two-atom or --measure")
    x, f = curve.argmax
    header = (f"support=[{_fmt_short(curve.support[0])};{_fmt_short(curve.support[1])}] "
              f"argmax={_fmt_short(x)} max={_fmt_short(f)} atom_at_zero={_fmt_short(curve.atom_at_zero)}")
    if curve.flags:
        header += " flags=" + ";".join(sorted(curve.flags))
    _emit(curve.to_csv(header), args.out)


def _cmd_recover(args):
    text = _read_text(args.input)
    curve = DensityCurve.from_csv(text)
    lo, hi = sqrt_edge_extent(curve.grid, curve.values)
    curve = DensityCurve(curve.grid, curve.values, (lo, hi))
    params = cf.recover_two_atom(curve, args.c)
    _emit(f"p = {_fmt_short(params.p)}\nlambda = {_fmt_short(params.lam)}\nc = {_fmt_short(params.c)}\n", args.out)


def _cmd_g2(args):
    _finish_moments(est.g2_estimate(read_moments(args.input, args.moments), args.c), args)


def _cmd_estimate_covariance(args):
    m = read_moments(args.input, args.moments)
    _finish_moments(est.estimate_channel_covariance(m, args.c, args.sigma2), args)


def _cmd_estimate_power(args):
    m = read_moments(args.input, args.moments)
    res = est.estimate_power_distribution(m, args.n, args.N, args.L, args.sigma2, args.atoms)
    _emit(res.to_text(), args.out)


def _cmd_estimate_users(args):
    m = read_moments(args.input, args.moments)
    p = read_measure(args.power) if args.power else AtomicMeasure.point_mass(1.0)
    res = est.estimate_user_count(m, args.n, args.L, args.sigma2, p, K=min(m.K, 4))
    _emit(res.to_text(), args.out)
    if args.trace:
        Path(args.trace).write_text(res.trace_csv())


def _cmd_estimate_noise(args):
    m = read_moments(args.input, args.moments)
    r = read_moments(args.covariance, m.K)
    grid = tuple(args.grid) if args.grid else None
    res = est.estimate_noise_variance(m, r, args.c, grid, reference_sigma=args.reference_sigma, K=min(m.K, 4))
    _emit(res.to_text(), args.out)
    if args.trace:
        Path(args.trace).write_text(res.trace_csv())


def _cmd_capacity(args):
    m = read_moments(args.input, args.moments)
    res = est.estimate_capacity(m, args.n, args.blocks, args.sigma2, args.rho, K_atoms=args.atoms,
                                base=math.e if args.natural_log else 2.0, model=args.model)
    _emit(res.to_text(), args.out)


def _cmd_simulate(args):
    mu = read_measure(args.measure) if args.measure else AtomicMeasure.point_mass(1.0)
    kind = args.ensemble
    if kind == "wishart":
        s = rmt.sample_wishart(args.n, args.L, args.seed)
    elif kind in ("product", "scm"):
        s = rmt.sample_product(mu, args.n, args.L, args.seed)
    elif kind == "info-plus-noise":
        s = rmt.sample_info_plus_noise(mu, args.n, args.L, args.sigma2, args.seed)
    elif kind == "cdma":
        s = rmt.sample_cdma(mu, args.n, args.N, args.L, args.sigma2, args.seed)
    else:
        s = rmt.sample_mimo_blocks(mu, args.n, args.L, args.sigma2, args.seed)
    if args.moments:
        text = _moments_line(rmt.empirical_moments(s, args.moments))
    elif args.bins:
        top = float(s.eigenvalues[-1]) * 1.05 or 1.0
        text = rmt.histogram_to_csv(*rmt.histogram(s, args.bins, (0.0, top)))
    else:
        text = s.to_csv()
    _emit(text, args.out)


def _cmd_fig(args):
    overrides = {}
    if args.config:
        kv = parse_config_text(Path(args.config).read_text())
        kv.pop("experiment", None)
        for key in GLOBAL_KEYS:
            if key in kv and getattr(args, key, None) is None:
                setattr(args, key, kv[key])
            kv.pop(key, None)
        overrides.update(kv)
    overrides.update(_key_values(args.set or []))
    params = EXPERIMENTS[args.command].defaults
    for key in ("trials", "moments"):
        value = getattr(args, key, None)
        if value is not None:
            if key not in params:
                raise ParseError(f"{args.command} has no {key} setting")
            overrides[key] = value
    seed = DEFAULT_SEED if args.seed is None else int(args.seed)
    full = _coerce(False, args.full_scale) if args.full_scale is not None else False
    jobs = 1 if args.jobs is None else int(args.jobs)
    cfg = ExperimentConfig.build(args.command, overrides, seed=seed, full_scale=full, jobs=jobs)
    out = args.out or os.path.join("out", args.command)
    files = run_experiment(cfg, out)
    sys.stdout.write(f"{cfg.experiment}: wrote {', '.join(files)} to {out}\n")


def _add_globals(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="master seed")
    p.add_argument("--trials", type=int, default=d, help="Monte Carlo trials")
    p.add_argument("--moments", type=int, default=d, help="number of moments")
    p.add_argument("--out", default=d, help="output file or directory")
    p.add_argument("--jobs", type=int, default=d, help="parallel workers for trials")


def build_parser():
    parser = argparse.ArgumentParser(prog="freedeconv", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help):
        p = sub.add_parser(name, help=help)
        _add_globals(p, suppress=True)
        p.set_defaults(func=fn)
        return p

    p = command("convolve", _cmd_convolve, "free convolution of a moment sequence")
    p.add_argument("input", help="measure or moment file ('-' for stdin)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mp-c", type=float, help="multiply by the Marchenko-Pastur law mu_c")
    g.add_argument("--shift", type=float, help="add a point mass (shift the spectrum)")
    g.add_argument("--add", help="additive convolution with another measure/moment file")
    g.add_argument("--pad", type=float, help="scale by a fraction and pad the rest at zero")
    p.add_argument("--atoms", type=int, help="also print this many equal-mass atoms")

    p = command("deconvolve", _cmd_deconvolve, "free deconvolution of a moment sequence")
    p.add_argument("input")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--mp-c", type=float)
    g.add_argument("--shift", type=float, help="remove a point mass at this value")
    g.add_argument("--sub", help="additive deconvolution by another measure/moment file")
    g.add_argument("--unpad", type=float)
    p.add_argument("--atoms", type=int)

    p = command("density", _cmd_density, "density curve as x,f CSV")
    p.add_argument("--two-atom", nargs="+", metavar="KEY=VALUE", help="p=.. lambda=.. c=..")
    p.add_argument("--deconv", action="store_true", help="deconvolution density instead")
    p.add_argument("--measure", help="general discrete measure file (numerical solver)")
    p.add_argument("--mp-c", type=float)
    p.add_argument("--points", type=int, default=2001)

    p = command("recover", _cmd_recover, "recover (p, lambda) from a density CSV")
    p.add_argument("input")
    p.add_argument("--c", type=float, required=True)

    p = command("g2", _cmd_g2, "G2 covariance estimate from SCM moments")
    p.add_argument("input")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--atoms", type=int)

    p = command("estimate-covariance", _cmd_estimate_covariance, "covariance moments from noisy SCM moments")
    p.add_argument("input")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--atoms", type=int)

    p = command("estimate-power", _cmd_estimate_power, "user power distribution")
    p.add_argument("input")
    for flag in ("--n", "--N", "--L"):
        p.add_argument(flag, type=int, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--atoms", type=int, default=3)

    p = command("estimate-users", _cmd_estimate_users, "number of users by moment matching")
    p.add_argument("input")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--power", help="assumed power measure file (default: all ones)")
    p.add_argument("--trace", help="write the search trace CSV here")

    p = command("estimate-noise", _cmd_estimate_noise, "noise standard deviation by grid search")
    p.add_argument("input")
    p.add_argument("--covariance", required=True, help="known covariance measure/moment file")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--grid", type=float, nargs=3, metavar=("LO", "HI", "STEP"))
    p.add_argument("--reference-sigma", type=float)
    p.add_argument("--trace")

    p = command("capacity", _cmd_capacity, "channel capacity from measured channel moments")
    p.add_argument("input")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--blocks", type=int, default=1)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--atoms", type=int)
    p.add_argument("--natural-log", action="store_true")
    p.add_argument("--model", choices=("blocks", "unit"), default="blocks")

    p = command("simulate", _cmd_simulate, "sample a random matrix spectrum")
    p.add_argument("--ensemble", choices=("wishart", "product", "scm", "info-plus-noise", "cdma", "mimo"),
                   default="product")
    p.add_argument("--measure", help="measure file (default: point mass at 1)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--L", type=int, required=True, help="columns / observations / blocks")
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--bins", type=int)

    for name, exp in EXPERIMENTS.items():
        p = command(name, _cmd_fig, exp.help)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--full-scale", dest="full_scale", action="store_const", const=True,
                       default=argparse.SUPPRESS, help="full-size matrices and sweeps")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a setting")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for key in ("full_scale", "config", "set"):
        if not hasattr(args, key):
            setattr(args, key, None)
    if args.command == "simulate" and args.seed is None:
        args.seed = DEFAULT_SEED
    try:
        args.func(args)
    except (FreeDeconvError, ValueError, ArithmeticError, OSError, KeyError) as exc:
        sys.stderr.write(f"freedeconv {args.command}: error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
