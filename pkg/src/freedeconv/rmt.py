"""Random-matrix Monte Carlo.

Complex Gaussian entries have mean 0 and variance 1 (each real component
has variance 1/2).  A diagonal matrix realizing an atomic measure uses
largest-remainder rounding of ``n * mass`` to integer multiplicities.

Every sampler takes ``seed`` as an int, a ``numpy.random.SeedSequence`` or
a ``Generator``; the same seed gives a bit-identical spectrum.
"""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import MassRoundingError, MeasureError
from .measures import DensityCurve, MomentSequence

DEFAULT_MAX_N = 2048
CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class EnsembleConfig:
    """Sizes, noise level and seed of a Monte Carlo ensemble.

    ``N`` is the number of columns: model columns for the
    information-plus-noise model, observations ``L`` for sample covariance
    workflows.
    """

    n: int
    N: int
    sigma2: float = 0.0
    seed: int = 0
    trials: int = 1

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise MeasureError("matrix dimensions must be >= 1")
        if self.sigma2 < 0:
            raise MeasureError("noise variance must be >= 0")
        if self.trials < 1:
            raise MeasureError("need at least one trial")

    @property
    def c(self):
        return self.n / self.N

    def as_dict(self):
        return {"n": self.n, "N": self.N, "c": self.c, "sigma2": self.sigma2,
                "seed": self.seed, "trials": self.trials}


@dataclass(frozen=True, eq=False)
class SpectrumSample:
    """Sorted eigenvalues of one sampled Hermitian matrix."""

    eigenvalues: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        eig = np.array(self.eigenvalues, dtype=float)
        if eig.ndim != 1 or eig.size == 0:
            raise MeasureError("eigenvalues must be a nonempty 1-D array")
        if np.any(eig < -CLAMP_TOL * max(1.0, float(np.max(np.abs(eig))))):
            raise MeasureError("spectrum has negative eigenvalues beyond the clamp tolerance")
        eig = np.sort(np.clip(eig, 0.0, None))
        eig.setflags(write=False)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "config", dict(self.config))

    @property
    def n(self):
        return self.eigenvalues.size

    def __eq__(self, other):
        if not isinstance(other, SpectrumSample):
            return NotImplemented
        return np.array_equal(self.eigenvalues, other.eigenvalues)

    __hash__ = None

    def to_csv(self):
        buf = io.StringIO()
        buf.write("# " + " ".join(f"{k}={v}" for k, v in sorted(self.config.items())) + "\n")
        for x in self.eigenvalues:
            buf.write(f"{float(x)!r}\n")
        return buf.getvalue()


def generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_seeds(seed, trials, block=None):
    """Independent child seeds, one per trial, derived from a master seed.

    ``block`` selects a disjoint family of children (for example one per
    matrix size), independent of how many other blocks are used.
    """
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    elif block is None:
        root = np.random.SeedSequence(seed)
    else:
        root = np.random.SeedSequence(seed, spawn_key=(int(block),))
    return [np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,)) for i in range(trials)]


def complex_gaussian(rng, shape):
    """i.i.d. complex Gaussian entries, mean 0, ``E|g|^2 = 1``."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def multiplicities(mu, n):
    """Integer atom counts summing to ``n``, by largest remainder."""
    target = np.array(mu.masses) * n
    counts = np.floor(target).astype(int)
    short = n - int(counts.sum())
    if short:
        order = np.argsort(-(target - counts), kind="stable")
        counts[order[:short]] += 1
    if np.any(counts == 0):
        raise MassRoundingError(f"an atom of mass < 1/(2n) vanishes at n={n}")
    return counts


def diagonal_realization(mu, n):
    """Diagonal of an ``n x n`` matrix whose spectrum realizes ``mu``."""
    return np.repeat(np.array(mu.locations), multiplicities(mu, n))


def _spectrum(A, config):
    """Eigenvalues of ``A A^H`` for a (possibly wide) matrix ``A``."""
    eig = np.linalg.eigvalsh(A @ A.conj().T)
    return SpectrumSample(eig, config)


def _check_size(n, max_n):
    if n > max_n:
        raise MeasureError(f"n={n} exceeds the configured maximum {max_n}")


def sample_wishart(n, N, seed):
    """Spectrum of ``(1/N) R R^H`` with ``R`` an ``n x N`` complex Gaussian matrix."""
    rng = generator(seed)
    R = complex_gaussian(rng, (n, N))
    return _spectrum(R / np.sqrt(N), {"kind": "wishart", "n": n, "N": N})


def sample_product(mu, n, L, seed, *, max_n=DEFAULT_MAX_N):
    """Spectrum of ``T^{1/2} (1/L) X X^H T^{1/2}``, ``T`` diagonal realizing ``mu``.

    Its empirical law approximates ``mu ⊠ mu_{n/L}``.
    """
    _check_size(n, max_n)
    d = diagonal_realization(mu, n)
    rng = generator(seed)
    X = complex_gaussian(rng, (n, L))
    A = np.sqrt(d)[:, None] * X / np.sqrt(L)
    return _spectrum(A, {"kind": "product", "n": n, "L": L})


def sample_covariance_observations(theta_spec, n, L, seed, *, max_n=DEFAULT_MAX_N):
    """Sample covariance of ``L`` observations with covariance realizing ``theta_spec``."""
    s = sample_product(theta_spec, n, L, seed, max_n=max_n)
    return SpectrumSample(s.eigenvalues, {"kind": "scm", "n": n, "L": L})


def sample_covariance_nested(theta_spec, n, Ls, seed, *, max_n=DEFAULT_MAX_N):
    """Sample covariance spectra for several observation counts on shared draws.

    One ``n x max(Ls)`` Gaussian matrix is drawn; the spectrum for each
    ``L`` uses its first ``L`` columns.
    """
    _check_size(n, max_n)
    d = diagonal_realization(theta_spec, n)
    rng = generator(seed)
    X = np.sqrt(d)[:, None] * complex_gaussian(rng, (n, max(Ls)))
    return [_spectrum(X[:, :L] / np.sqrt(L), {"kind": "scm", "n": n, "L": L}) for L in Ls]


def sample_info_plus_noise(R_spec, n, N, sigma2, seed, *, max_n=DEFAULT_MAX_N):
    """Spectrum of ``(1/N)(R + sigma X)(R + sigma X)^H``.

    ``R`` is ``n x N`` with ``(1/N) R R^H`` diagonal realizing ``R_spec``,
    so at most ``N`` of its eigenvalues may be nonzero.
    """
    _check_size(n, max_n)
    if sigma2 < 0:
        raise MeasureError("noise variance must be >= 0")
    gamma = np.sort(diagonal_realization(R_spec, n))[::-1]
    if np.count_nonzero(gamma) > N:
        raise MassRoundingError(f"rank {np.count_nonzero(gamma)} of R exceeds N={N}")
    R = np.zeros((n, N), dtype=complex)
    k = min(n, N)
    R[np.arange(k), np.arange(k)] = np.sqrt(N * gamma[:k])
    rng = generator(seed)
    A = R + np.sqrt(sigma2) * complex_gaussian(rng, (n, N))
    return _spectrum(A / np.sqrt(N), {"kind": "info_plus_noise", "n": n, "N": N, "sigma2": sigma2})


def sample_cdma(p_spec, n, N, L, sigma2, seed, *, max_n=DEFAULT_MAX_N):
    """Sample covariance of ``y = W P^{1/2} s + b`` over ``L`` symbols.

    ``W`` is ``n x N`` with entries of variance ``1/n`` (drawn per call),
    ``P`` diagonal realizing ``p_spec`` over ``N`` users, ``s`` unit-variance
    symbols and ``b`` white noise of variance ``sigma2``.
    """
    _check_size(n, max_n)
    powers = diagonal_realization(p_spec, N)
    rng = generator(seed)
    W = complex_gaussian(rng, (n, N)) / np.sqrt(n)
    S = complex_gaussian(rng, (N, L))
    B = complex_gaussian(rng, (n, L))
    Y = (W * np.sqrt(powers)[None, :]) @ S + np.sqrt(sigma2) * B
    return _spectrum(Y / np.sqrt(L), {"kind": "cdma", "n": n, "N": N, "L": L, "sigma2": sigma2})


def sample_mimo_blocks(h_spec, n, L_blocks, sigma2, seed, *, max_n=DEFAULT_MAX_N):
    """Spectrum of the stacked measured channel over ``L_blocks`` blocks.

    The channel ``H`` is fixed with ``(1/n) H H^H`` realizing ``h_spec``;
    block ``i`` observes ``(H + sigma X_i) / sqrt(n)`` and the blocks are
    stacked side by side with a ``1/sqrt(L_blocks)`` factor.
    """
    _check_size(n, max_n)
    lam = diagonal_realization(h_spec, n)
    H = np.diag(np.sqrt(n * lam)).astype(complex)
    rng = generator(seed)
    blocks = [H + np.sqrt(sigma2) * complex_gaussian(rng, (n, n)) for _ in range(L_blocks)]
    A = np.hstack(blocks) / np.sqrt(n * L_blocks)
    return _spectrum(A, {"kind": "mimo", "n": n, "L_blocks": L_blocks, "sigma2": sigma2})


def empirical_moments(s, K):
    """``m_k = (1/n) sum_i lambda_i^k`` for ``k = 1..K``."""
    if K < 1:
        raise MeasureError("moment order K must be >= 1")
    eig = s.eigenvalues if isinstance(s, SpectrumSample) else np.asarray(s, dtype=float)
    powers = np.cumprod(np.broadcast_to(eig, (K, eig.size)), axis=0)
    return MomentSequence(powers.mean(axis=1))


def histogram(samples, bins, value_range):
    """Pooled eigenvalue counts; returns ``(edges, counts)``."""
    if isinstance(samples, SpectrumSample):
        samples = [samples]
    eig = np.concatenate([s.eigenvalues for s in samples])
    counts, edges = np.histogram(eig, bins=bins, range=value_range)
    return edges, counts


def histogram_to_csv(edges, counts):
    buf = io.StringIO()
    buf.write("bin_lo,bin_hi,count\n")
    for lo, hi, k in zip(edges[:-1], edges[1:], counts):
        buf.write(f"{float(lo)!r},{float(hi)!r},{int(k)}\n")
    return buf.getvalue()


def histogram_density(samples, bins, value_range, *, zero_tol=1e-8):
    """Pooled histogram of the nonzero eigenvalues as a :class:`DensityCurve`.

    Eigenvalues below ``zero_tol * max`` count toward the atom at zero.
    The density is normalized by the total number of eigenvalues, so it
    integrates to the continuous mass.  The support is the average over
    samples of the smallest and largest nonzero eigenvalue.
    """
    if isinstance(samples, SpectrumSample):
        samples = [samples]
    nonzero, lo_edges, hi_edges, total = [], [], [], 0
    for s in samples:
        eig = s.eigenvalues
        keep = eig[eig > zero_tol * max(float(eig[-1]), 1e-300)]
        total += eig.size
        nonzero.append(keep)
        if keep.size:
            lo_edges.append(keep[0])
            hi_edges.append(keep[-1])
    pooled = np.concatenate(nonzero)
    counts, edges = np.histogram(pooled, bins=bins, range=value_range)
    width = np.diff(edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    values = counts / (total * width)
    support = (float(np.mean(lo_edges)), float(np.mean(hi_edges))) if lo_edges else (0.0, 0.0)
    atom = 1.0 - pooled.size / total
    return DensityCurve(centers, values, support, atom)


def run_trials(fn, seed, trials, *, jobs=1, block=None):
    """Evaluate ``fn(child_seed)`` for each trial; results ordered by trial index.

    Each trial owns its generator, so the output does not depend on
    ``jobs``.  Threads are used since the heavy lifting (LAPACK) releases
    the GIL.
    """
    seeds = trial_seeds(seed, trials, block)
    if jobs <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, seeds))
