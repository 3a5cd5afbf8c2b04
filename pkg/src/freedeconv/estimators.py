"""Moment-based estimators built from free (de)convolution primitives.

Every pipeline here has a forward counterpart (``*_forward``) mapping the
unknown quantity to observed moments; the estimators invert that map
either in closed form at moment level or by exhaustive grid search.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import freeconv as fc
from .errors import MeasureError, RankError
from .measures import AtomicMeasure, MomentSequence, moments_of, newton_girard_roots


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _catalan(k):
    return math.comb(2 * k, k) // (k + 1)


@dataclass(frozen=True)
class WeightedMseConfig:
    """Weights ``w_1..w_K`` for :func:`weighted_mse`.

    The default puts ``w_{2k} = C_k`` (Catalan) on even moments and zero
    on odd ones; ``scheme="central_binomial"`` uses ``binom(2k, k)``.
    """

    K: int = 4
    weights: tuple = None
    scheme: str = "catalan"

    def __post_init__(self):
        if self.K < 1:
            raise MeasureError("K must be >= 1")
        if self.weights is None:
            if self.scheme == "catalan":
                even = _catalan
            elif self.scheme == "central_binomial":
                even = lambda k: math.comb(2 * k, k)  # noqa: E731
            else:
                raise MeasureError(f"unknown weight scheme {self.scheme!r}")
            w = tuple(float(even(j // 2)) if j % 2 == 0 else 0.0 for j in range(1, self.K + 1))
            object.__setattr__(self, "weights", w)
        else:
            w = tuple(float(x) for x in self.weights)
            if len(w) != self.K:
                raise MeasureError(f"need {self.K} weights, got {len(w)}")
            if any(x < 0 for x in w):
                raise MeasureError("weights must be nonnegative")
            object.__setattr__(self, "weights", w)


def _diff(a, b):
    a = a if isinstance(a, MomentSequence) else MomentSequence(a)
    b = b if isinstance(b, MomentSequence) else MomentSequence(b)
    if a.K != b.K:
        raise MeasureError(f"moment orders differ: {a.K} vs {b.K}")
    return np.abs(np.asarray(a.array, dtype=float) - np.asarray(b.array, dtype=float))


def moment_mse(mu_m, nu_m):
    """``sum_k |mu_k - nu_k|^2``."""
    return float(np.sum(_diff(mu_m, nu_m) ** 2))


def weighted_mse(mu_m, nu_m, cfg=None):
    """``sum_k w_k |mu_k - nu_k|^2``."""
    d = _diff(mu_m, nu_m)
    cfg = WeightedMseConfig(K=d.size) if cfg is None else cfg
    if cfg.K != d.size:
        raise MeasureError(f"weights are for K={cfg.K}, sequences have K={d.size}")
    return float(np.dot(cfg.weights, d ** 2))


@dataclass(frozen=True, eq=False)
class EstimationResult:
    """An estimate with its objective value and the evaluated search grid."""

    estimate: object
    objective: float = 0.0
    trace: tuple = ()
    extras: dict = field(default_factory=dict)

    def to_text(self):
        est = self.estimate
        if isinstance(est, AtomicMeasure):
            est = " ".join(f"{float(x)!r}:{float(p)!r}" for x, p in est.atoms)
        if isinstance(est, (int, float, np.integer, np.floating)):
            est = _num(est)
        lines = [f"estimate = {est}", f"objective = {float(self.objective)!r}"]
        lines += [f"{k} = {_text(v)}" for k, v in sorted(self.extras.items())]
        return "\n".join(lines) + "\n"

    def trace_csv(self):
        buf = io.StringIO()
        buf.write("candidate,objective\n")
        for cand, obj in self.trace:
            buf.write(f"{_num(cand)},{float(obj)!r}\n")
        return buf.getvalue()


def _num(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _text(v):
    if isinstance(v, MomentSequence):
        return v.to_text().strip()
    if isinstance(v, (tuple, list)):
        return " ".join(repr(float(x)) for x in v)
    return v


def _argmin(trace):
    best = min(range(len(trace)), key=lambda i: (trace[i][1], i))
    return trace[best]


# ---------------------------------------------------------------------------
# covariance and information-plus-noise
# ---------------------------------------------------------------------------

def g2_estimate(scm_moments, c):
    """Moments of ``mu_SCM ⊠⁻¹ mu_c``; estimates the covariance spectrum."""
    return fc.mult_mp_deconvolve(scm_moments, c)


def info_plus_noise_forward(gamma_moments, c, sigma2):
    """``mu_W = ((mu_Gamma ⊠⁻¹ mu_c) ⊞ delta_sigma2) ⊠ mu_c``."""
    inner = fc.shift(fc.mult_mp_deconvolve(gamma_moments, c), sigma2)
    return fc.mult_mp_convolve(inner, c)


def info_plus_noise_deconvolve(w_moments, c, sigma2, *, return_intermediate=False):
    """``mu_Gamma = ((mu_W ⊠⁻¹ mu_c) ⊟ delta_sigma2) ⊠ mu_c``.

    With ``return_intermediate`` also returns ``mu_Gamma ⊠⁻¹ mu_c``, the
    estimate of the covariance of the columns.
    """
    if sigma2 < 0:
        raise MeasureError("noise variance must be >= 0")
    inner = fc.shift_deconvolve(fc.mult_mp_deconvolve(w_moments, c), sigma2)
    gamma = fc.mult_mp_convolve(inner, c)
    return (gamma, inner) if return_intermediate else gamma


def channel_covariance_forward(r_moments, c, sigma2):
    """SCM moments ``(mu_R ⊞ delta_sigma2) ⊠ mu_c`` for observation ratio ``c = n/L``."""
    return fc.mult_mp_convolve(fc.shift(r_moments, sigma2), c)


def estimate_channel_covariance(scm_moments, c, sigma2):
    """``mu_R = (mu_SCM ⊠⁻¹ mu_c) ⊟ delta_sigma2``."""
    return fc.shift_deconvolve(g2_estimate(scm_moments, c), sigma2)


def _grid(lo, hi, step):
    if not step > 0:
        raise MeasureError("grid step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def estimate_noise_variance(scm_moments, r_moments, c, grid=None, *, reference_sigma=None, K=4):
    """Grid search for the noise standard deviation ``eta``.

    Minimizes the ``K``-moment MSE between the observed SCM moments and
    ``(mu_R ⊞ delta_{eta^2}) ⊠ mu_c``.  ``grid`` is ``(lo, hi, step)``;
    the default is ``reference_sigma ± 0.1`` in steps of 0.001 if a
    reference is given, else ``[0, sqrt(m_1)]``.
    """
    scm = fc._moments(scm_moments).truncate(K)
    r = fc._moments(r_moments).truncate(K)
    if grid is None:
        if reference_sigma is not None:
            grid = (max(reference_sigma - 0.1, 0.0), reference_sigma + 0.1, 0.001)
        else:
            grid = (0.0, math.sqrt(max(scm.values[0], 0.0)), 0.001)
    trace = []
    for eta in _grid(*grid):
        pred = channel_covariance_forward(r, c, eta * eta)
        trace.append((eta, moment_mse(pred, scm)))
    best, obj = _argmin(trace)
    return EstimationResult(best, obj, tuple(trace), {"K": K, "c": c})


# ---------------------------------------------------------------------------
# CDMA power and user count
# ---------------------------------------------------------------------------

def cdma_forward(p_moments, n, N, L, sigma2):
    """Moments of ``((N/n)(mu_{N/n} ⊠ mu_P) + (1 - N/n) delta_0) ⊞ delta_sigma2) ⊠ mu_{n/L}``."""
    if not 1 <= N <= n:
        raise MeasureError("need 1 <= N <= n")
    a = fc.scale_and_pad(fc.mult_mp_convolve(p_moments, N / n), N / n)
    return fc.mult_mp_convolve(fc.shift(a, sigma2), n / L)


def cdma_deconvolve(scm_moments, n, N, L, sigma2):
    """Invert :func:`cdma_forward` for the moments of ``mu_P``."""
    if not 1 <= N <= n:
        raise MeasureError("need 1 <= N <= n")
    a = fc.shift_deconvolve(fc.mult_mp_deconvolve(scm_moments, n / L), sigma2)
    return fc.mult_mp_deconvolve(fc.unpad(a, N / n), N / n)


def atoms_from_moments(moments, K_atoms):
    """``K_atoms`` equal-mass atoms whose first ``K_atoms`` moments match.

    Returns ``(measure, adjusted, roots)``: ``adjusted`` counts roots that
    were complex or negative and had to be clamped, ``roots`` are the
    sorted recovered values before coincident atoms are merged.
    """
    m = fc._moments(moments)
    if m.K < K_atoms:
        raise MeasureError(f"need {K_atoms} moments, got {m.K}")
    sums = [K_atoms * float(v) for v in m.array[:K_atoms]]
    roots, adjusted = newton_girard_roots(sums, K_atoms)
    return AtomicMeasure.uniform(roots.tolist()), adjusted, tuple(float(x) for x in roots)


def estimate_power_distribution(scm_moments, n, N, L, sigma2, K_atoms):
    """Power distribution of the users as ``K_atoms`` equal-mass atoms.

    The result's ``extras`` hold the deconvolved moments and the number of
    clamped roots.
    """
    if K_atoms > N:
        raise RankError(f"{K_atoms} atoms exceed the number of users N={N}")
    p = cdma_deconvolve(fc._moments(scm_moments).truncate(K_atoms), n, N, L, sigma2)
    mu, adjusted, roots = atoms_from_moments(p, K_atoms)
    return EstimationResult(mu, 0.0, (), {"moments": p, "roots": roots, "adjusted_roots": adjusted})


def cdma_forward_batch(p_moments, n, Ns, L, sigma2):
    """:func:`cdma_forward` for many user counts at once; one row per ``N``.

    Runs the same composition on a 2-D array with the batch kernels, in
    plain double precision.
    """
    p = np.asarray(fc._moments(p_moments).array, dtype=float)
    K = p.size
    c = np.asarray(Ns, dtype=float)[:, None] / n
    if np.any(c <= 0) or np.any(c > 1):
        raise MeasureError("need 1 <= N <= n")
    # (N/n)(mu_P ⊠ mu_{N/n}) padded at zero: the 1/c of the convolution cancels the padding factor
    a = fc.batch_cumulants_to_moments(c * p[None, :])[0]
    # binomial shift by sigma2, row by row
    full = np.hstack([np.ones((a.shape[0], 1)), a])
    shifted = np.empty_like(a)
    for j in range(1, K + 1):
        coef = np.array([math.comb(j, k) * sigma2 ** k for k in range(j + 1)])
        shifted[:, j - 1] = full[:, j::-1] @ coef
    r = n / L
    return fc.batch_cumulants_to_moments(r * shifted)[0] / r


def estimate_user_count(scm_moments, n, L, sigma2, p_assumed, *, K=4, cfg=None):
    """Number of users ``N`` in ``1..n`` best matching the SCM moments.

    The objective is :func:`weighted_mse` between the observed first ``K``
    moments and :func:`cdma_forward` applied to the assumed power law.
    """
    scm = fc._moments(scm_moments).truncate(K)
    p = p_assumed.truncate(K) if isinstance(p_assumed, MomentSequence) else moments_of(p_assumed, K)
    cfg = WeightedMseConfig(K=K) if cfg is None else cfg
    if cfg.K != K:
        raise MeasureError(f"weights are for K={cfg.K}, sequences have K={K}")
    Ns = np.arange(1, n + 1)
    pred = cdma_forward_batch(p, n, Ns, L, sigma2)
    diff = pred - np.asarray(scm.array, dtype=float)[None, :]
    obj = (diff ** 2) @ np.asarray(cfg.weights)
    trace = tuple((int(N), float(o)) for N, o in zip(Ns, obj))
    best, value = _argmin(trace)
    return EstimationResult(best, value, trace, {"K": K})


def classical_rank(eigs, sigma2, threshold_factor=1.5):
    """Number of eigenvalues above ``threshold_factor * sigma2``."""
    if not threshold_factor > 0:
        raise MeasureError("threshold factor must be positive")
    values = getattr(eigs, "eigenvalues", eigs)
    return int(np.count_nonzero(np.asarray(values) > threshold_factor * sigma2))


def rankwise_average(estimates):
    """Average sorted eigenvalue estimates of several runs position by position."""
    arr = np.array([np.sort(np.asarray(e, dtype=float)) for e in estimates])
    return arr.mean(axis=0)


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------

def capacity_from_eigenvalues(eigs, rho, *, base=2.0):
    """``mean(log(1 + rho * lambda))`` in the given log base."""
    eigs = np.asarray(eigs, dtype=float)
    return float(np.mean(np.log1p(rho * eigs)) / math.log(base))


def mimo_deconvolve(h_hat_moments, L_blocks, sigma2, *, model="blocks"):
    """Moments of ``(1/n) H H^H`` from the stacked measurements.

    ``model="blocks"`` treats the ``n x nL`` stacked matrix as an
    information-plus-noise matrix with ratio ``1/L`` and noise ``sigma2``.
    ``model="unit"`` always deconvolves with ``mu_1`` and a noise shift of
    ``sigma2 / L``; the two coincide for ``L = 1``.
    """
    if L_blocks < 1:
        raise MeasureError("need at least one block")
    if model == "blocks":
        return info_plus_noise_deconvolve(h_hat_moments, 1.0 / L_blocks, sigma2)
    if model == "unit":
        return info_plus_noise_deconvolve(h_hat_moments, 1.0, sigma2 / L_blocks)
    raise MeasureError(f"unknown model {model!r}")


def mimo_forward(h_moments, L_blocks, sigma2, *, model="blocks"):
    if model == "blocks":
        return info_plus_noise_forward(h_moments, 1.0 / L_blocks, sigma2)
    if model == "unit":
        return info_plus_noise_forward(h_moments, 1.0, sigma2 / L_blocks)
    raise MeasureError(f"unknown model {model!r}")


def estimate_capacity(h_hat_moments, n, L_blocks, sigma2, rho, *, K_atoms=None, base=2.0, model="blocks"):
    """Capacity ``(1/n) sum log(1 + rho lambda_l)`` from noisy channel measurements.

    Eigenvalues of ``(1/n) H H^H`` are approximated by ``K_atoms`` (at most
    8) equal-mass atoms recovered from the deconvolved moments.
    """
    h = fc._moments(h_hat_moments)
    K_atoms = min(h.K, 8) if K_atoms is None else K_atoms
    if not 1 <= K_atoms <= min(8, n):
        raise MeasureError("K_atoms must lie in 1..min(8, n)")
    if sigma2 == 0:
        g = h.truncate(K_atoms)
    else:
        g = mimo_deconvolve(h.truncate(K_atoms), L_blocks, sigma2, model=model)
    _, adjusted, roots = atoms_from_moments(g, K_atoms)
    cap = capacity_from_eigenvalues(roots, rho, base=base)
    return EstimationResult(cap, 0.0, (), {"moments": g, "roots": roots, "adjusted_roots": adjusted})
