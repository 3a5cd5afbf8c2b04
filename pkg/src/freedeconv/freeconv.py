"""Combinatorial free (de)convolution on moment sequences.

Additive convolution adds free cumulants.  Multiplicative convolution with
the Marchenko-Pastur law ``mu_c`` reuses the cumulant-to-moment recurrence:
the input moments scaled by ``c`` play the role of cumulants, and the output
"moments" divided by ``c`` are the moments of ``mu ⊠ mu_c``.  Deconvolution
runs the recurrence the other way.

Float sequences are processed in double-double arithmetic end to end, so
``deconvolve(convolve(m))`` returns ``m`` to near machine precision even
when intermediate sequences are huge.
"""
from __future__ import annotations

from fractions import Fraction
from math import comb

import numpy as np

from . import _core
from ._core import _nc_py as _dd
from .errors import FirstMomentZeroError, MeasureError
from .measures import CumulantSequence, MomentSequence

DEFAULT_ORDER = 8
MAX_ORDER = 32


def _check_order(seq):
    if seq.K > MAX_ORDER:
        raise MeasureError(f"truncation order {seq.K} exceeds the supported maximum {MAX_ORDER}")


def _moments(m):
    return m if isinstance(m, MomentSequence) else MomentSequence(m)


def _same_order(a, b):
    if a.K != b.K:
        raise MeasureError(f"truncation orders differ: {a.K} vs {b.K}")


def _exact_scalar(x):
    return x if isinstance(x, Fraction) else Fraction(x)


def moments_to_cumulants(m):
    """Free cumulants from moments (triangular solve, always succeeds)."""
    m = _moments(m)
    _check_order(m)
    if m.exact:
        return CumulantSequence(_core.moments_to_cumulants_exact(m.values), exact=True)
    return CumulantSequence(*_core.moments_to_cumulants(m.array, m.lo))


def cumulants_to_moments(a):
    """Moments from free cumulants via the noncrossing moment-cumulant formula."""
    a = a if isinstance(a, CumulantSequence) else CumulantSequence(a)
    _check_order(a)
    if a.exact:
        return MomentSequence(_core.cumulants_to_moments_exact(a.values), exact=True)
    return MomentSequence(*_core.cumulants_to_moments(a.array, a.lo))


def _combine(x, y, sign, cls):
    if x.exact or y.exact:
        xv = [_exact_scalar(v) for v in x.values]
        yv = [_exact_scalar(v) for v in y.values]
        return cls([u + sign * v for u, v in zip(xv, yv)], exact=True)
    hi, lo = _dd.dd_add(x.array, x.lo, sign * y.array, sign * y.lo)
    return cls(hi, lo)


def additive_free_convolve(m1, m2):
    """Moments of ``mu1 ⊞ mu2``."""
    m1, m2 = _moments(m1), _moments(m2)
    _same_order(m1, m2)
    a = _combine(moments_to_cumulants(m1), moments_to_cumulants(m2), 1, CumulantSequence)
    return cumulants_to_moments(a)


def additive_free_deconvolve(m, m2):
    """Moments of ``mu ⊟ mu2`` (may fail to be a positive measure)."""
    m, m2 = _moments(m), _moments(m2)
    _same_order(m, m2)
    a = _combine(moments_to_cumulants(m), moments_to_cumulants(m2), -1, CumulantSequence)
    return cumulants_to_moments(a)


def point_mass_moments(s, K):
    """Moments ``(s, s^2, ..., s^K)`` of ``delta_s``."""
    if isinstance(s, Fraction):
        return MomentSequence([s ** k for k in range(1, K + 1)], exact=True)
    return MomentSequence([float(s) ** k for k in range(1, K + 1)])


def shift(m, s):
    """Moments of ``A + s I`` by the binomial formula (``s`` of any sign)."""
    m = _moments(m)
    K = m.K
    if m.exact:
        s = _exact_scalar(s)
        full = [Fraction(1)] + list(m.values)
        return MomentSequence(
            [sum(comb(j, k) * s ** k * full[j - k] for k in range(j + 1)) for j in range(1, K + 1)],
            exact=True,
        )
    s = float(s)
    full_hi = [1.0] + [float(v) for v in m.array]
    full_lo = [0.0] + [float(v) for v in m.lo]
    out_hi, out_lo = [], []
    for j in range(1, K + 1):
        ah, al = full_hi[j], full_lo[j]
        for k in range(1, j + 1):
            coef = comb(j, k) * s ** k
            xh, xl = _dd.dd_scale(full_hi[j - k], full_lo[j - k], coef)
            ah, al = _dd.dd_add(ah, al, xh, xl)
        out_hi.append(ah)
        out_lo.append(al)
    return MomentSequence(out_hi, out_lo)


def shift_deconvolve(m, s2):
    """Moments of ``mu ⊟ delta_{s2}``: the spectrum moved left by ``s2 >= 0``."""
    if s2 < 0:
        raise MeasureError("shift deconvolution needs s2 >= 0")
    return shift(m, -s2)


def _scale(seq, c, cls):
    if seq.exact:
        c = _exact_scalar(c)
        return cls([v * c for v in seq.values], exact=True)
    hi, lo = _dd.dd_scale(seq.array, seq.lo, float(c))
    return cls(hi, lo)


def _unscale(seq, c, cls):
    if seq.exact:
        c = _exact_scalar(c)
        return cls([v / c for v in seq.values], exact=True)
    hi, lo = _dd.dd_div(seq.array, seq.lo, float(c))
    return cls(hi, lo)


def _check_ratio(c):
    if not c > 0:
        raise MeasureError("Marchenko-Pastur ratio c must be positive")


def mult_mp_convolve(m, c):
    """Moments of ``mu ⊠ mu_c``."""
    _check_ratio(c)
    m = _moments(m)
    as_cumulants = _scale(m, c, CumulantSequence)
    return _unscale(cumulants_to_moments(as_cumulants), c, MomentSequence)


def mult_mp_deconvolve(m, c):
    """Moments of ``mu ⊠⁻¹ mu_c``; needs a nonvanishing first moment."""
    _check_ratio(c)
    m = _moments(m)
    if m.values[0] == 0:
        raise FirstMomentZeroError("multiplicative free deconvolution needs m_1 != 0")
    scaled = _scale(m, c, MomentSequence)
    return _unscale(moments_to_cumulants(scaled), c, MomentSequence)


def scale_and_pad(m, fraction):
    """Moments of ``fraction * mu + (1 - fraction) delta_0``."""
    if not 0 < fraction <= 1:
        raise MeasureError("padding fraction must lie in (0, 1]")
    m = _moments(m)
    return _scale(m, fraction, MomentSequence)


def unpad(m, fraction):
    """Inverse of :func:`scale_and_pad`: strip a ``(1 - fraction) delta_0`` atom."""
    if not 0 < fraction <= 1:
        raise MeasureError("padding fraction must lie in (0, 1]")
    m = _moments(m)
    return _unscale(m, fraction, MomentSequence)


def batch_moments_to_cumulants(rows, lo=None):
    """Cumulants of each row of a 2-D float array, as a ``(hi, lo)`` pair.

    Uses the compiled kernel when available; intended for bulk work such
    as grid searches and roundtrip sweeps.
    """
    return _core.moments_to_cumulants_batch(rows, lo)


def batch_cumulants_to_moments(rows, lo=None):
    """Moments of each row of cumulants, as a ``(hi, lo)`` pair."""
    return _core.cumulants_to_moments_batch(rows, lo)
