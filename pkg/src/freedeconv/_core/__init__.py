"""Moment/cumulant kernels with a compiled fast path.

The Cython module ``_nc`` handles float work when it was built; otherwise,
or when ``FREEDECONV_PURE_PYTHON`` is set, the pure-Python kernels in
``_nc_py`` are used.  Float sequences travel as ``(hi, lo)`` double-double
pairs of float64 arrays.  Exact (``Fraction``) inputs always take the
pure-Python path.
"""
import os

import numpy as np

from . import _nc_py

try:
    if os.environ.get("FREEDECONV_PURE_PYTHON"):
        raise ImportError("pure Python requested")
    from . import _nc as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

moments_to_cumulants_exact = _nc_py.moments_to_cumulants_exact
cumulants_to_moments_exact = _nc_py.cumulants_to_moments_exact


def _pair(hi, lo):
    hi = np.asarray(hi, dtype=float)
    lo = np.zeros_like(hi) if lo is None else np.asarray(lo, dtype=float)
    return hi, lo


def _py_single(func, hi, lo):
    oh, ol = func([float(x) for x in hi], [float(x) for x in lo])
    return np.array(oh, dtype=float), np.array(ol, dtype=float)


def _py_batch(func, hi, lo):
    # columns as arrays: the scalar recurrences broadcast over rows
    if hi.shape[1] == 0:
        return hi.copy(), lo.copy()
    oh, ol = func(list(hi.T), list(lo.T))
    return np.array(oh).T.copy(), np.array(ol).T.copy()


def moments_to_cumulants(hi, lo=None):
    hi, lo = _pair(hi, lo)
    if _compiled is not None:
        return _compiled.moments_to_cumulants(hi, lo)
    return _py_single(_nc_py.moments_to_cumulants_dd, hi, lo)


def cumulants_to_moments(hi, lo=None):
    hi, lo = _pair(hi, lo)
    if _compiled is not None:
        return _compiled.cumulants_to_moments(hi, lo)
    return _py_single(_nc_py.cumulants_to_moments_dd, hi, lo)


def moments_to_cumulants_batch(hi, lo=None):
    hi, lo = _pair(np.atleast_2d(hi), None if lo is None else np.atleast_2d(lo))
    if _compiled is not None:
        return _compiled.moments_to_cumulants_batch(hi, lo)
    return _py_batch(_nc_py.moments_to_cumulants_dd, hi, lo)


def cumulants_to_moments_batch(hi, lo=None):
    hi, lo = _pair(np.atleast_2d(hi), None if lo is None else np.atleast_2d(lo))
    if _compiled is not None:
        return _compiled.cumulants_to_moments_batch(hi, lo)
    return _py_batch(_nc_py.cumulants_to_moments_dd, hi, lo)
