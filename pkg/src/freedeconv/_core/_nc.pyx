# cython: language_level=3
"""Compiled moment/cumulant kernels (double-double accumulation).

Same recurrences as ``_nc_py``.  Inputs and outputs are ``(hi, lo)`` pairs
of float64 arrays; batch entry points treat each row as one sequence.
"""
import numpy as np

from libc.math cimport fma


cdef inline void _dd_add(double ah, double al, double bh, double bl,
                         double* rh, double* rl) noexcept nogil:
    cdef double s = ah + bh
    cdef double bb = s - ah
    cdef double e = (ah - (s - bb)) + (bh - bb)
    e = e + (al + bl)
    rh[0] = s + e
    rl[0] = e - (rh[0] - s)


cdef inline void _dd_mul(double ah, double al, double bh, double bl,
                         double* rh, double* rl) noexcept nogil:
    cdef double p = ah * bh
    cdef double e = fma(ah, bh, -p)
    e = e + (ah * bl + al * bh)
    rh[0] = p + e
    rl[0] = e - (rh[0] - p)


cdef void _m2c(const double[::1] mh, const double[::1] ml,
               double[::1] oh, double[::1] ol,
               double[:, ::1] th, double[:, ::1] tl) noexcept nogil:
    cdef Py_ssize_t K = mh.shape[0]
    cdef Py_ssize_t k, j, i, n
    cdef double ah, al, xh, xl, sh, sl
    for j in range(K):
        th[0, j] = 0.0
        tl[0, j] = 0.0
    th[0, 0] = 1.0
    for k in range(1, K):
        for j in range(K):
            ah = 0.0
            al = 0.0
            for i in range(j + 1):
                if i == j:
                    sh = 1.0
                    sl = 0.0
                else:
                    sh = mh[j - i - 1]
                    sl = ml[j - i - 1]
                _dd_mul(th[k - 1, i], tl[k - 1, i], sh, sl, &xh, &xl)
                _dd_add(ah, al, xh, xl, &ah, &al)
            th[k, j] = ah
            tl[k, j] = al
    for n in range(1, K + 1):
        ah = mh[n - 1]
        al = ml[n - 1]
        for k in range(1, n):
            _dd_mul(oh[k - 1], ol[k - 1], th[k, n - k], tl[k, n - k], &xh, &xl)
            _dd_add(ah, al, -xh, -xl, &ah, &al)
        oh[n - 1] = ah
        ol[n - 1] = al


cdef void _c2m(const double[::1] ch, const double[::1] cl,
               double[::1] oh, double[::1] ol,
               double[:, ::1] th, double[:, ::1] tl) noexcept nogil:
    cdef Py_ssize_t K = ch.shape[0]
    cdef Py_ssize_t k, i, n
    cdef double ah, al, xh, xl, sh, sl
    for k in range(K + 1):
        for i in range(K):
            th[k, i] = 0.0
            tl[k, i] = 0.0
        th[k, 0] = 1.0
    for n in range(1, K + 1):
        ah = 0.0
        al = 0.0
        for k in range(1, n + 1):
            _dd_mul(ch[k - 1], cl[k - 1], th[k, n - k], tl[k, n - k], &xh, &xl)
            _dd_add(ah, al, xh, xl, &ah, &al)
        oh[n - 1] = ah
        ol[n - 1] = al
        if n < K:
            for k in range(1, K + 1):
                ah = 0.0
                al = 0.0
                for i in range(n + 1):
                    if i == n:
                        sh = 1.0
                        sl = 0.0
                    else:
                        sh = oh[n - i - 1]
                        sl = ol[n - i - 1]
                    _dd_mul(th[k - 1, i], tl[k - 1, i], sh, sl, &xh, &xl)
                    _dd_add(ah, al, xh, xl, &ah, &al)
                th[k, n] = ah
                tl[k, n] = al


def _pair(hi, lo):
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    lo = np.zeros_like(hi) if lo is None else np.ascontiguousarray(lo, dtype=np.float64)
    return hi, lo


def moments_to_cumulants(hi, lo=None):
    hi, lo = _pair(hi, lo)
    K = hi.shape[0]
    oh = np.empty(K)
    ol = np.empty(K)
    if K:
        _m2c(hi, lo, oh, ol, np.empty((K, K)), np.empty((K, K)))
    return oh, ol


def cumulants_to_moments(hi, lo=None):
    hi, lo = _pair(hi, lo)
    K = hi.shape[0]
    oh = np.empty(K)
    ol = np.empty(K)
    if K:
        _c2m(hi, lo, oh, ol, np.empty((K + 1, K)), np.empty((K + 1, K)))
    return oh, ol


def moments_to_cumulants_batch(hi, lo=None):
    hi, lo = _pair(hi, lo)
    cdef const double[:, ::1] mh = hi
    cdef const double[:, ::1] ml = lo
    cdef Py_ssize_t R = hi.shape[0], K = hi.shape[1], r
    out_h = np.empty((R, K))
    out_l = np.empty((R, K))
    cdef double[:, ::1] oh = out_h
    cdef double[:, ::1] ol = out_l
    cdef double[:, ::1] th = np.empty((max(K, 1), max(K, 1)))
    cdef double[:, ::1] tl = np.empty((max(K, 1), max(K, 1)))
    if K:
        with nogil:
            for r in range(R):
                _m2c(mh[r], ml[r], oh[r], ol[r], th, tl)
    return out_h, out_l


def cumulants_to_moments_batch(hi, lo=None):
    hi, lo = _pair(hi, lo)
    cdef const double[:, ::1] ch = hi
    cdef const double[:, ::1] cl = lo
    cdef Py_ssize_t R = hi.shape[0], K = hi.shape[1], r
    out_h = np.empty((R, K))
    out_l = np.empty((R, K))
    cdef double[:, ::1] oh = out_h
    cdef double[:, ::1] ol = out_l
    cdef double[:, ::1] th = np.empty((K + 1, max(K, 1)))
    cdef double[:, ::1] tl = np.empty((K + 1, max(K, 1)))
    if K:
        with nogil:
            for r in range(R):
                _c2m(ch[r], cl[r], oh[r], ol[r], th, tl)
    return out_h, out_l
