"""Pure-Python moment/cumulant kernels.

Two flavours of the same recurrences:

* ``*_exact`` run on any exact number type (``Fraction``, ``int``);
* ``*_dd`` carry every quantity as an unevaluated pair ``hi + lo``
  (double-double).  The pair elements may be floats or equal-length numpy
  arrays, in which case each array position is an independent sequence.

Cumulants of moment sequences that do not come from a measure can be many
orders of magnitude larger than the moments, so plain float64 storage of
the cumulants alone loses the roundtrip; the ``lo`` words keep it.
"""

_SPLIT = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    t = _SPLIT * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def dd_add(ah, al, bh, bl):
    s, e = two_sum(ah, bh)
    return quick_two_sum(s, e + (al + bl))


def dd_mul(ah, al, bh, bl):
    p, e = two_prod(ah, bh)
    return quick_two_sum(p, e + (ah * bl + al * bh))


def dd_scale(ah, al, c):
    p, e = two_prod(ah, c)
    return quick_two_sum(p, e + al * c)


def dd_div(ah, al, c):
    q = ah / c
    p, e = two_prod(q, c)
    return quick_two_sum(q, ((ah - p) - e + al) / c)


# --- exact ---------------------------------------------------------------

def _power_table_exact(m, K):
    series = [1] + list(m)
    table = [[1] + [0] * (K - 1)]
    for _ in range(1, K):
        prev = table[-1]
        table.append([sum(prev[i] * series[j - i] for i in range(j + 1)) for j in range(K)])
    return table


def moments_to_cumulants_exact(moments):
    m = list(moments)
    K = len(m)
    table = _power_table_exact(m, K)
    out = []
    for n in range(1, K + 1):
        acc = m[n - 1]
        for k in range(1, n):
            acc -= out[k - 1] * table[k][n - k]
        out.append(acc)
    return out


def cumulants_to_moments_exact(cumulants):
    a = list(cumulants)
    K = len(a)
    series = [1] + [0] * K
    table = [[1] + [0] * (K - 1) for _ in range(K + 1)]
    out = []
    for n in range(1, K + 1):
        acc = 0
        for k in range(1, n + 1):
            acc += a[k - 1] * table[k][n - k]
        out.append(acc)
        series[n] = acc
        if n < K:
            for k in range(1, K + 1):
                prev = table[k - 1]
                table[k][n] = sum(prev[i] * series[n - i] for i in range(n + 1))
    return out


# --- double-double -------------------------------------------------------

def moments_to_cumulants_dd(hi, lo):
    """Cumulants of ``hi + lo``; returns ``(hi, lo)`` lists."""
    K = len(hi)
    zero = hi[0] * 0.0 if K else 0.0
    one = zero + 1.0
    s_hi = [one] + list(hi)
    s_lo = [zero] + list(lo)
    t_hi = [[one] + [zero] * (K - 1)]
    t_lo = [[zero] * K]
    for _ in range(1, K):
        ph, pl = t_hi[-1], t_lo[-1]
        rh, rl = [], []
        for j in range(K):
            ah, al = zero, zero
            for i in range(j + 1):
                xh, xl = dd_mul(ph[i], pl[i], s_hi[j - i], s_lo[j - i])
                ah, al = dd_add(ah, al, xh, xl)
            rh.append(ah)
            rl.append(al)
        t_hi.append(rh)
        t_lo.append(rl)
    out_hi, out_lo = [], []
    for n in range(1, K + 1):
        ah, al = hi[n - 1], lo[n - 1]
        for k in range(1, n):
            xh, xl = dd_mul(out_hi[k - 1], out_lo[k - 1], t_hi[k][n - k], t_lo[k][n - k])
            ah, al = dd_add(ah, al, -xh, -xl)
        out_hi.append(ah)
        out_lo.append(al)
    return out_hi, out_lo


def cumulants_to_moments_dd(hi, lo):
    """Moments from cumulants ``hi + lo``; returns ``(hi, lo)`` lists."""
    K = len(hi)
    zero = hi[0] * 0.0 if K else 0.0
    one = zero + 1.0
    s_hi = [one] + [zero] * K
    s_lo = [zero] * (K + 1)
    t_hi = [[one] + [zero] * (K - 1) for _ in range(K + 1)]
    t_lo = [[zero] * K for _ in range(K + 1)]
    out_hi, out_lo = [], []
    for n in range(1, K + 1):
        ah, al = zero, zero
        for k in range(1, n + 1):
            xh, xl = dd_mul(hi[k - 1], lo[k - 1], t_hi[k][n - k], t_lo[k][n - k])
            ah, al = dd_add(ah, al, xh, xl)
        out_hi.append(ah)
        out_lo.append(al)
        s_hi[n], s_lo[n] = ah, al
        if n < K:
            for k in range(1, K + 1):
                ph, pl = t_hi[k - 1], t_lo[k - 1]
                ch, cl = zero, zero
                for i in range(n + 1):
                    xh, xl = dd_mul(ph[i], pl[i], s_hi[n - i], s_lo[n - i])
                    ch, cl = dd_add(ch, cl, xh, xl)
                t_hi[k][n], t_lo[k][n] = ch, cl
    return out_hi, out_lo
