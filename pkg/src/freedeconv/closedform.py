"""Exact densities for two-atom measures against Marchenko-Pastur.

For ``mu = (1 - p) delta_0 + p delta_lam`` the density of ``mu ⊠ mu_c`` has
a closed form supported on ``I = [lam(1+cp) - 2 lam sqrt(cp), lam(1+cp) +
2 lam sqrt(cp)]``.  A formally analogous expression is given for the
deconvolution ``mu ⊠⁻¹ mu_c`` on ``J``; see :func:`deconv_density` for the
caveats.  For general discrete ``mu`` the eta-transform equation is a
polynomial and is solved numerically by root continuation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import BranchTrackingError, DomainError, MeasureError, NoSolutionError
from .measures import AtomicMeasure, DensityCurve, default_omega, stieltjes_inversion

FLAG_BELOW_ZERO = "support_below_zero"
FLAG_EXTRAPOLATED_BRANCH = "extrapolated_branch"


@dataclass(frozen=True)
class SupportInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise MeasureError("support interval is reversed")

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self):
        return self.hi - self.lo

    def __contains__(self, x):
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class TwoAtomParams:
    """Parameters ``(p, lam)`` of ``(1-p) delta_0 + p delta_lam`` and the ratio ``c``."""

    p: float
    lam: float
    c: float

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise MeasureError("p must lie in (0, 1]")
        if not self.lam > 0:
            raise MeasureError("lambda must be positive")
        if not self.c > 0:
            raise MeasureError("c must be positive")

    @property
    def cp(self):
        return self.c * self.p

    def measure(self):
        return AtomicMeasure.two_atom(self.p, self.lam)

    def conv_support(self):
        center = self.lam * (1 + self.cp)
        half = 2 * self.lam * math.sqrt(self.cp)
        return SupportInterval(center - half, center + half)

    def deconv_support(self):
        if self.cp > 1:
            raise DomainError("the deconvolution interval needs cp <= 1")
        center = self.lam * (1 - 2 * self.cp)
        half = 2 * self.lam * math.sqrt(self.cp * (1 - self.cp))
        return SupportInterval(center - half, center + half)

    @property
    def deconv_below_zero(self):
        return self.deconv_support().lo < 0


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv_density_values(params, x):
    """Density of ``mu ⊠ mu_c`` at ``x`` (zero outside the support)."""
    x = np.asarray(x, dtype=float)
    I = params.conv_support()
    k1 = np.clip(x - I.lo, 0, None)
    k2 = np.clip(I.hi - x, 0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.sqrt(k1 * k2) / (2 * params.c * params.lam * x * np.pi)
    return np.where((x > I.lo) & (x < I.hi) & (x > 0), f, 0.0)


def conv_maximum(params):
    """Location and value of the density maximum (needs ``cp < 1``)."""
    cp = params.cp
    if cp >= 1:
        raise DomainError("the interior maximum formula needs cp < 1")
    x_star = params.lam * (1 - cp) ** 2 / (1 + cp)
    f_star = math.sqrt(cp) / (params.c * math.pi * params.lam * (1 - cp))
    return x_star, f_star


def _sine_quad(g, I):
    """``int_I g(x) sqrt((x-lo)(hi-x)) dx`` with ``x = center + (w/2) sin t``."""
    r = 0.5 * I.width
    center = I.center

    def integrand(t):
        return g(center + r * math.sin(t)) * (r * math.cos(t)) ** 2

    val, _ = integrate.quad(integrand, -math.pi / 2, math.pi / 2, epsabs=1e-15, epsrel=1e-13, limit=200)
    return val


def conv_moment(params, k):
    """``int x^k f(x) dx`` over the continuous part, by quadrature."""
    scale = 1.0 / (2 * params.c * params.lam * math.pi)
    return _sine_quad(lambda x: scale * x ** (k - 1), params.conv_support())


def conv_density(params, grid):
    """Sample the density of ``mu ⊠ mu_c``; the zero atom is ``1 - int f``."""
    grid = np.asarray(grid, dtype=float)
    I = params.conv_support()
    if grid[0] > I.lo + 1e-12 or grid[-1] < I.hi - 1e-12:
        raise DomainError(f"grid does not span the support [{I.lo}, {I.hi}]")
    atom = max(0.0, 1.0 - conv_moment(params, 0))
    return DensityCurve(grid, conv_density_values(params, grid), (I.lo, I.hi), atom)


def quadratic_conv_transform(params, z):
    """Stieltjes transform of ``mu ⊠ mu_c`` from the quadratic it satisfies.

    ``-c lam z m^2 + (lam(1-2c+cp) - z) m + lam(1-p)(1-c)/z - 1 = 0``.  The
    square root is taken as ``sqrt(z - a) sqrt(z - b)`` with ``a, b`` the
    support edges; this is the root with ``Im m > 0`` on the upper half
    plane and the real root on the negative axis.
    """
    z = np.asarray(z, dtype=complex)
    c, p, lam = params.c, params.p, params.lam
    I = params.conv_support()
    root = np.sqrt(z - I.lo) * np.sqrt(z - I.hi)
    m = (lam * (1 - 2 * c + c * p) - z + root) / (2 * c * lam * z)
    return complex(m) if m.ndim == 0 else m


def conv_quadratic_residual(params, z, m):
    c, p, lam = params.c, params.p, params.lam
    return -c * lam * z * m ** 2 + (lam * (1 - 2 * c + c * p) - z) * m + lam * (1 - p) * (1 - c) / z - 1


# ---------------------------------------------------------------------------
# deconvolution
# ---------------------------------------------------------------------------

def deconv_density_values(params, x):
    x = np.asarray(x, dtype=float)
    J = params.deconv_support()
    l1 = np.clip(x - J.lo, 0, None)
    l2 = np.clip(J.hi - x, 0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.sqrt(l1 * l2) / (2 * params.c * x ** 2)
    return np.where((x > J.lo) & (x < J.hi), f, 0.0)


def deconv_density(params, grid):
    """Sample ``sqrt(L1 L2) / (2 c x^2)`` on ``J``, zero outside.

    ``J`` may extend below zero; the curve then carries the
    ``support_below_zero`` flag and is reported as-is.  For ``c >= 1/2`` it
    also carries ``extrapolated_branch``.  This expression does not
    reproduce the moments of the combinatorial deconvolution (compare
    :func:`deconv_moment` with ``freeconv.mult_mp_deconvolve``);
    :func:`quadratic_deconv_transform` gives the Stieltjes transform of the
    formal deconvolution, which has no density on the real line.
    """
    grid = np.asarray(grid, dtype=float)
    J = params.deconv_support()
    if grid[0] > J.lo + 1e-12 or grid[-1] < J.hi - 1e-12:
        raise DomainError(f"grid does not span the interval [{J.lo}, {J.hi}]")
    flags = set()
    if J.lo < 0:
        flags.add(FLAG_BELOW_ZERO)
        warnings.warn("deconvolution interval extends below zero", RuntimeWarning, stacklevel=2)
    if params.c >= 0.5:
        flags.add(FLAG_EXTRAPOLATED_BRANCH)
    values = deconv_density_values(params, grid)
    return DensityCurve(grid, values, (J.lo, J.hi), 0.0, flags)


def deconv_moment(params, k):
    """``int x^k f(x) dx`` for the deconvolution expression on ``J``."""
    J = params.deconv_support()
    if J.lo <= 0:
        raise DomainError("the deconvolution density is singular at 0, which lies in J")
    scale = 1.0 / (2 * params.c)
    return _sine_quad(lambda x: scale * x ** (k - 2), J)


def quadratic_deconv_transform(params, z):
    """Stieltjes transform of the formal deconvolution ``mu ⊠⁻¹ mu_c``.

    Root of ``c z^2 m^2 + (lam - z(1-2c)) m + lam(1-p)/z - (1-c) = 0`` with
    ``m ~ -1/z`` at infinity.  The discriminant ``z^2 - 2 lam(1-2cp) z +
    lam^2`` has complex zeros ``lam(1-2cp) ± 2i lam sqrt(cp(1-cp))`` for
    ``0 < cp < 1``, so ``m`` is real on the real axis away from ``z = 0``.
    """
    z = np.asarray(z, dtype=complex)
    c, p, lam = params.c, params.p, params.lam
    center = lam * (1 - 2 * c * p)
    half = 2 * lam * math.sqrt(c * p * (1 - c * p))
    # cut joins the two complex branch points; sqrt ~ (z - center) far away
    root = np.sqrt(z - center - 1j * half) * np.sqrt(z - center + 1j * half)
    root = np.where(((z - center) * root).real >= 0, root, -root)
    m = (z * (1 - 2 * c) - lam - root) / (2 * c * z ** 2)
    return complex(m) if m.ndim == 0 else m


# ---------------------------------------------------------------------------
# parameter recovery
# ---------------------------------------------------------------------------

def _peak(curve):
    """Grid maximum refined by a parabola through its neighbours."""
    v = curve.values
    i = int(np.argmax(v))
    if 0 < i < v.size - 1:
        x0, x1, x2 = curve.grid[i - 1:i + 2]
        y0, y1, y2 = v[i - 1:i + 2]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
        if a < 0:
            xv = -b / (2 * a)
            if x0 <= xv <= x2:
                cc = y1 - a * x1 * x1 - b * x1
                return float(a * xv * xv + b * xv + cc)
    return float(v[i])


def recover_two_atom(observed, c):
    """Invert support width and peak height of ``mu ⊠ mu_c`` for ``(p, lam)``.

    With ``s = sqrt(cp)``: ``width = 4 lam s`` and
    ``peak = s / (c pi lam (1 - s^2))``, so
    ``s^2 / (1 - s^2) = c pi width peak / 4``.
    """
    if not c > 0:
        raise MeasureError("c must be positive")
    lo, hi = observed.support
    width = hi - lo
    peak = _peak(observed)
    if width <= 0 or peak <= 0:
        raise NoSolutionError("observed density has no extent or no mass")
    r = c * math.pi * width * peak / 4
    s2 = r / (1 + r)
    p = s2 / c
    if p > 1 + 1e-9:
        raise NoSolutionError(f"width {width} and peak {peak} imply p = {p} > 1 at c = {c}")
    lam = width / (4 * math.sqrt(s2))
    return TwoAtomParams(min(p, 1.0), lam, c)


# ---------------------------------------------------------------------------
# general discrete measures
# ---------------------------------------------------------------------------

def _eta_polynomial(locs, masses, c, w):
    """Coefficients (highest first) of the polynomial in eta at ``w = -1/z``.

    ``sum_i p_i / (1 + w lam_i (1 - c + c eta)) = eta`` with the
    denominators cleared.
    """
    zero_mass = sum(p for x, p in zip(locs, masses) if x == 0)
    nz = [(x, p) for x, p in zip(locs, masses) if x != 0]
    factors = [np.array([w * x * c, 1 + w * x * (1 - c)]) for x, _ in nz]
    full = np.array([1.0 + 0j])
    for f in factors:
        full = np.convolve(full, f)
    poly = np.convolve(full, np.array([-1.0, 0.0]))
    poly = poly.astype(complex)
    if zero_mass:
        poly[-len(full):] += zero_mass * full
    for i, (_, p) in enumerate(nz):
        others = np.array([1.0 + 0j])
        for j, f in enumerate(factors):
            if j != i:
                others = np.convolve(others, f)
        poly[-len(others):] += p * others
    return poly


def _polish(poly, root, steps=3):
    dpoly = np.polyder(poly)
    for _ in range(steps):
        d = np.polyval(dpoly, root)
        if d == 0:
            break
        root = root - np.polyval(poly, root) / d
    return root


def _relative_residual(poly, root):
    scale = np.sum(np.abs(poly) * np.abs(root) ** np.arange(len(poly) - 1, -1, -1))
    return abs(np.polyval(poly, root)) / max(scale, 1e-300)


def _choose(poly, z, target):
    roots = np.roots(poly)
    m = -roots / z
    herglotz = roots[m.imag > 0] if z.imag > 0 else roots
    pool = herglotz if herglotz.size else roots
    return pool[np.argmin(np.abs(pool - target))]


def solve_eta_convolution(mu, c, z_grid, *, jump_tol=0.1, max_halvings=30, return_residuals=False):
    """Stieltjes transform of ``mu ⊠ mu_c`` on points of the upper half plane.

    For each ``z`` the eta-transform ``eta(w)`` at ``w = -1/z`` solves a
    polynomial of degree (number of nonzero atoms + 1).  The branch is
    followed by continuity from a far-right starting point where
    ``eta ~ 1 + m_1 / z``, sweeping the grid by decreasing real part and
    halving steps when the root moves by more than
    ``jump_tol * max(|eta|, 0.05)``.
    Among the roots, the ones giving ``Im m > 0`` are preferred.  Returns
    ``m(z) = -eta(-1/z) / z`` in the order of ``z_grid``.
    """
    if not c > 0:
        raise MeasureError("c must be positive")
    if len(mu) > 12:
        raise MeasureError("the eta solver supports at most 12 atoms")
    z_grid = np.asarray(z_grid, dtype=complex)
    if np.any(z_grid.imag <= 0):
        raise MeasureError("evaluation points must lie in the upper half plane")
    locs, masses = mu.locations, mu.masses
    m1 = float(np.dot(locs, masses))
    edge = max(locs) * (1 + math.sqrt(c)) ** 2
    order = np.argsort(-z_grid.real, kind="stable")
    first = z_grid[order[0]]
    start = complex(max(first.real, edge) + 10 * (edge + 1), first.imag)

    def solve_at(z, target):
        poly = _eta_polynomial(locs, masses, c, -1.0 / z)
        return poly, _polish(poly, _choose(poly, z, target))

    prev_z, prev_eta = start, 1.0 + m1 / start
    out = np.empty(z_grid.size, dtype=complex)
    resid = np.empty(z_grid.size)
    path = [first] + [z_grid[i] for i in order]
    for step, z in enumerate(path):
        # walk from prev_z to z, subdividing on jumps
        todo = [(z, 0)]
        while todo:
            zt, depth = todo[-1]
            poly, eta_t = solve_at(zt, prev_eta)
            if abs(eta_t - prev_eta) > jump_tol * max(abs(prev_eta), 0.05) and zt != prev_z:
                if depth >= max_halvings:
                    raise BranchTrackingError("root continuation failed to converge", zt)
                todo.append((0.5 * (prev_z + zt), depth + 1))
                continue
            todo.pop()
            prev_z, prev_eta = zt, eta_t
        if step > 0:
            idx = order[step - 1]
            out[idx] = -prev_eta / z
            resid[idx] = _relative_residual(poly, prev_eta)
    out = out if z_grid.ndim else out.reshape(())
    return (out, resid) if return_residuals else out


def eta_convolution_density(mu, c, grid, omega=None):
    """Density of ``mu ⊠ mu_c`` from :func:`solve_eta_convolution`."""
    grid = np.asarray(grid, dtype=float)
    omega = default_omega(grid) if omega is None else omega
    z = grid + 1j * omega
    m = solve_eta_convolution(mu, c, z)
    zero_mass = sum(p for x, p in mu.atoms if x == 0)
    atom = max(0.0, 1.0 - min(1.0 - zero_mass, 1.0 / c))
    # remove the pole of the zero atom before inverting
    m = m + atom / z
    return stieltjes_inversion(m, grid, omega, atom_at_zero=atom)
