"""Spectral measures, moment sequences and their transforms.

Discrete measures ``sum_i p_i delta_{lambda_i}``, the Marchenko-Pastur law
``mu_c``, sampled densities, and the Stieltjes and eta transforms.  Moment
and cumulant sequences are stored as float64 double-double pairs (or as
exact ``Fraction`` tuples in exact mode).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

from . import _core
from .errors import MeasureError, ParseError, PoleError, RootFindingError

MERGE_RTOL = 1e-9
MASS_ATOL = 1e-12
NEWTON_GIRARD_MAX_N = 24


# ---------------------------------------------------------------------------
# moment / cumulant sequences
# ---------------------------------------------------------------------------

def _is_exact(values):
    return all(isinstance(v, Rational) for v in values) and any(
        isinstance(v, Fraction) for v in values
    )


class _Sequence:
    """Finite sequence ``(x_1, ..., x_K)`` with an optional low-order word."""

    __slots__ = ("_hi", "_lo", "_exact")

    def __init__(self, values, lo=None, *, exact=None):
        values = list(values.values) if isinstance(values, _Sequence) else list(values)
        if not values:
            raise MeasureError("sequences need at least one entry (K >= 1)")
        if exact is None:
            exact = _is_exact(values)
        if exact:
            self._hi = tuple(Fraction(v) for v in values)
            self._lo = None
        else:
            hi = np.array(values, dtype=float)
            if not np.all(np.isfinite(hi)):
                raise MeasureError("sequence entries must be finite")
            lo = np.zeros_like(hi) if lo is None else np.array(lo, dtype=float)
            if lo.shape != hi.shape:
                raise MeasureError("low-order word has the wrong length")
            hi.setflags(write=False)
            lo.setflags(write=False)
            self._hi, self._lo = hi, lo
        self._exact = bool(exact)

    @property
    def exact(self):
        return self._exact

    @property
    def K(self):
        return len(self._hi)

    def __len__(self):
        return len(self._hi)

    @property
    def values(self):
        """Entries as a tuple (floats, or Fractions in exact mode)."""
        if self._exact:
            return self._hi
        return tuple(float(v) for v in self._hi)

    @property
    def array(self):
        return np.array([float(v) for v in self._hi]) if self._exact else self._hi.copy()

    @property
    def lo(self):
        """Low-order double-double word (zeros for exact sequences)."""
        return np.zeros(self.K) if self._exact else self._lo

    def __array__(self, dtype=None, copy=None):
        arr = self.array
        return arr if dtype is None else arr.astype(dtype)

    def __getitem__(self, index):
        return self.values[index]

    def __iter__(self):
        return iter(self.values)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        if self._exact or other._exact:
            return self.values == other.values
        return np.array_equal(self._hi, other._hi) and np.array_equal(self._lo, other._lo)

    def __hash__(self):
        return hash((type(self).__name__, self.values))

    def truncate(self, J):
        if not 1 <= J <= self.K:
            raise MeasureError(f"cannot truncate order {self.K} to {J}")
        if self._exact:
            return type(self)(self._hi[:J], exact=True)
        return type(self)(self._hi[:J], self._lo[:J])

    def to_exact(self):
        return type(self)([Fraction(float(v)) for v in self._hi], exact=True)

    def to_text(self):
        return " ".join(_fmt(v) for v in self.values)

    def __repr__(self):
        body = ", ".join(_fmt(v) for v in self.values)
        return f"{type(self).__name__}({body})"


class MomentSequence(_Sequence):
    """Raw moments ``(m_1, ..., m_K)`` of a spectral measure."""

    __slots__ = ()

    def moment(self, k):
        """The k-th moment, 1-based; ``moment(0)`` is 1."""
        if k == 0:
            return Fraction(1) if self._exact else 1.0
        return self.values[k - 1]

    def check_nonnegative_measure(self, tol=1e-12):
        """Raise unless ``m_1 >= 0`` and ``m_2 >= m_1**2`` (when ``K >= 2``)."""
        m = self.values
        if m[0] < -tol:
            raise MeasureError(f"first moment {m[0]} is negative")
        if self.K >= 2 and m[1] - m[0] * m[0] < -tol * max(1.0, abs(float(m[1]))):
            raise MeasureError("moments violate m_2 >= m_1^2")
        return self

    def hankel_check(self):
        """Advisory positivity test: all leading Hankel determinants ``>= 0``.

        Returns the list of determinants of ``[m_{i+j}]_{0<=i,j<=r}`` for
        each ``r`` that fits in the sequence.
        """
        m = [1.0] + [float(v) for v in self.values]
        dets = []
        r = 0
        while 2 * r <= self.K:
            H = np.array([[m[i + j] for j in range(r + 1)] for i in range(r + 1)])
            dets.append(float(np.linalg.det(H)))
            r += 1
        return dets


class CumulantSequence(_Sequence):
    """Free cumulants ``(a_1, ..., a_K)``: coefficients of the R-series."""

    __slots__ = ()


def _fmt(v):
    if isinstance(v, Fraction):
        return str(v)
    return repr(float(v))


# ---------------------------------------------------------------------------
# atomic measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomicMeasure:
    """Discrete probability measure ``sum_i p_i delta_{lambda_i}``.

    Locations are sorted ascending; locations within ``1e-9`` relative of
    each other are merged and their masses added.
    """

    locations: tuple
    masses: tuple

    def __post_init__(self):
        locs = [float(x) for x in self.locations]
        masses = [float(p) for p in self.masses]
        if len(locs) != len(masses) or not locs:
            raise MeasureError("need equally many locations and masses, at least one")
        if any(not math.isfinite(x) for x in locs + masses):
            raise MeasureError("locations and masses must be finite")
        if any(x < 0 for x in locs):
            raise MeasureError("atom locations must be nonnegative")
        if any(p <= 0 or p > 1 + MASS_ATOL for p in masses):
            raise MeasureError("atom masses must lie in (0, 1]")
        order = sorted(range(len(locs)), key=locs.__getitem__)
        merged_l, merged_p = [], []
        for i in order:
            x, p = locs[i], masses[i]
            if merged_l and abs(x - merged_l[-1]) <= MERGE_RTOL * max(abs(x), abs(merged_l[-1])):
                merged_p[-1] += p
            else:
                merged_l.append(x)
                merged_p.append(p)
        total = math.fsum(merged_p)
        if abs(total - 1.0) > MASS_ATOL:
            raise MeasureError(f"masses sum to {total!r}, not 1")
        object.__setattr__(self, "locations", tuple(merged_l))
        object.__setattr__(self, "masses", tuple(merged_p))

    @classmethod
    def from_atoms(cls, atoms):
        atoms = list(atoms)
        return cls(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms))

    @classmethod
    def point_mass(cls, location):
        return cls((location,), (1.0,))

    @classmethod
    def two_atom(cls, p, lam):
        """``(1 - p) delta_0 + p delta_lam``."""
        if p >= 1:
            return cls.point_mass(lam)
        return cls((0.0, lam), (1.0 - p, p))

    @classmethod
    def uniform(cls, locations):
        """Equal mass on each listed location (repeats add up)."""
        locations = list(locations)
        n = len(locations)
        return cls(tuple(locations), tuple([1.0 / n] * n))

    @property
    def atoms(self):
        return list(zip(self.locations, self.masses))

    def __len__(self):
        return len(self.locations)

    def shifted(self, s):
        """The measure of ``A + s I``."""
        return AtomicMeasure(tuple(x + s for x in self.locations), self.masses)

    def scaled(self, t):
        return AtomicMeasure(tuple(x * t for x in self.locations), self.masses)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        locs = np.array(self.locations)
        cum = np.cumsum(self.masses)
        idx = np.searchsorted(locs, x, side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    def to_text(self):
        return "".join(f"atom {float(x)!r} {float(p)!r}\n" for x, p in self.atoms)

    @classmethod
    def from_text(cls, text):
        atoms = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] != "atom":
                raise ParseError(f"expected 'atom <location> <mass>', got {raw!r}", lineno)
            if len(parts) != 3:
                raise ParseError("atom lines need exactly a location and a mass", lineno)
            try:
                atoms.append((float(Fraction(parts[1])), float(Fraction(parts[2]))))
            except (ValueError, ZeroDivisionError):
                raise ParseError(f"not a number in {raw!r}", lineno) from None
        if not atoms:
            raise ParseError("no atoms found")
        try:
            return cls.from_atoms(atoms)
        except MeasureError as exc:
            raise ParseError(str(exc)) from None


def moments_of(mu, K, exact=False):
    """Moments ``m_k = sum_i p_i lambda_i^k`` for ``k = 1..K``."""
    if K < 1:
        raise MeasureError("moment order K must be >= 1")
    if exact:
        locs = [Fraction(x) for x in mu.locations]
        masses = [Fraction(p) for p in mu.masses]
        powers = list(masses)
        out = []
        for _ in range(K):
            powers = [w * x for w, x in zip(powers, locs)]
            out.append(sum(powers))
        return MomentSequence(out, exact=True)
    locs = np.array(mu.locations)
    weighted = np.array(mu.masses)
    out = []
    for _ in range(K):
        weighted = weighted * locs
        out.append(math.fsum(weighted))
    return MomentSequence(out).check_nonnegative_measure()


# ---------------------------------------------------------------------------
# Marchenko-Pastur
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarchenkoPastur:
    """Marchenko-Pastur law with aspect ratio ``c``."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise MeasureError("Marchenko-Pastur ratio c must be positive")

    @property
    def lower_edge(self):
        return (1.0 - math.sqrt(self.c)) ** 2

    @property
    def upper_edge(self):
        return (1.0 + math.sqrt(self.c)) ** 2

    @property
    def atom_at_zero(self):
        return max(0.0, 1.0 - 1.0 / self.c)

    def pdf(self, x):
        """Density of the absolutely continuous part."""
        x = np.asarray(x, dtype=float)
        a, b = self.lower_edge, self.upper_edge
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.sqrt(np.clip(x - a, 0, None) * np.clip(b - x, 0, None)) / (2 * np.pi * self.c * x)
        return np.where((x > a) & (x < b) & (x > 0), f, 0.0)

    def moments(self, K):
        return mp_moments(self.c, K)

    def stieltjes(self, z):
        """Closed-form ``m(z)`` on the upper half plane / negative axis."""
        z = np.asarray(z, dtype=complex)
        c = self.c
        a, b = self.lower_edge, self.upper_edge
        root = np.sqrt(z - a) * np.sqrt(z - b)
        return (1 - c - z + root) / (2 * c * z)


def mp_moments(c, K):
    """Moments of ``mu_c`` from its free cumulants ``c^{n-1}``."""
    if K < 1:
        raise MeasureError("moment order K must be >= 1")
    if isinstance(c, Fraction):
        return MomentSequence(_core.cumulants_to_moments_exact([c ** (n - 1) for n in range(1, K + 1)]), exact=True)
    if not c > 0:
        raise MeasureError("Marchenko-Pastur ratio c must be positive")
    hi, lo = _core.cumulants_to_moments([float(c) ** (n - 1) for n in range(1, K + 1)])
    return MomentSequence(hi, lo)


# ---------------------------------------------------------------------------
# sampled densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityCurve:
    """Density sampled on a grid, plus a point mass at zero.

    ``flags`` carries diagnostics from the producer (for example that the
    density extends below zero).
    """

    grid: np.ndarray
    values: np.ndarray
    support: tuple
    atom_at_zero: float = 0.0
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise MeasureError("grid and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise MeasureError("grid must be strictly increasing")
        if np.any(values < 0):
            raise MeasureError("density values must be nonnegative")
        lo, hi = (float(s) for s in self.support)
        if lo > hi:
            raise MeasureError("support interval is reversed")
        if self.atom_at_zero < 0:
            raise MeasureError("atom at zero must be nonnegative")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", (lo, hi))
        object.__setattr__(self, "atom_at_zero", float(self.atom_at_zero))
        object.__setattr__(self, "flags", frozenset(self.flags))

    def mass(self):
        """Trapezoid integral of the density plus the zero atom."""
        return float(np.trapezoid(self.values, self.grid)) + self.atom_at_zero

    def is_normalized(self, tol=1e-3):
        return abs(self.mass() - 1.0) <= tol

    def moment(self, k):
        """Trapezoid estimate of ``int x^k f(x) dx`` (the zero atom adds nothing for k >= 1)."""
        base = float(np.trapezoid(self.values * self.grid ** k, self.grid))
        return base + (self.atom_at_zero if k == 0 else 0.0)

    @property
    def argmax(self):
        i = int(np.argmax(self.values))
        return float(self.grid[i]), float(self.values[i])

    def to_csv(self, header_comment=None):
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("x,f\n")
        for x, f in zip(self.grid, self.values):
            buf.write(f"{float(x)!r},{float(f)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, support=None, atom_at_zero=0.0):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "f"]:
            raise ParseError("density CSV must start with header 'x,f'")
        xs, fs = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"expected two columns, got {len(row)}", lineno)
            try:
                xs.append(float(row[0]))
                fs.append(float(row[1]))
            except ValueError:
                raise ParseError(f"not a number in {row!r}", lineno) from None
        grid, values = np.array(xs), np.array(fs)
        if support is None:
            support = positive_extent(grid, values)
        return cls(grid, values, support, atom_at_zero)


def positive_extent(grid, values):
    """Smallest interval spanned by the grid points where the density is positive."""
    pos = np.flatnonzero(np.asarray(values) > 0)
    if pos.size == 0:
        return (float(grid[0]), float(grid[0]))
    return (float(grid[pos[0]]), float(grid[pos[-1]]))



def sqrt_edge_extent(grid, values):
    """Support edges of a density with square-root behaviour at its edges.

    ``f^2`` is extrapolated linearly from the two outermost positive points
    on each side; the result is clipped to the neighbouring grid points
    where the density vanishes.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    pos = np.flatnonzero(values > 0)
    if pos.size < 2:
        return positive_extent(grid, values)

    def edge(i, j, bound):
        f1, f2 = values[i] ** 2, values[j] ** 2
        if f2 == f1:
            return float(grid[i])
        x = grid[i] - f1 * (grid[j] - grid[i]) / (f2 - f1)
        lo, hi = sorted((float(grid[i]), bound))
        return float(min(max(x, lo), hi))

    first, last = pos[0], pos[-1]
    lo_bound = float(grid[first - 1]) if first > 0 else float(grid[first])
    hi_bound = float(grid[last + 1]) if last + 1 < grid.size else float(grid[last])
    return edge(first, first + 1, lo_bound), edge(last, last - 1, hi_bound)

def mp_density(c, grid):
    """``mu_c`` sampled on ``grid``; the grid must cover both edges."""
    law = MarchenkoPastur(c)
    grid = np.asarray(grid, dtype=float)
    a, b = law.lower_edge, law.upper_edge
    if grid[0] > a + 1e-12 or grid[-1] < b - 1e-12:
        raise MeasureError(f"grid [{grid[0]}, {grid[-1]}] does not cover the support [{a}, {b}]")
    return DensityCurve(grid, law.pdf(grid), (a, b), law.atom_at_zero)


# ---------------------------------------------------------------------------
# Newton-Girard
# ---------------------------------------------------------------------------

def elementary_symmetric(power_sums, n):
    """``(e_1..e_n)`` from power sums ``(S_1..S_n)`` via Newton's identities."""
    S = [float(s) for s in power_sums][:n]
    if len(S) < n:
        raise MeasureError(f"need {n} power sums, got {len(S)}")
    e = [1.0]
    for m in range(1, n + 1):
        acc = 0.0
        for k in range(1, m + 1):
            acc += (-1) ** (k - 1) * e[m - k] * S[k - 1]
        e.append(acc / m)
    return e[1:]


def newton_girard_roots(power_sums, n, *, max_n=NEWTON_GIRARD_MAX_N, imag_tol=1e-6):
    """Roots of the characteristic polynomial rebuilt from power sums.

    Returns ``(eigenvalues, adjusted)`` where ``adjusted`` counts roots that
    had to be projected to the real axis beyond ``imag_tol`` or clamped from
    below zero beyond the same tolerance.  Eigenvalues are sorted ascending
    and nonnegative.
    """
    if n < 1:
        raise MeasureError("need at least one eigenvalue")
    if n > max_n:
        raise RootFindingError(f"{n} eigenvalues exceed the conditioning limit {max_n}")
    e = elementary_symmetric(power_sums, n)
    coeffs = [1.0] + [(-1) ** k * e[k - 1] for k in range(1, n + 1)]
    try:
        roots = np.roots(coeffs)
    except np.linalg.LinAlgError as exc:
        raise RootFindingError(f"companion eigenvalue solve failed: {exc}") from None
    if roots.size != n or not np.all(np.isfinite(roots)):
        raise RootFindingError("companion eigenvalue solve did not converge")
    scale = max(float(np.max(np.abs(roots))), 1e-300)
    tol = imag_tol * scale
    adjusted = int(np.sum(np.abs(roots.imag) > tol))
    real = np.sort(roots.real)
    adjusted += int(np.sum(real < -tol))
    return np.clip(real, 0.0, None), adjusted


def newton_girard_eigenvalues(power_sums, n, *, max_n=NEWTON_GIRARD_MAX_N, imag_tol=1e-6):
    """Eigenvalues ``lambda_1 <= ... <= lambda_n`` with ``S_p = sum lambda_i^p``.

    Roots with imaginary part below ``imag_tol`` times the spectral scale are
    projected to the real axis and roots in ``(-imag_tol * scale, 0)`` are
    set to zero; anything worse raises :class:`RootFindingError`.
    """
    roots, adjusted = newton_girard_roots(power_sums, n, max_n=max_n, imag_tol=imag_tol)
    if adjusted:
        raise RootFindingError(f"{adjusted} root(s) are complex or negative beyond tolerance")
    return roots


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def stieltjes(mu, z):
    """``m_mu(z) = sum_i p_i / (lambda_i - z)``."""
    z_arr = np.asarray(z, dtype=complex)
    locs = np.array(mu.locations)
    masses = np.array(mu.masses)
    diff = locs - z_arr[..., None]
    if np.any(diff == 0):
        raise PoleError("Stieltjes transform evaluated at an atom")
    out = np.sum(masses / diff, axis=-1)
    return complex(out) if out.ndim == 0 else out


def eta(mu, z):
    """``eta_mu(z) = sum_i p_i / (1 + z lambda_i)`` for real ``z >= 0``."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise MeasureError("the eta transform is defined for z >= 0")
    locs = np.array(mu.locations)
    masses = np.array(mu.masses)
    out = np.sum(masses / (1.0 + z_arr[..., None] * locs), axis=-1)
    return float(out) if out.ndim == 0 else out


def default_omega(grid):
    grid = np.asarray(grid, dtype=float)
    return 1e-6 * max(float(grid[-1] - grid[0]), 1e-300)


def stieltjes_inversion(m, grid, omega=None, *, support=None, atom_at_zero=0.0):
    """Density ``(1/pi) Im m(x + i omega)`` on ``grid``.

    ``m`` is either the array of Stieltjes values already evaluated on the
    line ``Im z = omega`` or a callable that is evaluated there.  Tiny
    negative values (rounding) are clipped to zero.
    """
    grid = np.asarray(grid, dtype=float)
    if callable(m):
        omega = default_omega(grid) if omega is None else omega
        values = np.asarray(m(grid + 1j * omega), dtype=complex)
    else:
        values = np.asarray(m, dtype=complex)
    f = np.clip(values.imag / np.pi, 0.0, None)
    if support is None:
        support = (float(grid[0]), float(grid[-1]))
    return DensityCurve(grid, f, support, atom_at_zero)
