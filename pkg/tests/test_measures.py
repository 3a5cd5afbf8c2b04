from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freedeconv.errors import MeasureError, ParseError, PoleError, RootFindingError
from freedeconv.measures import (AtomicMeasure, DensityCurve, MarchenkoPastur, MomentSequence,
                                 elementary_symmetric, eta, moments_of, mp_density, mp_moments,
                                 newton_girard_eigenvalues, newton_girard_roots, positive_extent,
                                 stieltjes, stieltjes_inversion)

from oracles import brute_moments, quad_moment


class TestAtomicMeasure:
    def test_sorted_and_merged(self):
        mu = AtomicMeasure((2.0, 1.0, 2.0 + 1e-12), (0.25, 0.5, 0.25))
        assert mu.locations == (1.0, 2.0)
        assert mu.masses == (0.5, 0.5)

    @pytest.mark.parametrize("locs,masses", [((1.0,), (0.5,)), ((-1.0,), (1.0,)), ((1.0, 2.0), (0.0, 1.0)),
                                             ((), ())])
    def test_rejects(self, locs, masses):
        with pytest.raises(MeasureError):
            AtomicMeasure(locs, masses)

    def test_two_atom(self):
        mu = AtomicMeasure.two_atom(0.25, 2.0)
        assert mu.atoms == [(0.0, 0.75), (2.0, 0.25)]
        assert AtomicMeasure.two_atom(1.0, 2.0).atoms == [(2.0, 1.0)]

    def test_text_roundtrip(self):
        mu = AtomicMeasure.uniform([0.5, 1.0, 1.5])
        assert AtomicMeasure.from_text(mu.to_text()) == mu

    def test_text_fractions_and_comments(self):
        mu = AtomicMeasure.from_text("# powers\natom 1 1/3\natom 3 1/3  # middle\n\natom 4 1/3\n")
        assert mu.locations == (1.0, 3.0, 4.0)

    def test_parse_error_line(self):
        with pytest.raises(ParseError, match="line 2"):
            AtomicMeasure.from_text("atom 1 0.5\natom x 0.5\n")
        with pytest.raises(ParseError, match="line 1"):
            AtomicMeasure.from_text("point 1 1\n")

    def test_cdf(self):
        mu = AtomicMeasure.uniform([1.0, 2.0])
        np.testing.assert_allclose(mu.cdf([0.5, 1.0, 1.5, 3.0]), [0, 0.5, 0.5, 1.0])

    def test_moments(self):
        mu = AtomicMeasure((0.5, 2.0), (0.25, 0.75))
        np.testing.assert_allclose(moments_of(mu, 5).array, brute_moments(mu.locations, mu.masses, 5))
        assert moments_of(mu, 2, exact=True).values == (Fraction(13, 8), Fraction(49, 16))


class TestMomentSequence:
    def test_indexing(self):
        m = MomentSequence([1.0, 2.0, 5.0])
        assert m.K == 3 and m.moment(1) == 1.0 and m[2] == 5.0
        assert m.truncate(2) == MomentSequence([1.0, 2.0])

    def test_exact_detected(self):
        assert MomentSequence([Fraction(1, 2), 1]).exact

    def test_hankel_check(self):
        dets = moments_of(AtomicMeasure.uniform([1, 2, 3]), 6).hankel_check()
        assert len(dets) == 4 and min(dets) > -1e-9
        # m_2 < m_1^2 is impossible for a measure
        assert min(MomentSequence([1.0, 0.5, 1.0, 5.0]).hankel_check()) < 0


class TestMarchenkoPastur:
    @pytest.mark.parametrize("c", [0.1, 0.5, 0.9])
    def test_pdf_mass_and_moments(self, c):
        law = MarchenkoPastur(c)
        mass = quad_moment(law.pdf, law.lower_edge, law.upper_edge, 0)
        assert mass == pytest.approx(1.0, abs=1e-9)
        for k in range(1, 5):
            got = quad_moment(law.pdf, law.lower_edge, law.upper_edge, k)
            assert got == pytest.approx(mp_moments(c, k).array[-1], rel=1e-8)

    def test_atom_above_one(self):
        assert MarchenkoPastur(2.0).atom_at_zero == pytest.approx(0.5)

    def test_exact_moments(self):
        # Narayana polynomials: m_3 = 1 + 3c + c^2
        c = Fraction(1, 2)
        assert mp_moments(c, 3).values == (1, Fraction(3, 2), Fraction(11, 4))

    def test_stieltjes_real_negative(self):
        law = MarchenkoPastur(0.5)
        ref = quad_moment(lambda x: law.pdf(x) / (x + 1.0), law.lower_edge, law.upper_edge, 0)
        assert law.stieltjes(-1.0).real == pytest.approx(ref, rel=1e-9)

    def test_density_grid_must_cover(self):
        with pytest.raises(MeasureError):
            mp_density(0.5, np.linspace(0.5, 1, 10))


class TestTransforms:
    def test_stieltjes_point_mass(self):
        assert stieltjes(AtomicMeasure.point_mass(1.0), 1 + 1j) == pytest.approx(1j)

    def test_pole(self):
        with pytest.raises(PoleError):
            stieltjes(AtomicMeasure.point_mass(1.0), 1.0)

    def test_eta_domain(self):
        assert eta(AtomicMeasure.point_mass(1.0), 1.0) == 0.5
        with pytest.raises(MeasureError):
            eta(AtomicMeasure.point_mass(1.0), -1.0)

    @given(st.floats(-10, 10), st.floats(1e-3, 10))
    def test_herglotz(self, x, y):
        mu = AtomicMeasure.uniform([0.1, 1.0, 4.0])
        assert stieltjes(mu, complex(x, y)).imag > 0

    def test_inversion_recovers_mp(self):
        c = 0.5
        law = MarchenkoPastur(c)
        grid = np.linspace(0.0, 3.2, 1601)
        curve = stieltjes_inversion(law.stieltjes, grid, 1e-7)
        inner = (grid > law.lower_edge + 0.01) & (grid < law.upper_edge - 0.01)
        np.testing.assert_allclose(curve.values[inner], law.pdf(grid[inner]), atol=1e-4)


class TestDensityCurve:
    def test_validation(self):
        with pytest.raises(MeasureError):
            DensityCurve([0, 1], [1, -1], (0, 1))
        with pytest.raises(MeasureError):
            DensityCurve([1, 0], [1, 1], (0, 1))
        with pytest.raises(MeasureError):
            DensityCurve([0, 1], [1, 1], (1, 0))

    def test_csv_roundtrip(self):
        curve = DensityCurve([0.0, 0.5, 1.0], [0.0, 2.0, 0.0], (0.0, 1.0))
        back = DensityCurve.from_csv(curve.to_csv("note"))
        assert np.array_equal(back.grid, curve.grid) and np.array_equal(back.values, curve.values)
        assert back.support == (0.5, 0.5)

    def test_csv_header(self):
        with pytest.raises(ParseError):
            DensityCurve.from_csv("a,b\n1,2\n")

    def test_mass_and_extent(self):
        curve = mp_density(0.5, np.linspace(0, 3, 30001))
        assert curve.is_normalized(1e-3)
        lo, hi = positive_extent(curve.grid, curve.values)
        assert lo == pytest.approx(MarchenkoPastur(0.5).lower_edge, abs=2e-4)


class TestNewtonGirard:
    def test_elementary(self):
        # roots 1, 2, 3: power sums 6, 14, 36
        assert elementary_symmetric([6, 14, 36], 3) == [6, 11, 6]

    def test_roots(self):
        np.testing.assert_allclose(newton_girard_eigenvalues([6, 14, 36], 3), [1, 2, 3], rtol=1e-12)

    @given(st.lists(st.floats(0.1, 5.0), min_size=1, max_size=6, unique=True))
    def test_power_sum_roundtrip(self, lams):
        lams = np.sort(np.array(lams))
        if lams.size > 1 and np.min(np.diff(lams)) < 0.05:
            return
        S = [float(np.sum(lams ** p)) for p in range(1, lams.size + 1)]
        np.testing.assert_allclose(newton_girard_eigenvalues(S, lams.size), lams, rtol=1e-6, atol=1e-6)

    def test_complex_roots_counted(self):
        # power sums of {1+i, 1-i}: S1 = 2, S2 = 0
        roots, adjusted = newton_girard_roots([2.0, 0.0], 2)
        assert adjusted == 2
        with pytest.raises(RootFindingError):
            newton_girard_eigenvalues([2.0, 0.0], 2)

    def test_size_limit(self):
        with pytest.raises(RootFindingError):
            newton_girard_roots([1.0] * 30, 30)


def test_sqrt_edge_extent():
    from freedeconv.measures import sqrt_edge_extent
    grid = np.linspace(0.0, 4.0, 401)
    values = np.sqrt(np.clip((grid - 1.03) * (3.07 - grid), 0, None))
    lo, hi = sqrt_edge_extent(grid, values)
    assert lo == pytest.approx(1.03, abs=1e-4) and hi == pytest.approx(3.07, abs=1e-4)
    assert sqrt_edge_extent(grid, np.zeros(401)) == (0.0, 0.0)
