import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freedeconv import estimators as est
from freedeconv import freeconv as fc
from freedeconv import rmt
from freedeconv.errors import FirstMomentZeroError, MeasureError, RankError
from freedeconv.measures import AtomicMeasure, MomentSequence, mp_moments, moments_of

HALF = AtomicMeasure.two_atom(0.5, 1.0)
POWERS = AtomicMeasure.uniform([0.5, 1.0, 1.5])


class TestMetrics:
    def test_mse_examples(self):
        assert est.moment_mse([1, 2], [1, 2]) == 0
        assert est.moment_mse([1, 2], [1, 3]) == 1
        assert est.moment_mse([0, 0], [1, 1]) == 2

    def test_mse_order_mismatch(self):
        with pytest.raises(MeasureError):
            est.moment_mse([1, 2], [1, 2, 3])

    def test_catalan_weights(self):
        assert est.WeightedMseConfig(K=8).weights == (0, 1, 0, 2, 0, 5, 0, 14)
        assert est.WeightedMseConfig(K=4, scheme="central_binomial").weights == (0, 2, 0, 6)
        with pytest.raises(MeasureError):
            est.WeightedMseConfig(K=2, weights=(1, -1))
        with pytest.raises(MeasureError):
            est.WeightedMseConfig(K=2, scheme="nope")

    def test_weighted_examples(self):
        assert est.weighted_mse([1, 2, 3, 4], [1, 3, 3, 4]) == 1
        assert est.weighted_mse([1, 2, 3, 4], [7, 2, -3, 4]) == 0
        assert est.weighted_mse([1, 2, 3, 4], [1, 2, 3, 4]) == 0

    @given(st.lists(st.integers(-40, 40), min_size=4, max_size=4), st.lists(st.integers(-40, 40), min_size=4, max_size=4))
    def test_nonnegative(self, a, b):
        a, b = [x / 4 for x in a], [x / 4 for x in b]
        assert est.moment_mse(a, b) >= 0
        w = est.weighted_mse(a, b)
        assert w >= 0
        assert (w == 0) == (a[1] == b[1] and a[3] == b[3])


class TestCovariance:
    def test_g2_identity_covariance(self):
        out = est.g2_estimate(mp_moments(0.3, 6), 0.3)
        np.testing.assert_allclose(out.array, 1.0, atol=1e-13)

    def test_g2_needs_first_moment(self):
        with pytest.raises(FirstMomentZeroError):
            est.g2_estimate([0.0, 1.0], 0.5)

    def test_info_plus_noise_noiseless(self):
        m = moments_of(HALF, 6)
        np.testing.assert_allclose(est.info_plus_noise_deconvolve(m, 0.5, 0.0).array, m.array, rtol=1e-14)

    @pytest.mark.parametrize("c,sigma2", [(0.5, 0.1), (2.0, 0.3), (0.1, 1.0)])
    def test_info_plus_noise_roundtrip(self, c, sigma2):
        m = moments_of(POWERS, 8)
        w = est.info_plus_noise_forward(m, c, sigma2)
        back, inner = est.info_plus_noise_deconvolve(w, c, sigma2, return_intermediate=True)
        np.testing.assert_allclose(back.array, m.array, rtol=1e-10)
        np.testing.assert_allclose(inner.array, fc.mult_mp_deconvolve(m, c).array, rtol=1e-10)

    def test_info_plus_noise_monte_carlo(self):
        n, N, sigma2 = 256, 512, 0.1
        fn = lambda s: est.info_plus_noise_deconvolve(  # noqa: E731
            rmt.empirical_moments(rmt.sample_info_plus_noise(HALF, n, N, sigma2, s), 4), n / N, sigma2
        ).array
        avg = np.mean(rmt.run_trials(fn, 0, 100), axis=0)
        np.testing.assert_allclose(avg, 0.5, atol=0.05)

    @pytest.mark.parametrize("c,sigma2", [(0.5, 0.1), (2.0, 0.0)])
    def test_channel_roundtrip(self, c, sigma2):
        m = moments_of(POWERS, 8)
        back = est.estimate_channel_covariance(est.channel_covariance_forward(m, c, sigma2), c, sigma2)
        np.testing.assert_allclose(back.array, m.array, rtol=1e-10)

    @pytest.mark.parametrize("L,tol", [(512, 0.05), (128, 0.1)])
    def test_channel_monte_carlo(self, L, tol):
        n, sigma2 = 256, 0.1
        theta = HALF.shifted(sigma2)
        fn = lambda s: est.estimate_channel_covariance(  # noqa: E731
            rmt.empirical_moments(rmt.sample_covariance_observations(theta, n, L, s), 4), n / L, sigma2
        ).array
        avg = np.mean(rmt.run_trials(fn, 0, 100), axis=0)
        np.testing.assert_allclose(avg, 0.5, atol=tol)


class TestNoiseVariance:
    def test_exact_gridpoint(self):
        r = moments_of(HALF, 4)
        scm = est.channel_covariance_forward(r, 0.5, 0.09)
        res = est.estimate_noise_variance(scm, r, 0.5, reference_sigma=0.31)
        assert res.estimate == 0.3
        assert res.objective < 1e-20
        assert len(res.trace) == 201
        assert res.objective == min(o for _, o in res.trace)

    def test_default_grid(self):
        r = moments_of(HALF, 4)
        scm = est.channel_covariance_forward(r, 0.5, 0.04)
        res = est.estimate_noise_variance(scm, r, 0.5)
        assert res.estimate == 0.2
        assert res.trace[0][0] == 0.0

    def test_explicit_grid_and_step(self):
        r = moments_of(HALF, 4)
        scm = est.channel_covariance_forward(r, 0.5, 0.25)
        res = est.estimate_noise_variance(scm, r, 0.5, grid=(0.0, 1.0, 0.1))
        assert res.estimate == 0.5 and len(res.trace) == 11
        with pytest.raises(MeasureError):
            est.estimate_noise_variance(scm, r, 0.5, grid=(0.0, 1.0, 0.0))

    def test_trace_csv(self):
        res = est.EstimationResult(0.3, 0.0, ((0.2, 1.0), (0.3, 0.0)))
        assert res.trace_csv().splitlines() == ["candidate,objective", "0.2,1.0", "0.3,0.0"]
        assert "estimate = 0.3" in res.to_text()


class TestCdma:
    n, N = 256, 36

    def test_forward_inverse(self):
        m = moments_of(POWERS, 8)
        f = est.cdma_forward(m, self.n, self.N, 512, 0.1)
        np.testing.assert_allclose(est.cdma_deconvolve(f, self.n, self.N, 512, 0.1).array, m.array, rtol=1e-10)

    def test_power_roundtrip(self):
        scm = est.cdma_forward(moments_of(POWERS, 3), self.n, self.N, 2048, 0.1)
        res = est.estimate_power_distribution(scm, self.n, self.N, 2048, 0.1, 3)
        np.testing.assert_allclose(res.estimate.locations, [0.5, 1.0, 1.5], atol=1e-6)
        assert res.extras["adjusted_roots"] == 0

    def test_rank_error(self):
        with pytest.raises(RankError):
            est.estimate_power_distribution([1, 2, 3, 4], 8, 2, 16, 0.1, 3)
        with pytest.raises(MeasureError):
            est.cdma_forward([1.0], 8, 9, 16, 0.1)

    def _noiseless(self):
        n, N, L = self.n, self.N, 64 * self.n
        s = rmt.sample_cdma(AtomicMeasure.point_mass(1.0), n, N, L, 0.0, 0)
        return est.estimate_power_distribution(rmt.empirical_moments(s, 3), n, N, L, 0.0, 3)

    def test_noiseless_large_L_moments(self):
        res = self._noiseless()
        np.testing.assert_allclose(res.extras["moments"].array, 1.0, atol=0.05)
        assert np.mean(res.extras["roots"]) == pytest.approx(1.0, abs=0.05)

    @pytest.mark.xfail(
        strict=True,
        reason="a triple root amplifies the O(1/sqrt(nN)) spreading-matrix fluctuation of the moments to ~0.1",
    )
    def test_noiseless_large_L_atoms(self):
        np.testing.assert_allclose(self._noiseless().extras["roots"], 1.0, atol=0.05)

    def test_user_count_exact(self):
        p = AtomicMeasure.point_mass(1.0)
        scm = est.cdma_forward(moments_of(p, 4), self.n, 36, 1024, 0.1)
        res = est.estimate_user_count(scm, self.n, 1024, 0.1, p)
        assert res.estimate == 36
        assert [N for N, _ in res.trace] == list(range(1, self.n + 1))

    def test_classical_rank(self):
        assert est.classical_rank(np.zeros(4), 0.1) == 0
        assert est.classical_rank(np.array([0.2, 0.05]), 0.1, 1.5) == 1
        with pytest.raises(MeasureError):
            est.classical_rank(np.zeros(2), 0.1, 0)

    @given(st.lists(st.floats(0, 5), min_size=1, max_size=30), st.floats(0.1, 3), st.floats(0.1, 3))
    def test_classical_monotone(self, eigs, a, b):
        lo, hi = sorted((a, b))
        assert est.classical_rank(np.array(eigs), 0.1, hi) <= est.classical_rank(np.array(eigs), 0.1, lo)

    def test_rankwise_average(self):
        np.testing.assert_allclose(est.rankwise_average([[2, 1], [3, 4]]), [2.0, 3.0])


class TestCapacity:
    def test_trivial(self):
        assert est.estimate_capacity(np.ones(4), 4, 1, 0.0, 1.0).estimate == pytest.approx(1.0, abs=1e-6)
        assert est.capacity_from_eigenvalues(np.zeros(3), 5.0) == 0.0
        assert est.capacity_from_eigenvalues([math.e - 1], 1.0, base=math.e) == pytest.approx(1.0)

    @pytest.mark.parametrize("model", ["blocks", "unit"])
    @pytest.mark.parametrize("L", [1, 4])
    def test_forward_inverse(self, model, L):
        m = moments_of(POWERS, 6)
        f = est.mimo_forward(m, L, 0.01, model=model)
        np.testing.assert_allclose(est.mimo_deconvolve(f, L, 0.01, model=model).array, m.array, rtol=1e-10)

    def test_exact_capacity(self):
        h = moments_of(POWERS, 3)
        f = est.mimo_forward(h, 4, 0.01)
        res = est.estimate_capacity(f, 126, 4, 0.01, 1.0, K_atoms=3)
        truth = est.capacity_from_eigenvalues([0.5, 1.0, 1.5], 1.0)
        assert res.estimate == pytest.approx(truth, abs=1e-9)

    def test_bad_arguments(self):
        with pytest.raises(MeasureError):
            est.estimate_capacity(np.ones(4), 4, 1, 0.0, 1.0, K_atoms=9)
        with pytest.raises(MeasureError):
            est.mimo_deconvolve([1.0, 1.0], 0, 0.1)
        with pytest.raises(MeasureError):
            est.mimo_forward([1.0, 1.0], 1, 0.1, model="other")

    def test_monte_carlo_improves_with_blocks(self):
        n, sigma2 = 126, 0.01
        truth = est.capacity_from_eigenvalues([0.5, 1.0, 1.5], 1.0)

        def error(L):
            fn = lambda s: est.estimate_capacity(  # noqa: E731
                rmt.empirical_moments(rmt.sample_mimo_blocks(POWERS, n, L, sigma2, s), 3), n, L, sigma2, 1.0
            ).estimate
            return np.mean(np.abs(np.array(rmt.run_trials(fn, 0, 20, block=L)) - truth))

        assert error(4) < error(1)


def test_cdma_batch_matches_scalar():
    p = moments_of(POWERS, 4)
    Ns = np.arange(1, 65)
    batch = est.cdma_forward_batch(p, 64, Ns, 256, 0.1)
    scalar = np.array([est.cdma_forward(p, 64, int(N), 256, 0.1).array for N in Ns])
    np.testing.assert_allclose(batch, scalar, rtol=1e-13)
