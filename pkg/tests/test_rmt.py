import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from coocspec import synthetic
from coocspec.errors import FitError, InvalidParameterError
from coocspec.rmt import (
    MPModel,
    SpectrumSample,
    bulk_edges,
    covariance_spectrum,
    fit_sigma2,
    mass_outside_bulk,
    mp_cdf,
    mp_density,
    mp_quantile,
    noise_rank,
    spectrum_histogram,
    write_histogram_csv,
)
from coocspec.sparse import InteractionMatrix
from coocspec.spectra import SolverOptions

from conftest import random_sparse

qs = st.floats(0.01, 1.0)
scales = st.floats(0.05, 20.0)


def quad_cdf(m, x):
    """Integral of the density from the lower edge to x with lam = lo + u^2 (smooth integrand)."""
    lo = m.lambda_minus
    top = np.sqrt(x - lo)
    # the 1/lam factor turns on around u ~ sqrt(lo); break there so quad resolves it
    pts = [np.sqrt(lo) * f for f in (1, 10, 100, 1000) if 0 < np.sqrt(lo) * f < top]
    val, _ = integrate.quad(lambda u: mp_density(lo + u * u, m) * 2 * u, 0.0, top,
                            epsabs=1e-12, limit=400, points=pts or None)
    return val


def sample_mp(q, sigma2, size, seed):
    """Inverse-CDF draws from the MP law, CDF tabulated by trapezoid integration."""
    lo, hi = bulk_edges(q, sigma2)
    grid = np.linspace(lo, hi, 400_001)
    dens = mp_density(grid, MPModel(q, sigma2))
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    cdf /= cdf[-1]
    u = np.random.default_rng(seed).random(size)
    return np.interp(u, cdf, grid)


class TestDensity:
    def test_outside_support(self):
        assert mp_density(5.0, MPModel(1.0)) == 0.0

    def test_hand_value(self):
        assert mp_density(1.0, MPModel(1.0)) == pytest.approx(np.sqrt(3) / (2 * np.pi), rel=1e-12)
        assert np.sqrt(3) / (2 * np.pi) == pytest.approx(0.275664, abs=1e-6)

    @pytest.mark.parametrize("q", [0.1, 0.5, 1.0])
    def test_normalized(self, q):
        assert quad_cdf(MPModel(q), MPModel(q).lambda_plus) == pytest.approx(1.0, abs=1e-6)

    def test_nan(self):
        with pytest.raises(InvalidParameterError):
            mp_density(np.nan, MPModel(0.5))

    @settings(max_examples=200, deadline=None)
    @given(qs, scales)
    def test_support_and_edges(self, q, s2):
        m = MPModel(q, s2)
        lo, hi = m.lambda_minus, m.lambda_plus
        inside = np.linspace(lo, hi, 101)[1:-1]
        assert np.all(mp_density(inside, m) > 0)
        assert mp_density(hi * 1.001 + 1e-9, m) == 0.0
        if lo > 0:
            assert mp_density(lo * 0.999, m) == 0.0
        # square-root vanishing at both edges: shrinking the gap by 1e8 shrinks rho by ~1e4
        w = hi - lo
        assert mp_density(hi - w * 1e-12, m) < 1e-3 * mp_density(hi - w * 1e-4, m)
        if lo > 1e-6 * hi:
            # the lower edge only looks like a square root on scales below lo itself
            w = min(lo, w)
            assert mp_density(lo + w * 1e-12, m) < 1e-3 * mp_density(lo + w * 1e-4, m)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.05, 1.0), scales)
    def test_normalized_any_model(self, q, s2):
        m = MPModel(q, s2)
        assert quad_cdf(m, m.lambda_plus) == pytest.approx(1.0, abs=1e-6)


class TestEdges:
    @pytest.mark.parametrize("q,s2,expected", [(1.0, 1.0, (0.0, 4.0)), (0.25, 1.0, (0.25, 2.25)),
                                                (0.25, 2.0, (0.5, 4.5))])
    def test_examples(self, q, s2, expected):
        assert bulk_edges(q, s2) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("q", [0.0, 1.5, -1.0])
    def test_invalid_q(self, q):
        with pytest.raises(InvalidParameterError):
            bulk_edges(q, 1.0)


class TestCdfQuantile:
    @pytest.mark.parametrize("q", [0.1, 0.5, 1.0])
    def test_cdf_against_quadrature(self, q):
        m = MPModel(q, 1.7)
        for t in (0.2, 0.5, 0.8):
            xi = m.lambda_minus + t * (m.lambda_plus - m.lambda_minus)
            assert mp_cdf(xi, m) == pytest.approx(quad_cdf(m, xi), abs=1e-8)

    def test_quantile_inverts_cdf(self):
        m = MPModel(0.3, 2.5)
        for p in (0.1, 0.5, 0.9):
            assert mp_cdf(mp_quantile(p, m), m) == pytest.approx(p, abs=1e-10)


class TestSpectrum:
    def test_identity(self):
        s = covariance_spectrum(InteractionMatrix.from_dense(np.eye(2)))
        np.testing.assert_allclose(s.eigenvalues, [0.5, 0.5])

    def test_diag(self):
        s = covariance_spectrum(InteractionMatrix.from_dense(np.diag([3.0, 2.0, 1.0])))
        np.testing.assert_allclose(s.eigenvalues, [3.0, 4 / 3, 1 / 3], rtol=1e-14)

    def test_top_k_agrees_with_full(self):
        X = random_sparse(300, 200, 0.1, 0)
        full = covariance_spectrum(X)
        top = covariance_spectrum(X, "top_k", k=10, opts=SolverOptions())
        assert not top.complete
        np.testing.assert_allclose(top.eigenvalues, full.eigenvalues[:10], rtol=1e-8)

    def test_wide_matrix_transposed(self):
        X = random_sparse(40, 100, 0.2, 1)
        s = covariance_spectrum(X)
        assert s.transposed and s.n_samples == 100 and s.n_variables == 40
        ref = np.linalg.eigvalsh(X.to_dense() @ X.to_dense().T / 100)[::-1]
        np.testing.assert_allclose(s.eigenvalues, np.clip(ref, 0, None), atol=1e-12)
        assert s.implicit_zeros == 60

    def test_cap(self):
        with pytest.raises(InvalidParameterError):
            covariance_spectrum(random_sparse(30, 20, 0.2, 2), cap=10)

    def test_negative_rejected_and_clamped(self):
        with pytest.raises(InvalidParameterError):
            SpectrumSample(np.array([1.0, -0.5]), 10, 2)
        s = SpectrumSample(np.array([-1e-14, 2.0]), 10, 2)
        assert s.eigenvalues.tolist() == [2.0, 0.0]


class TestFit:
    def test_recovers_unit_scale(self):
        ev = sample_mp(0.5, 1.0, 10_000, seed=0)
        m = fit_sigma2(SpectrumSample(ev, 20_000, 10_000))
        assert 0.95 <= m.sigma2 <= 1.05

    def test_scaling(self):
        ev = sample_mp(0.5, 1.0, 10_000, seed=1)
        a = fit_sigma2(SpectrumSample(ev, 20_000, 10_000))
        b = fit_sigma2(SpectrumSample(3 * ev, 20_000, 10_000))
        assert b.sigma2 / a.sigma2 == pytest.approx(3.0, rel=0.02)

    def test_constant_spectrum(self):
        with pytest.raises(FitError):
            fit_sigma2(SpectrumSample(np.ones(50), 100, 50))

    def test_incomplete(self):
        with pytest.raises(FitError):
            fit_sigma2(SpectrumSample(np.arange(1.0, 5.0), 10, 8, complete=False))

    def test_robust_to_spikes(self):
        ev = sample_mp(0.5, 1.0, 5_000, seed=2)
        ev[:5] = [50, 40, 30, 20, 10]
        m = fit_sigma2(SpectrumSample(ev, 10_000, 5_000))
        assert 0.95 <= m.sigma2 <= 1.05


class TestNoiseRank:
    def test_all_inside(self):
        assert noise_rank(SpectrumSample(np.array([1.0, 2.0, 3.9]), 4, 1), MPModel(1.0)) == 0

    def test_one_spike(self):
        assert noise_rank(SpectrumSample(np.array([10.0, 3.9, 1.0]), 4, 1), MPModel(1.0)) == 1

    def test_buffer(self):
        s = SpectrumSample(np.array([4.02, 1.0]), 4, 1)
        assert noise_rank(s, MPModel(1.0)) == 1
        assert noise_rank(s, MPModel(1.0), edge_buffer=0.01) == 0
        with pytest.raises(InvalidParameterError):
            noise_rank(s, MPModel(1.0), edge_buffer=-1)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=30), st.floats(0.0, 10.0))
    def test_monotone(self, ev, extra):
        m = MPModel(1.0)
        s = SpectrumSample(np.array(ev), 10, 5)
        s2 = SpectrumSample(np.array(ev + [m.lambda_plus + 1e-6 + extra]), 10, 5)
        assert noise_rank(s2, m) == noise_rank(s, m) + 1

    def test_pure_noise_monte_carlo(self):
        # with no buffer the largest eigenvalue crosses the edge in roughly a fifth of
        # draws at this size; a 1% buffer absorbs the finite-size fluctuation
        zero = 0
        for seed in range(20):
            s = covariance_spectrum(synthetic.gaussian(2000, 1000, seed))
            zero += noise_rank(s, fit_sigma2(s), edge_buffer=0.01) == 0
        assert zero / 20 >= 0.95


class TestHistogram:
    def test_hand_count(self):
        s = SpectrumSample(np.array([0.1, 0.2, 0.3, 1.9]), 4, 4)
        h = spectrum_histogram(s, 2, MPModel(1.0))
        # range [0, 4], width 2: all four values land in bin 0
        assert h.width == 2.0
        np.testing.assert_allclose(h.empirical, [4 / (4 * 2), 0.0])

    def test_integrates_to_one(self):
        s = covariance_spectrum(synthetic.gaussian(400, 200, 3))
        h = spectrum_histogram(s, 30, fit_sigma2(s))
        assert (h.empirical * h.width).sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(h.mp, mp_density(h.centers, fit_sigma2(s)))

    def test_spikes_overflow(self):
        ev = np.concatenate([sample_mp(1.0, 1.0, 500, 4), [100.0]])
        h = spectrum_histogram(SpectrumSample(ev, 500, 500), 20, MPModel(1.0))
        assert h.overflow.tolist() == [100.0]
        assert h.edges[-1] <= 8.0

    def test_errors(self):
        s = SpectrumSample(np.array([1.0, 2.0]), 4, 2)
        with pytest.raises(InvalidParameterError):
            spectrum_histogram(s, 1, MPModel(0.5))
        with pytest.raises(InvalidParameterError):
            spectrum_histogram(SpectrumSample(np.zeros(0), 4, 2), 5, MPModel(0.5))

    def test_csv(self, tmp_path):
        s = covariance_spectrum(synthetic.gaussian(100, 50, 5))
        h = spectrum_histogram(s, 10, fit_sigma2(s))
        write_histogram_csv(tmp_path / "h.csv", h)
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0] == "lambda,empirical,mp" and len(lines) == 11

    def test_gaussian_l1_and_mass(self):
        s = covariance_spectrum(synthetic.gaussian(2000, 1000, 0))
        m = fit_sigma2(s)
        assert mass_outside_bulk(s, m) <= 0.01
        assert spectrum_histogram(s, 50, m).l1_distance() <= 0.05
