import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from excursion_risk import ClParams, InvalidParameterError, SimConfig, simulate
from excursion_risk.kernels import (D1Table, KernelCache, d1_cdf, d1_horizon, d1_pdf, d1_tail,
                                    deficit_scale_expectation, lambda0, lambda_closed_form,
                                    lambda_integral, upsilon, upsilon_deficit, upsilon_excess)
from excursion_risk.model import scale_w
from excursion_risk.montecarlo import sample_excursions
from excursion_risk.numerics import gauss_legendre

P = ClParams(5.5, 2.0, 0.5)


def sample_x(p, r, n, seed):
    # X_r = c r - S_r; given N claims S_r is Gamma(N, 1/alpha)
    rng = np.random.default_rng(seed)
    n_claims = rng.poisson(p.eta * r, n)
    s = np.where(n_claims > 0, rng.gamma(np.maximum(n_claims, 1), 1.0 / p.alpha), 0.0)
    return p.c * r - s


class TestUpsilon:
    def test_small_r_limit(self):
        assert upsilon(P, 1e-8) == pytest.approx(P.c, rel=1e-6)

    def test_large_r_limit(self):
        assert upsilon(P, 500.0) == pytest.approx(P.drift, abs=1e-4)

    def test_split_forms_agree(self):
        r = np.geomspace(1e-3, 100.0, 60)
        u = upsilon(P, r)
        np.testing.assert_allclose(u - P.drift, upsilon_excess(P, r), atol=1e-11)
        np.testing.assert_allclose(P.c - u, upsilon_deficit(P, r), atol=1e-11)

    @pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
    def test_against_simulated_x(self, r):
        x = sample_x(P, r, 2_000_000, seed=int(10 * r))
        pos = np.maximum(x, 0.0) / r
        se = pos.std(ddof=1) / math.sqrt(pos.size)
        assert abs(upsilon(P, r) - pos.mean()) <= 4 * se

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidParameterError):
            upsilon(P, 0.0)

    def test_cache_interpolant_close(self):
        cache = KernelCache(P)
        r = np.geomspace(2e-4, 900.0, 97)
        np.testing.assert_allclose(cache.upsilon_interp(r), upsilon(P, r), rtol=1e-5)
        assert cache.upsilon(1.3) == upsilon(P, 1.3)

    def test_slope_against_spline(self):
        # the density is -Upsilon' scaled, so the two routes share nothing but Upsilon
        r = np.linspace(0.9, 1.1, 5)
        slope = CubicSpline(r, upsilon(P, r))(1.0, 1)
        assert -d1_pdf(P, 1.0) * P.eta / P.alpha == pytest.approx(slope, abs=1e-5)

    def test_nonincreasing_within_bounds(self):
        u = upsilon(P, np.geomspace(1e-3, 300.0, 200))
        assert np.all(np.diff(u) <= 1e-12)
        assert np.all((u >= P.drift - 1e-12) & (u <= P.c + 1e-12))


class TestLambda:
    @pytest.mark.parametrize("r", [0.1, 1.0, 10.0])
    def test_zero_start(self, r):
        assert lambda0(P, 0.0, r) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("x,r", [(1.0, 1.0), (3.0, 0.4), (0.2, 7.0)])
    def test_closed_form_matches_integral_for_positive_x(self, x, r):
        assert lambda0(P, x, r) == pytest.approx(lambda_integral(P, x, r), rel=1e-9)

    def test_closed_form_is_wrong_below_zero(self):
        assert abs(lambda_closed_form(P, -1.0, 1.0) - lambda0(P, -1.0, 1.0)) > 1e-3

    def test_negative_start_beyond_reach(self):
        # no upcrossing before r once -x > c r
        assert lambda0(P, -6.0, 1.0) == 0.0

    def test_monotone_below_zero(self):
        x = np.linspace(-5.0, 0.0, 21)
        r = np.array([0.25, 0.5, 1.0, 2.0])
        lam = lambda0(P, x[:, None], r[None, :])
        assert np.all(np.diff(lam, axis=0) >= -1e-12) and np.all(np.diff(lam, axis=1) >= -1e-12)

    def test_negative_start_against_simulation(self):
        stats = simulate(SimConfig(P, x=-1.0, seed=5, n_paths=400_000))
        est = stats.estimate("first_passage_below", 1.0)
        assert est.agrees(lambda0(P, -1.0, 1.0), n_se=4.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-20.0, 0.0), st.floats(0.05, 20.0))
    def test_probability_below_zero(self, x, r):
        v = lambda0(P, x, r)
        assert -1e-12 <= v <= 1.0 + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 20.0), st.floats(0.0, 5.0), st.floats(0.05, 20.0))
    def test_at_least_one_and_increasing_above_zero(self, x, step, r):
        lo, hi = lambda0(P, x, r), lambda0(P, x + step, r)
        assert lo >= 1.0 - 1e-12 and hi >= lo - 1e-12


class TestD1:
    def test_limits(self):
        assert d1_cdf(P, 1e-9) <= 1e-8
        assert d1_tail(P, d1_horizon(P)) <= 1.1e-12

    def test_cdf_plus_tail(self):
        y = np.geomspace(1e-3, 200.0, 300)
        np.testing.assert_allclose(d1_cdf(P, y) + d1_tail(P, y), 1.0, atol=1e-12)

    def test_pdf_nonnegative(self):
        assert np.all(d1_pdf(P, np.geomspace(1e-3, 1e3, 400)) >= -1e-8)

    def test_slope_at_zero(self):
        # near 0 the excursion ends before any claim if the deficit is below c y
        y = 1e-6
        assert d1_cdf(P, y) / y == pytest.approx(P.alpha * P.c, rel=1e-4)

    def test_ecdf_against_simulated_excursions(self):
        d = sample_excursions(P, 1_000_000, seed=3)
        for y in (0.1, 0.5, 1.0, 3.0, 10.0):
            emp = np.mean(d < y)
            se = math.sqrt(emp * (1 - emp) / d.size)
            assert abs(emp - d1_cdf(P, y)) <= 4 * se

    def test_pdf_against_histogram(self):
        d = sample_excursions(P, 1_000_000, seed=4)
        edges = np.array([0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2])
        hits, _ = np.histogram(d, edges)
        dens = hits / d.size / np.diff(edges)
        y, w = gauss_legendre(edges, 16)
        cell = np.add.reduceat(w * d1_pdf(P, y), np.arange(0, y.size, 16)) / np.diff(edges)
        np.testing.assert_allclose(dens, cell, rtol=0.05)
        np.testing.assert_allclose(cell, np.diff(d1_cdf(P, edges)) / np.diff(edges), rtol=1e-6)

    def test_pdf_matches_cdf_increments(self):
        y = np.linspace(0.5, 20.0, 40)
        h = 1e-3
        fd = (d1_cdf(P, y + h) - d1_cdf(P, y - h)) / (2 * h)
        np.testing.assert_allclose(d1_pdf(P, y), fd, rtol=1e-5, atol=1e-12)

    def test_table_matches_direct(self):
        table = D1Table.build(P)
        y = np.concatenate([np.geomspace(1e-4, 1.0, 50), np.linspace(1.0, table.y_max, 200)])
        np.testing.assert_allclose(table.cdf(y), d1_cdf(P, y), atol=1e-10)
        np.testing.assert_allclose(table.pdf(y), d1_pdf(P, y), atol=1e-7, rtol=1e-6)
        assert table.cdf(-1.0) == 0.0 and table.cdf(table.y_max + 1.0) == 1.0

    def test_table_sampler(self):
        table = D1Table.build(P)
        d = table.sample(np.random.default_rng(0), 400_000)
        for y in (0.2, 1.0, 5.0):
            emp = np.mean(d < y)
            assert abs(emp - d1_cdf(P, y)) <= 4 * math.sqrt(emp * (1 - emp) / d.size)


class TestDeficitScaleExpectation:
    @pytest.mark.parametrize("x,z", [(0.0, 0.5), (1.0, 2.0), (4.0, 7.5), (0.3, 30.0)])
    def test_identity(self, x, z):
        expected = scale_w(P, x + z) - scale_w(P, x)
        assert deficit_scale_expectation(P, x, z) == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_against_simulation(self):
        stats = simulate(SimConfig(P, x=1.0, seed=9, n_paths=200_000))
        est = stats.estimate("id1", 2.0)
        assert est.agrees(deficit_scale_expectation(P, 1.0, 2.0), n_se=4.0)

    def test_nonpositive_z(self):
        assert deficit_scale_expectation(P, 1.0, 0.0) == 0.0

    def test_rejects_negative_x(self):
        with pytest.raises(InvalidParameterError):
            deficit_scale_expectation(P, -1.0, 1.0)
