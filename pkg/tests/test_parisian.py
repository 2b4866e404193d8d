import functools

import numpy as np
import pytest

from excursion_risk import (ClParams, ExcursionLawContext, InvalidParameterError, NearMaxSpec,
                            SimConfig, near_max_mean, occupation_longest_joint_cdf,
                            peak_to_sum_ruin_prob, ruin_prob, simulate)
from excursion_risk.kernels import d1_cdf, d1_pdf
from excursion_risk.laws import longest_cdf_inf
from excursion_risk.numerics import gauss_legendre
from excursion_risk.parisian import (GridSpec, LineMass, joint_cell_masses, joint_density,
                                     joint_mass_rule, joint_sum_max_pdf, near_max_pgf,
                                     occupation_cdf, recursion_step, truncated_sum_cdf)

P = ClParams(5.5, 2.0, 0.5)
CTX = ExcursionLawContext(P, 0.0)
TABLE = CTX.kernels.d1_table()


@functools.lru_cache(maxsize=None)
def paths():
    return simulate(SimConfig(P, x=0.0, seed=31, n_paths=300_000, near_max_windows=(0.5, 2.0)))


class TestJointDensity:
    def test_f2_is_symmetrised_product(self):
        rng = np.random.default_rng(0)
        r = rng.uniform(0.05, 8.0, 200)
        l = r * (1.0 + rng.uniform(0.0, 1.0, 200))
        expected = 2.0 * d1_pdf(P, r) * d1_pdf(P, l - r)
        np.testing.assert_allclose(joint_density(TABLE, 2, l, r), expected, atol=1e-9)
        np.testing.assert_allclose(recursion_step(LineMass(TABLE), 2, l, r), expected, atol=1e-9)

    def test_zero_off_support(self):
        assert joint_density(TABLE, 3, 1.0, 1.5) == 0.0
        assert joint_density(TABLE, 3, 4.0, 1.0) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_normalised(self, n):
        ln, rn, w = joint_mass_rule(TABLE, n)
        assert float(np.sum(w * joint_density(TABLE, n, ln, rn))) == pytest.approx(1.0, abs=1e-6)

    def test_grid_object(self):
        g = joint_sum_max_pdf(CTX, 2, GridSpec(n_r=41, n_l=41))
        assert g.total_mass == pytest.approx(1.0, abs=1e-6)
        assert np.all(g.values[~g.mask] == 0.0)

    def test_rejects_line_mass_order(self):
        with pytest.raises(InvalidParameterError):
            joint_density(TABLE, 1, 1.0, 1.0)

    @pytest.mark.parametrize("n,l,r", [(2, 2.0, 1.5), (3, 3.0, 1.0), (4, 5.0, 2.5)])
    def test_cdf_by_density_and_by_convolution(self, n, l, r):
        by_density = joint_cell_masses(CTX, n, [0.0, l], [0.0, r])[0, 0]
        by_convolution = truncated_sum_cdf(TABLE, [r], [[l]], n, per_cap=256)[n, 0, 0]
        assert by_density == pytest.approx(by_convolution, abs=1e-6)


class TestTruncatedSums:
    def test_untruncated_pair_against_convolution_integral(self):
        # P(D1 + D2 <= 4) = int_0^4 f(y) F(4 - y) dy
        y, w = gauss_legendre(np.array([0.0, 0.01, 0.05, 0.2, 0.5, 1.0, 2.0, 3.0, 3.5, 3.8, 3.95,
                                        3.99, 4.0]), 24)
        exact = float(np.sum(w * d1_pdf(P, y) * d1_cdf(P, 4.0 - y)))
        got = truncated_sum_cdf(TABLE, [np.inf], [[4.0]], 2)[2, 0, 0]
        assert got == pytest.approx(exact, abs=1e-6)

    def test_level_beyond_k_caps_is_exact(self):
        H = truncated_sum_cdf(TABLE, [1.0], [[3.5]], 3)
        assert H[3, 0, 0] == pytest.approx(TABLE.cdf(1.0) ** 3, rel=1e-14)

    def test_budget_exceeded_raises(self):
        with pytest.raises(InvalidParameterError):
            truncated_sum_cdf(TABLE, [np.inf], [[500.0]], 3, spacing=0.001)

    def test_per_cap_floor(self):
        with pytest.raises(InvalidParameterError):
            truncated_sum_cdf(TABLE, [1.0], [[2.0]], 2, per_cap=8)


class TestOccupation:
    def test_r_beyond_l_is_degenerate(self):
        a = occupation_longest_joint_cdf(CTX, 2.0, 5.0)
        assert a == pytest.approx(occupation_longest_joint_cdf(CTX, 2.0, 2.0), abs=1e-14)
        assert a == occupation_cdf(CTX, 2.0)

    def test_at_least_survival(self):
        assert occupation_cdf(CTX, 1e-3) >= 1.0 - ruin_prob(CTX)

    def test_bounded_by_longest(self):
        assert occupation_longest_joint_cdf(CTX, 50.0, 1.0) <= longest_cdf_inf(CTX, 1.0) + 1e-8

    def test_occupation_alone_against_simulation(self):
        assert paths().estimate("occupation_cdf", 2.0).agrees(occupation_cdf(CTX, 2.0), n_se=4.0)

    def test_nondecreasing_in_both_arguments(self):
        grid = [[occupation_longest_joint_cdf(CTX, l, r) for r in (0.5, 1.0, 2.0)]
                for l in (0.5, 1.0, 3.0)]
        g = np.array(grid)
        assert np.all(np.diff(g, axis=0) >= -1e-10) and np.all(np.diff(g, axis=1) >= -1e-10)

    @pytest.mark.parametrize("l,r", [(1.0, 0.5), (3.0, 1.0)])
    def test_against_simulation(self, l, r):
        est = paths().estimate("occupation_joint", l, r)
        assert est.agrees(occupation_longest_joint_cdf(CTX, l, r), n_se=4.0)

    def test_rejects_negative_start(self):
        with pytest.raises(InvalidParameterError):
            occupation_cdf(CTX.at(-1.0), 1.0)


class TestPeakToSum:
    def test_ratio_one_is_zero(self):
        assert peak_to_sum_ruin_prob(CTX, 1.0, 0.5) == 0.0

    def test_small_ratio_is_parisian(self):
        assert peak_to_sum_ruin_prob(CTX, 1e-3, 1.0) == pytest.approx(
            1.0 - longest_cdf_inf(CTX, 1.0), abs=1e-4)

    def test_nonincreasing_in_ratio(self):
        vals = [peak_to_sum_ruin_prob(CTX, a, 0.5) for a in (0.1, 0.3, 0.5, 0.55, 0.8, 1.0)]
        assert all(b <= a + 1e-8 for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("ratio", [0.4, 0.7])
    def test_against_simulation(self, ratio):
        est = paths().estimate("peak_to_sum", ratio, 0.5)
        assert est.agrees(peak_to_sum_ruin_prob(CTX, ratio, 0.5), n_se=4.0)

    @pytest.mark.parametrize("ratio", [0.0, 1.5])
    def test_rejects_ratio(self, ratio):
        with pytest.raises(InvalidParameterError):
            peak_to_sum_ruin_prob(CTX, ratio, 1.0)


class TestNearMax:
    def test_tiny_window_counts_only_the_longest(self):
        assert near_max_mean(CTX, NearMaxSpec(1e-6)) == pytest.approx(ruin_prob(CTX), rel=1e-4)

    def test_huge_window_counts_all(self):
        k = P.ruin_at_zero
        assert near_max_mean(CTX, NearMaxSpec(1e4)) == pytest.approx(k / (1.0 - k), rel=1e-8)

    def test_mean_nondecreasing_in_window(self):
        vals = [near_max_mean(CTX, NearMaxSpec(a)) for a in (0.1, 0.25, 0.5, 1.0, 2.0, 5.0)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_pgf_near_one(self):
        g = near_max_pgf(CTX, NearMaxSpec(0.5), 1.0 - 1e-8)
        assert 1.0 - 1e-6 <= g <= 1.0 + 1e-12

    @pytest.mark.parametrize("a", [0.5, 2.0])
    def test_against_simulation(self, a):
        assert paths().estimate("near_max_mean", a).agrees(near_max_mean(CTX, NearMaxSpec(a)),
                                                          n_se=4.0)

    def test_pgf_without_atom_vanishes_at_zero(self):
        assert near_max_pgf(CTX, NearMaxSpec(1.0), 0.0, include_atom=False) == 0.0
        assert near_max_pgf(CTX, NearMaxSpec(1.0), 0.0) == pytest.approx(1.0 - ruin_prob(CTX))

    def test_pgf_monotone_convex(self):
        s = np.linspace(0.0, 0.99, 34)
        g = near_max_pgf(CTX, NearMaxSpec(1.0), s)
        assert np.all(np.diff(g) >= -1e-14) and np.all(np.diff(g, 2) >= -1e-12)

    def test_pgf_slope_near_one_is_mean(self):
        spec = NearMaxSpec(1.0)
        h = 1e-4
        g = near_max_pgf(CTX, spec, np.array([1.0 - 2 * h, 1.0 - h]))
        # one-sided difference at 1, extrapolated from two steps back
        slope = 2.0 * (1.0 - g[1]) / h - (1.0 - g[0]) / (2 * h)
        assert slope == pytest.approx(near_max_mean(CTX, spec), rel=1e-5)

    def test_rejects_window(self):
        with pytest.raises(InvalidParameterError):
            NearMaxSpec(0.0)
