import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from excursion_risk import (ClParams, InvalidParameterError, first_passage_laplace,
                            mean_per_unit, phi, psi, scale_w, transition_law, z_theta)
from excursion_risk.numerics import differentiate, find_root, integrate

P = ClParams(5.5, 2.0, 0.5)
FIGURE_SETS = [P, ClParams(8.5, 1.0, 0.25), ClParams(9.5, 2.0, 1.0 / 3.0)]

params = st.builds(
    lambda eta, alpha, margin: ClParams(eta / alpha + margin, eta, alpha),
    st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(0.05, 10.0))


def test_rejects_net_profit_violation():
    with pytest.raises(InvalidParameterError):
        ClParams(1.0, 2.0, 0.5)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_rejects_nonpositive_fields(bad):
    with pytest.raises(InvalidParameterError):
        ClParams(bad, 2.0, 0.5)


def test_psi_values():
    assert psi(P, 0.0) == 0.0
    assert psi(P, 1.0) == pytest.approx(5.5 - 2.0 / 1.5, rel=1e-15)


def test_psi_slope_at_zero_is_mean():
    # one-sided difference quotients, one Richardson step
    h = 1e-5
    slope = 2.0 * psi(P, h / 2) / (h / 2) - psi(P, h) / h
    assert slope == pytest.approx(mean_per_unit(P), abs=1e-8)
    assert differentiate(lambda lam: psi(P, lam), 1.0) == pytest.approx(
        P.c - P.eta * P.alpha / (P.alpha + 1.0) ** 2, rel=1e-9)


def test_mean_per_unit():
    assert mean_per_unit(P) == pytest.approx(1.5)
    assert mean_per_unit(ClParams(1.0 + 3.0 / 2.0, 3.0, 2.0)) == pytest.approx(1.0)


@given(params, st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_psi_convex(p, a, b):
    mid = psi(p, 0.5 * (a + b))
    assert mid <= 0.5 * (psi(p, a) + psi(p, b)) + 1e-12 * (1.0 + abs(mid))


def test_phi_examples():
    assert phi(P, 0.0) == 0.0
    # larger root of c l^2 + (c alpha - eta - q) l - q alpha = 0
    b = P.c * P.alpha - P.eta - 1.0
    root = (-b + math.sqrt(b * b + 4 * P.c * P.alpha)) / (2 * P.c)
    assert phi(P, 1.0) == pytest.approx(root, rel=1e-14)
    assert phi(P, 1.0) == pytest.approx(0.32509, abs=1e-5)


@pytest.mark.parametrize("q", [0.1, 1.0, 10.0])
def test_phi_round_trip(q):
    assert psi(P, phi(P, q)) == pytest.approx(q, rel=1e-12)


def test_phi_matches_root_finder():
    for q in (0.1, 1.0, 10.0):
        assert find_root(lambda lam: psi(P, lam) - q, 1e-9, 100.0) == pytest.approx(phi(P, q), abs=1e-10)


@given(params, st.floats(0.0, 1e4))
def test_phi_round_trip_random(p, q):
    lam = phi(p, q)
    assert lam >= 0
    assert psi(p, lam) == pytest.approx(q, rel=1e-10, abs=1e-12)


def test_scale_w_basics():
    assert scale_w(P, -1.0) == 0.0
    assert scale_w(P, 0.0) == pytest.approx(1.0 / P.c)
    assert scale_w(P, 400.0) == pytest.approx(1.0 / 1.5, rel=1e-14)


@pytest.mark.parametrize("p", FIGURE_SETS)
def test_scale_w_monotone_and_limit(p):
    x = np.linspace(0.0, 100.0, 5001)
    w = scale_w(p, x)
    assert np.all(w >= 0) and np.all(np.diff(w) >= 0)
    # W(x) E[X_1] = 1 - ruin_x exactly; the gap falls below 1e-6 once k e^{dx} does
    np.testing.assert_allclose(1.0 - w * p.drift, p.ruin_at_zero * np.exp(p.decay * x), atol=1e-14)
    x_far = math.log(1e-6 / p.ruin_at_zero) / p.decay
    assert abs(scale_w(p, x_far + 1.0) * p.drift - 1.0) <= 1e-6


def test_scale_w_laplace_transform():
    # int_0^inf e^{-lam x} W(x) dx = 1 / psi(lam)
    for lam in (0.5, 2.0):
        val = integrate(lambda x: math.exp(-lam * x) * scale_w(P, x), 0.0, np.inf).value
        assert val == pytest.approx(1.0 / psi(P, lam), rel=1e-9)


def test_z_theta_trivial_cases():
    assert z_theta(P, 0.0, 0.7) == pytest.approx(1.0, abs=1e-14)
    assert z_theta(P, -2.0, 0.7) == pytest.approx(math.exp(-1.4))


@pytest.mark.parametrize("x,theta", [(2.0, None), (0.5, 3.0), (7.0, 0.1)])
def test_z_theta_against_defining_integral(x, theta):
    theta = phi(P, 1.0) if theta is None else theta
    inner = integrate(lambda y: math.exp(-theta * y) * scale_w(P, y), 0.0, x, tol=1e-13).value
    direct = math.exp(theta * x) * (1.0 - psi(P, theta) * inner)
    assert z_theta(P, x, theta) == pytest.approx(direct, rel=1e-10)


def test_z_theta_rejects_negative_theta():
    with pytest.raises(InvalidParameterError):
        z_theta(P, 1.0, -0.1)


class TestTransitionLaw:
    law = transition_law(P, 1.0)

    def test_atom(self):
        assert self.law.atom_mass == pytest.approx(math.exp(-2.0))
        assert self.law.atom_location == pytest.approx(5.5)

    def _moments(self, power):
        # substitution s = u^2 removes the s^{-1/2} behaviour at the atom
        cr = self.law.atom_location
        f = lambda u: 2.0 * u * self.law.density(cr - u * u) * (cr - u * u) ** power
        return integrate(f, 0.0, 30.0, tol=1e-13).value

    def test_total_mass(self):
        assert self.law.atom_mass + self._moments(0) == pytest.approx(1.0, abs=1e-8)

    def test_mean(self):
        mean = self.law.atom_mass * self.law.atom_location + self._moments(1)
        assert mean == pytest.approx(1.0 * mean_per_unit(P), abs=1e-8)

    def test_density_nonnegative(self):
        z = np.linspace(-60.0, 5.49, 2000)
        assert np.all(self.law.density(z) >= 0)
        assert self.law.density(6.0) == 0.0

    def test_rejects_nonpositive_horizon(self):
        with pytest.raises(InvalidParameterError):
            transition_law(P, 0.0)


def test_first_passage_laplace():
    assert first_passage_laplace(P, 0.0, 1.0, 0.0) == 1.0
    assert first_passage_laplace(P, 1.0, 1.0, 5.0) == 1.0
    assert first_passage_laplace(P, 0.0, 1.0, 0.5) == pytest.approx(math.exp(-phi(P, 0.5)))
    with pytest.raises(InvalidParameterError):
        first_passage_laplace(P, 2.0, 1.0, 0.5)
