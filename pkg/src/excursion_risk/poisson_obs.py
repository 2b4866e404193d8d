"""First passage above b observed at the epochs of an independent Poisson clock.

T_b^+ is the first clock epoch at which X > b. Before T_b^+ the path alternates
between stretches above 0 and negative excursions; every excursion starts from
an Exp(alpha) undershoot and the clock is memoryless, so the count of
excursions before T_b^+ is geometric once the path has returned to 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, TruncationWarning
from .kernels import lambda_integral
from .laws import SERIES_TAIL, _positive
from .model import ClParams, phi, scale_w, z_theta
from .numerics import clamp_probability, gauss_legendre, integrate


@dataclass(frozen=True)
class PoissonObsContext:
    params: ClParams
    x: float
    b: float
    obs_rate: float

    def __post_init__(self):
        for name in ("x", "b", "obs_rate"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParameterError(f"{name} must be finite")
            object.__setattr__(self, name, float(v))
        if not self.obs_rate > 0:
            raise InvalidParameterError("obs_rate must be positive")
        if not self.x >= 0:
            raise InvalidParameterError("Poisson-observation laws are defined for x >= 0")
        if not self.b >= self.x:
            raise InvalidParameterError(f"b={self.b} must be at least x={self.x}")

    @property
    def phi(self) -> float:
        return phi(self.params, self.obs_rate)

    @property
    def z_b(self) -> float:
        return z_theta(self.params, self.b, self.phi)

    def at(self, x: float) -> "PoissonObsContext":
        return PoissonObsContext(self.params, x, self.b, self.obs_rate)


def poisson_passage_before_ruin(ctx: PoissonObsContext) -> float:
    """P_x(T_b^+ < tau_0^-) = lambda W(x) / (Phi_lambda Z(b, Phi_lambda))."""
    value = ctx.obs_rate * scale_w(ctx.params, ctx.x) / (ctx.phi * ctx.z_b)
    return clamp_probability(value, "Poisson passage probability")


def passage_overshoot_density(ctx: PoissonObsContext, z):
    """Density of X at T_b^+ on {T_b^+ < tau_0^-}, for z > b.

    With W^{(0,lambda)}(y) = (Phi_lambda / lambda) Z(y, Phi_lambda) and
    Z(y, .) = e^{Phi y} for y < 0 the ratio collapses to an exponential in z.
    """
    z = np.asarray(z, dtype=float)
    p = ctx.params
    w_ratio = z_theta(p, ctx.b - z, ctx.phi) / ctx.z_b
    out = np.where(z > ctx.b, ctx.obs_rate * w_ratio * scale_w(p, ctx.x) - scale_w(p, ctx.x - z), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DeficitLaw:
    """Defective law of the undershoot |X_{tau_0^-}| on {tau_0^- < T_b^+}: mass times Exp(rate)."""

    mass: float
    rate: float

    def cdf(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return self.mass * -np.expm1(-self.rate * y)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, self.mass * self.rate * np.exp(-self.rate * y), 0.0)


def ruin_deficit_law_before_poisson_passage(ctx: PoissonObsContext, tol: float = 1e-12):
    """Return P_x(tau_0^- < T_b^+) and the undershoot law on that event.

    Ruin from x, minus ruin that happens only after T_b^+: from the level z
    reached at T_b^+ the classical ruin probability is k e^{dz}. The undershoot
    is Exp(alpha) whichever level ruin starts from.
    """
    p = ctx.params
    k, d = p.ruin_at_zero, p.decay
    later = integrate(lambda z: passage_overshoot_density(ctx, z) * k * math.exp(d * z),
                      ctx.b, np.inf, tol=tol).value
    mass = clamp_probability(k * math.exp(d * ctx.x) - later, "ruin-before-passage probability")
    return mass, DeficitLaw(mass, p.alpha)


def excursion_below_r(p: ClParams, r: float, order: int = 24) -> float:
    """int_0^{cr} Lambda(-y, r) alpha e^{-alpha y} dy: an excursion from an Exp(alpha) undershoot ends before r.

    Lambda(-y, r) vanishes for y > cr and jumps there, so the rule stops at cr.
    """
    cr = p.c * r
    breaks = np.linspace(0.0, cr, 1 + max(4, math.ceil(cr)))
    y, w = gauss_legendre(breaks, order)
    lam = lambda_integral(p, -y, np.full_like(y, r))
    return float(np.sum(w * lam * p.alpha * np.exp(-p.alpha * y)))


def longest_cdf_at_poisson_passage(ctx: PoissonObsContext, r: float, n_max: int | None = None):
    """P_x(longest excursion before T_b^+ < r).

    P_x(T_b^+ < tau_0^-) plus the series over n >= 1 excursions: the first
    ruin from x, n - 1 further ruins from 0, then passage from 0, each
    excursion shorter than r with probability E[Lambda(X_{tau_0^-}, r)] / P(ruin first).
    """
    r = float(_positive(r, "r"))
    p = ctx.params
    pass_x = poisson_passage_before_ruin(ctx)
    ruin_x, law_x = ruin_deficit_law_before_poisson_passage(ctx)
    ctx0 = ctx.at(0.0)
    pass_0 = poisson_passage_before_ruin(ctx0)
    ruin_0, _ = ruin_deficit_law_before_poisson_passage(ctx0)
    # E[Lambda(X_tau, r) 1{tau < T}] / P(tau < T); the undershoot law is the same from x and 0
    short = excursion_below_r(p, r)
    if n_max is None:
        n_max = 1 if ruin_x <= SERIES_TAIL else max(
            1, math.ceil(math.log(SERIES_TAIL / ruin_x) / math.log(ruin_0)))
    elif n_max < 1:
        raise InvalidParameterError("n_max must be >= 1")
    tail = ruin_x * ruin_0 ** n_max
    if tail > SERIES_TAIL:
        warnings.warn(f"Poisson longest-excursion series tail {tail:.3g} exceeds {SERIES_TAIL:g}",
                      TruncationWarning, stacklevel=2)
    n = np.arange(1, n_max + 1)
    terms = ruin_x * short * (ruin_0 * short) ** (n - 1) * pass_0
    return clamp_probability(pass_x + float(np.sum(terms)), "Poisson longest-excursion cdf")


def excursion_count_pmf(ctx: PoissonObsContext, n):
    """P_x(n excursions start before T_b^+)."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise InvalidParameterError("n must be nonnegative")
    ruin_x, _ = ruin_deficit_law_before_poisson_passage(ctx)
    ctx0 = ctx.at(0.0)
    ruin_0, _ = ruin_deficit_law_before_poisson_passage(ctx0)
    pass_0 = poisson_passage_before_ruin(ctx0)
    out = np.where(n == 0, poisson_passage_before_ruin(ctx),
                   ruin_x * ruin_0 ** np.maximum(n - 1, 0) * pass_0)
    return float(out) if out.ndim == 0 else out
