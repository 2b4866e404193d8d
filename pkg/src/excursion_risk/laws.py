"""Closed-form laws of negative excursions over an infinite horizon.

All quantities are built from W, Upsilon and Lambda. Excursion counts are
geometric: from x the first ruin happens with probability 1 - E[X_1] W(x), and
each return to 0 starts a fresh trial with ruin probability 1 - E[X_1] W(0).
Every excursion starts from an Exp(alpha) undershoot, so for x >= 0 all
durations D_k are i.i.d. with law F_D1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, TruncationWarning
from .kernels import KernelCache, d1_cdf
from .model import ClParams, scale_w
from .numerics import clamp_probability

SERIES_TAIL = 1e-10


@dataclass(frozen=True)
class ExcursionLawContext:
    """Parameters, initial surplus and the kernel cache they share."""

    params: ClParams
    x: float = 0.0
    kernels: KernelCache = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise InvalidParameterError("x must be finite")
        object.__setattr__(self, "x", float(self.x))
        if self.kernels is None:
            object.__setattr__(self, "kernels", KernelCache(self.params))
        elif self.kernels.params != self.params:
            raise InvalidParameterError("kernel cache was built for different parameters")

    def at(self, x: float) -> "ExcursionLawContext":
        """Same parameters and cache, different starting surplus."""
        return ExcursionLawContext(self.params, x, self.kernels)

    @property
    def w_x(self) -> float:
        return scale_w(self.params, self.x)

    @property
    def w0(self) -> float:
        return 1.0 / self.params.c

    def upsilon(self, r):
        return self.kernels.upsilon(r)

    def lam(self, r, x: float | None = None):
        return self.kernels.lambda0(self.x if x is None else x, r)


def _positive(value, name):
    arr = np.asarray(value, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidParameterError(f"{name} must be positive and finite")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def ruin_prob(ctx: ExcursionLawContext) -> float:
    """P_x(tau_0^- < inf) = 1 - E[X_1] W(x)."""
    p = ctx.params
    if ctx.x < 0:
        return 1.0
    # k e^{dx} is the same quantity without the cancellation in 1 - E[X_1] W(x)
    return clamp_probability(p.ruin_at_zero * math.exp(p.decay * ctx.x), "ruin probability")


def series_terms(ctx: ExcursionLawContext, tail: float = SERIES_TAIL) -> int:
    """Smallest N with P_x(N_inf > N) = ruin_x * ruin_0^N below ``tail``."""
    psi_x = ruin_prob(ctx)
    k = ctx.params.ruin_at_zero
    if psi_x <= tail:
        return 1
    return max(1, math.ceil(math.log(tail / psi_x) / math.log(k)))


def series_tail(ctx: ExcursionLawContext, n_max: int) -> float:
    return ruin_prob(ctx) * ctx.params.ruin_at_zero ** n_max


def _resolve_terms(ctx, n_max, what):
    if n_max is None:
        return series_terms(ctx)
    if n_max < 1:
        raise InvalidParameterError("n_max must be >= 1")
    tail = series_tail(ctx, n_max)
    if tail > SERIES_TAIL:
        warnings.warn(f"{what}: series tail {tail:.3g} at n_max={n_max} exceeds {SERIES_TAIL:g}",
                      TruncationWarning, stacklevel=3)
    return int(n_max)


def n_infty_pmf(ctx: ExcursionLawContext, n):
    """P_x(N_inf = n): an atom 1 - ruin_x at 0, then geometric with ratio ruin_0."""
    n_arr = np.asarray(n)
    if np.any(n_arr < 0) or np.any(n_arr != np.floor(n_arr)):
        raise InvalidParameterError("n must be a nonnegative integer")
    p = ctx.params
    psi_x = ruin_prob(ctx)
    k = p.ruin_at_zero
    escape = p.drift / p.c
    n_arr = n_arr.astype(float)
    out = np.where(n_arr == 0, 1.0 - psi_x, escape * psi_x * k ** np.maximum(n_arr - 1.0, 0.0))
    return _out(out)


def longest_cdf_inf(ctx: ExcursionLawContext, r):
    """P_x(longest excursion < r) = E[X_1] Lambda(x, r) / Upsilon(r)."""
    r = _positive(r, "r")
    ups = ctx.upsilon(r)
    value = ctx.params.drift * ctx.lam(r) / ups
    return clamp_probability(value, "longest-excursion cdf")


def parisian_ruin_prob(ctx: ExcursionLawContext, r):
    """P_x(some excursion lasts at least r): the complement of ``longest_cdf_inf``."""
    return _out(1.0 - np.asarray(longest_cdf_inf(ctx, r)))


def longest_cdf_at_first_passage(ctx: ExcursionLawContext, b: float, r):
    """P_x(longest excursion before tau_b^+ < r) = Lambda(x, r) / Lambda(b, r)."""
    if not b >= ctx.x:
        raise InvalidParameterError(f"level b={b} must be at least x={ctx.x}")
    r = _positive(r, "r")
    return clamp_probability(ctx.lam(r) / ctx.lam(r, x=b), "longest cdf at first passage")


def shortest_tail_inf(ctx: ExcursionLawContext, r):
    """P_x(shortest excursion > r, ruin)."""
    r = _positive(r, "r")
    p = ctx.params
    mu = p.drift
    ups = ctx.upsilon(r)
    lam = ctx.lam(r)
    value = ctx.w0 * mu * (1.0 - ctx.w_x * (mu - ups) - lam) / (1.0 - ctx.w0 * (ups - mu))
    value = clamp_probability(value, "shortest-excursion tail")
    return _out(np.minimum(value, ruin_prob(ctx)))


def joint_cdf_inf(ctx: ExcursionLawContext, u, v):
    """P_x(shortest <= u, longest <= v, ruin) for u <= v."""
    u = _positive(u, "u")
    v = _positive(v, "v")
    if np.any(u > v):
        raise InvalidParameterError("joint cdf requires u <= v")
    p = ctx.params
    mu = p.drift
    w0, wx = ctx.w0, ctx.w_x
    ups_u, ups_v = ctx.upsilon(u), ctx.upsilon(v)
    lam_u, lam_v = ctx.lam(u), ctx.lam(v)
    d_ups = ups_v - ups_u
    value = (mu * (lam_v / ups_v - wx)
             - mu * w0 * (lam_v - lam_u - wx * d_ups) / (1.0 + w0 * d_ups))
    return clamp_probability(value, "joint cdf")


def _require_iid(ctx, what):
    if ctx.x < 0:
        raise InvalidParameterError(
            f"{what} needs x >= 0: from a negative start the first excursion is not distributed as D1")


def range_inner_terms(ctx: ExcursionLawContext, r: float, n_max: int) -> np.ndarray:
    """n * int f(y) (F(y + r) - F(y))^(n-1) dy for n = 1..n_max: P(range of n durations < r)."""
    y, w, F, f = ctx.kernels.d1_rule()
    n = np.arange(1, n_max + 1)
    gap = np.clip(d1_cdf(ctx.params, y + r) - F, 0.0, 1.0)
    return n * ((gap[None, :] ** (n[:, None] - 1)) @ (w * f))


def range_cdf(ctx: ExcursionLawContext, r, n_max: int | None = None):
    """P_x(longest - shortest < r, ruin) as a series over the excursion count.

    Term n is pmf(n) times the chance that n i.i.d. durations span less than r:
    the shortest sits at y and the other n - 1 fall in [y, y + r).
    """
    _require_iid(ctx, "range_cdf")
    r_arr = _positive(r, "r")
    n_max = _resolve_terms(ctx, n_max, "range_cdf")
    pmf = n_infty_pmf(ctx, np.arange(1, n_max + 1))
    out = [float(np.dot(pmf, np.clip(range_inner_terms(ctx, rv, n_max), 0.0, 1.0)))
           for rv in np.atleast_1d(r_arr)]
    return clamp_probability(np.asarray(out).reshape(r_arr.shape), "range cdf")
