"""The Upsilon and Lambda kernels and the law of a single excursion duration D1.

All kernel integrals are integrals against the law of the aggregate claims
S_r = c r - X_r. With the substitution s = u^2 (u = sqrt(c r - z)) the Bessel
density becomes ``2 sqrt(a) exp(-alpha (u - u*)^2) i1e(2 sqrt(a) u)`` with
a = r eta alpha and u* = sqrt(r eta / alpha): smooth, bounded and negligible
outside a window of half-width ``sqrt(40 / alpha) + 1`` around u*. A composite
Gauss-Legendre rule on that window is evaluated for many horizons at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InvalidParameterError
from .model import ClParams, scale_w
from .numerics import bessel_i1e, clamp_probability, differentiate, find_root, gauss_legendre

_PANELS = 24
_ORDER = 16
_CHUNK = 2048


def _check_positive(r, name="r"):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)) or np.any(~np.isfinite(r)):
        raise InvalidParameterError(f"{name} must be positive and finite")
    return r


def _claims_rule(p: ClParams, r, s_lo, s_hi):
    """Nodes ``u`` and weights ``w`` with sum(w * g(u**2)) ~ int_{s_lo}^{s_hi} g(s) q_r(s) ds.

    ``q_r`` is the absolutely continuous part of the law of S_r. Inputs are 1-D
    arrays of equal length; outputs have shape (len(r), _PANELS * _ORDER).
    """
    a = r * p.eta * p.alpha
    ustar = np.sqrt(r * p.eta / p.alpha)
    half = math.sqrt(40.0 / p.alpha) + 1.0
    u_lo = np.maximum(np.sqrt(s_lo), ustar - half)
    u_hi = np.minimum(np.sqrt(s_hi), ustar + half)
    empty = ~(u_hi > u_lo)
    u_hi = np.where(empty, u_lo, u_hi)
    breaks = u_lo[:, None] + (u_hi - u_lo)[:, None] * np.linspace(0.0, 1.0, _PANELS + 1)
    u, w = gauss_legendre(breaks, _ORDER)
    sa = np.sqrt(a)[:, None]
    dens = 2.0 * sa * np.exp(-p.alpha * (u - ustar[:, None]) ** 2) * bessel_i1e(2.0 * sa * u)
    return u, w * dens


def _chunked(fn, *arrays):
    """Apply a row-wise vectorised ``fn`` over broadcast 1-D chunks."""
    arrays = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in arrays])
    shape = arrays[0].shape
    flat = [a.ravel() for a in arrays]
    out = np.empty(flat[0].size)
    for start in range(0, out.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        out[sl] = fn(*[f[sl] for f in flat])
    return float(out[0]) if shape == () else out.reshape(shape)


def upsilon(p: ClParams, r):
    """Upsilon(r) = E[max(X_r, 0)] / r for X started at 0.

    exp(-eta r) (c + int_0^{c r} z exp(-alpha (c r - z)) sqrt(eta alpha / ((c r - z) r))
    I1(2 sqrt(r eta alpha (c r - z))) dz).
    """
    r = _check_positive(r)

    def rows(rr):
        cr = p.c * rr
        u, w = _claims_rule(p, rr, np.zeros_like(rr), cr)
        return p.c * np.exp(-p.eta * rr) + np.sum(w * (cr[:, None] - u * u), axis=1) / rr

    return _chunked(rows, r)


def upsilon_excess(p: ClParams, r):
    """Upsilon(r) - E[X_1] = E[max(-X_r, 0)] / r, computed without cancellation."""
    r = _check_positive(r)

    def rows(rr):
        cr = p.c * rr
        u, w = _claims_rule(p, rr, cr, np.full_like(rr, np.inf))
        return np.sum(w * (u * u - cr[:, None]), axis=1) / rr

    return _chunked(rows, r)


def upsilon_deficit(p: ClParams, r):
    """c - Upsilon(r) = E[min(S_r, c r)] / r, a sum of nonnegative terms."""
    r = _check_positive(r)

    def rows(rr):
        cr = p.c * rr
        u, w = _claims_rule(p, rr, np.zeros_like(rr), cr)
        below = np.sum(w * u * u, axis=1)
        u2, w2 = _claims_rule(p, rr, cr, np.full_like(rr, np.inf))
        above = cr * np.sum(w2, axis=1)
        return (below + above) / rr

    return _chunked(rows, r)


def lambda_integral(p: ClParams, x, r):
    """Lambda(x, r) = int_0^inf W(x + u) (u / r) P(X_r in du) by quadrature.

    W vanishes on the negative half-line, so for x < 0 only u > -x contributes.
    """
    r = _check_positive(r)

    def rows(xx, rr):
        cr = p.c * rr
        s_hi = np.maximum(cr + np.minimum(xx, 0.0), 0.0)
        u, w = _claims_rule(p, rr, np.zeros_like(rr), s_hi)
        z = cr[:, None] - u * u
        body = np.sum(w * scale_w(p, xx[:, None] + z) * z, axis=1) / rr
        atom = scale_w(p, xx + cr) * p.c * np.exp(-p.eta * rr)
        return atom + body

    return _chunked(rows, x, r)


def lambda0(p: ClParams, x, r, ups=None):
    """Lambda(x, r); equals P_x(tau_0^+ < r) for x <= 0.

    For x >= 0 the closed form Upsilon(r)/E[X_1] (1 - e^{dx}) + e^{dx} with
    d = eta/c - alpha is used. That form continues W analytically below zero,
    so for x < 0 the defining integral is evaluated instead.
    """
    x = np.asarray(x, dtype=float)
    r = _check_positive(r)
    x, r = np.broadcast_arrays(x, r)
    out = np.empty(x.shape, dtype=float)
    pos = x >= 0
    if np.any(pos):
        u = upsilon(p, r[pos]) if ups is None else np.broadcast_to(ups, x.shape)[pos]
        e = np.exp(p.decay * x[pos])
        out[pos] = u / p.drift * (1.0 - e) + e
    if np.any(~pos):
        out[~pos] = lambda_integral(p, x[~pos], r[~pos])
    return float(out) if out.ndim == 0 else out


def lambda_closed_form(p: ClParams, x, r):
    """The closed-form expression for every x; exact only for x >= 0."""
    e = np.exp(p.decay * np.asarray(x, dtype=float))
    out = upsilon(p, r) / p.drift * (1.0 - e) + e
    return float(out) if np.ndim(out) == 0 else out


# --- single-excursion duration law -------------------------------------------------

def d1_cdf(p: ClParams, y):
    """F_D1(y) = (1 - W(0) Upsilon(y)) / (1 - E[X_1] W(0)) = (c - Upsilon(y)) / (eta / alpha)."""
    y = _check_positive(y, "y")
    return clamp_probability(upsilon_deficit(p, y) * p.alpha / p.eta, "F_D1")


def d1_tail(p: ClParams, y):
    """1 - F_D1(y) = W(0) (Upsilon(y) - E[X_1]) / (1 - E[X_1] W(0))."""
    y = _check_positive(y, "y")
    return clamp_probability(upsilon_excess(p, y) * p.alpha / p.eta, "1 - F_D1")


_CBRT_EPS = np.finfo(float).eps ** (1.0 / 3.0)


def d1_pdf(p: ClParams, y):
    """Density of D1 as the numerical derivative of F_D1."""
    y = _check_positive(y, "y")
    # keep every stencil point inside (0, inf)
    scale = np.minimum(1.0, y / (4.0 * np.maximum(1.0, y) * _CBRT_EPS))
    return differentiate(lambda t: upsilon_deficit(p, t) * p.alpha / p.eta, y, scale)


def deficit_scale_expectation(p: ClParams, x: float, z: float, order: int = 24) -> float:
    """E_x[W(X_{tau_0^-} + z); tau_0^- < inf] for x >= 0.

    The undershoot is Exp(alpha) whatever the pre-ruin path, so this is
    P_x(ruin) int_0^z W(z - y) alpha exp(-alpha y) dy. It equals W(x + z) - W(x).
    """
    if not (math.isfinite(x) and x >= 0):
        raise InvalidParameterError("x must be finite and nonnegative")
    if not math.isfinite(z):
        raise InvalidParameterError("z must be finite")
    if z <= 0:
        return 0.0
    y, w = gauss_legendre(np.linspace(0.0, z, 1 + max(2, math.ceil(z))), order)
    dens = p.alpha * np.exp(-p.alpha * y)
    return p.ruin_at_zero * math.exp(p.decay * x) * float(np.sum(w * scale_w(p, z - y) * dens))


def d1_horizon(p: ClParams, tail: float = 1e-12) -> float:
    """Smallest Y (to root-finder accuracy) with 1 - F_D1(Y) <= ``tail``."""
    g = lambda y: math.log(max(upsilon_excess(p, y) * p.alpha / p.eta, 1e-300)) - math.log(tail)
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
        if hi > 1e7:
            raise InvalidParameterError("D1 tail decays too slowly for the requested horizon")
    lo = hi / 2.0 if hi > 1.0 else 1e-9
    if g(lo) <= 0:
        return lo
    return find_root(g, lo, hi, tol=1e-6 * hi)


def d1_breaks(p: ClParams, y_max: float, first: float = 0.25):
    """Panel breakpoints on [0, y_max]: geometric growth from ``first``."""
    b = [0.0]
    step = first
    while b[-1] + step < y_max:
        b.append(b[-1] + step)
        step = min(step * 1.5, 8.0)
    b.append(y_max)
    return np.asarray(b)


def d1_quadrature(p: ClParams, y_max: float | None = None, order: int = 24, tail: float = 1e-12):
    """Gauss-Legendre nodes/weights on [0, Y] with F_D1 and f_D1 at the nodes."""
    if y_max is None:
        y_max = d1_horizon(p, tail)
    y, w = gauss_legendre(d1_breaks(p, y_max), order)
    return y, w, d1_cdf(p, y), d1_pdf(p, y)


def d1_panels(y_max: float):
    """Panel breaks for interpolating the D1 law: fine near 0, where f bends sharply."""
    head = [0.0, 0.01, 0.025, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
    b = [v for v in head if v < y_max]
    step = 1.5
    while b[-1] + step < y_max:
        b.append(b[-1] + step)
        step = min(step * 1.25, 12.0)
    b.append(y_max)
    return np.asarray(b)


class _PiecewiseChebyshev:
    """Piecewise Chebyshev interpolant; each panel interpolates at Chebyshev points."""

    def __init__(self, breaks, values):
        self.breaks = breaks
        deg = values.shape[1] - 1
        pts = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        vander = np.polynomial.chebyshev.chebvander(pts, deg)
        self.coefs = np.linalg.solve(vander, values.T).T

    @staticmethod
    def nodes(breaks, deg):
        pts = np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        lo, hi = breaks[:-1, None], breaks[1:, None]
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * pts

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        k = np.clip(np.searchsorted(self.breaks, y, side="right") - 1, 0, len(self.breaks) - 2)
        lo, hi = self.breaks[k], self.breaks[k + 1]
        t = (2.0 * y - lo - hi) / (hi - lo)
        c = self.coefs[k]
        # Clenshaw recurrence, vectorised over points
        b1 = np.zeros_like(t)
        b2 = np.zeros_like(t)
        for j in range(c.shape[-1] - 1, 0, -1):
            b1, b2 = 2.0 * t * b1 - b2 + c[..., j], b1
        return t * b1 - b2 + c[..., 0]


@dataclass
class D1Table:
    """Piecewise Chebyshev interpolants of F_D1 and f_D1 on [0, y_max].

    Used where the convolution and recursion code needs the law at very many
    points. Beyond ``y_max`` the cdf is taken as 1 and the density as 0.
    """

    params: ClParams
    y_max: float
    breaks: np.ndarray = field(repr=False)
    degree: int = 24

    def __post_init__(self):
        p = self.params
        self.breaks = np.asarray(self.breaks, dtype=float)
        y = _PiecewiseChebyshev.nodes(self.breaks, self.degree)
        self._cdf = _PiecewiseChebyshev(self.breaks, d1_cdf(p, y))
        self._pdf = _PiecewiseChebyshev(self.breaks, d1_pdf(p, y))

    @classmethod
    def build(cls, p: ClParams, y_max: float | None = None, tail: float = 1e-12, degree: int = 24):
        if y_max is None:
            y_max = d1_horizon(p, tail)
        return cls(p, float(y_max), d1_panels(y_max), degree)

    @property
    def pdf_coefficients(self) -> np.ndarray:
        """Chebyshev coefficients of the density, one row per panel of ``breaks``."""
        return self._pdf.coefs

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = np.clip(y, 0.0, self.y_max)
        out = np.where(y <= 0, 0.0, np.where(y >= self.y_max, 1.0, self._cdf(inside)))
        return float(out) if out.ndim == 0 else out

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= 0) & (y <= self.y_max)
        out = np.where(inside, np.maximum(self._pdf(np.clip(y, 0.0, self.y_max)), 0.0), 0.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size):
        """Inverse-transform draws: table lookup, then two Newton steps on F(y) = u."""
        u = rng.random(size)
        grid = np.concatenate([np.linspace(0.0, min(20.0, self.y_max), 4001),
                               np.linspace(min(20.0, self.y_max), self.y_max, 2001)[1:]])
        cdf = np.maximum.accumulate(self.cdf(grid))
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        y = np.interp(u, cdf[keep], grid[keep])
        for _ in range(2):
            dens = self.pdf(y)
            step = np.where(dens > 0, (self.cdf(y) - u) / np.where(dens > 0, dens, 1.0), 0.0)
            y = np.clip(y - step, 0.0, self.y_max)
        return y


class KernelCache:
    """Per-parameter memo of Upsilon with a monotone interpolating table.

    Direct evaluation (``upsilon``) is the default everywhere; the table
    (``upsilon_table`` on ``grid``) offers a cheap monotone-cubic interpolant
    for dense sweeps. Both are immutable once built.
    """

    def __init__(self, params: ClParams, grid=None, tolerance: float = 1e-10):
        if not tolerance > 0:
            raise InvalidParameterError("tolerance must be positive")
        self.params = params
        self.tolerance = tolerance
        self.grid = np.geomspace(1e-4, 1e3, 351) if grid is None else _check_positive(grid, "grid")
        self.upsilon_table = np.asarray(upsilon(params, self.grid))
        self._interp = PchipInterpolator(np.log(self.grid), self.upsilon_table)
        self._memo: dict[float, float] = {}
        self._d1_table: D1Table | None = None
        self._d1_rule = None

    def upsilon(self, r):
        if np.ndim(r) == 0:
            key = float(r)
            if key not in self._memo:
                self._memo[key] = upsilon(self.params, key)
            return self._memo[key]
        return upsilon(self.params, r)

    def upsilon_interp(self, r):
        r = _check_positive(r)
        if np.any(r < self.grid[0]) or np.any(r > self.grid[-1]):
            raise InvalidParameterError("r outside the tabulated grid")
        out = self._interp(np.log(r))
        return float(out) if np.ndim(out) == 0 else out

    def lambda0(self, x, r):
        ups = self.upsilon(r) if np.ndim(r) == 0 else None
        return lambda0(self.params, x, r, ups=ups if np.ndim(x) == 0 else None)

    def d1_rule(self):
        """Cached ``d1_quadrature`` on [0, d1_horizon]."""
        if self._d1_rule is None:
            self._d1_rule = d1_quadrature(self.params)
        return self._d1_rule

    def d1_table(self) -> D1Table:
        if self._d1_table is None:
            self._d1_table = D1Table.build(self.params)
        return self._d1_table
