"""Numeric primitives: modified Bessel I1, quadrature, root finding, differentiation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate as _spi
from scipy import optimize as _spo

from .errors import InvalidBracketError, InvalidParameterError, NonConvergenceError, NumericalFailure

# Series branch below, asymptotic branch at or above.
BESSEL_SWITCH = 15.0
# Largest argument with a finite I1 in double precision.
_BESSEL_MAX = 713.0

_SERIES_TERMS = 64
_ASYMPTOTIC_TERMS = 40

DEFAULT_TOL = 1e-10


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def bessel_i1_series(x):
    """Power series sum_k (x/2)^(2k+1) / (k! (k+1)!), vectorised."""
    x, scalar = _as_array(x)
    half = 0.5 * x
    q = half * half
    term = half.copy()
    total = half.copy()
    for k in range(_SERIES_TERMS):
        term = term * q / ((k + 1.0) * (k + 2.0))
        total = total + term
    return float(total) if scalar else total


def _asymptotic_sum(x):
    """sum_k (-1)^k a_k(1) / x^k, truncated at the smallest term for each x."""
    mu = 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    prev = np.abs(term)
    for k in range(1, _ASYMPTOTIC_TERMS + 1):
        term = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        mag = np.abs(term)
        active &= mag < prev
        total = np.where(active, total + term, total)
        prev = mag
    return total


def bessel_i1e(x):
    """Exponentially scaled I1: exp(-x) * I1(x) for x >= 0."""
    x, scalar = _as_array(x)
    if np.any(x < 0):
        raise InvalidParameterError("bessel_i1e requires x >= 0")
    out = np.empty_like(x)
    small = x < BESSEL_SWITCH
    if np.any(small):
        xs = x[small]
        out[small] = bessel_i1_series(xs) * np.exp(-xs)
    big = ~small
    if np.any(big):
        xb = x[big]
        out[big] = _asymptotic_sum(xb) / np.sqrt(2.0 * np.pi * xb)
    return float(out) if scalar else out


def bessel_i1_asymptotic(x):
    """Large-argument expansion of I1 (unscaled)."""
    x, scalar = _as_array(x)
    out = np.exp(x) * _asymptotic_sum(x) / np.sqrt(2.0 * np.pi * x)
    return float(out) if scalar else out


def bessel_i1(x):
    """Modified Bessel function of the first kind, order one.

    Uses the power series below ``BESSEL_SWITCH`` and the scaled asymptotic
    expansion above it. Raises ``OverflowError`` where I1 exceeds the double range.
    """
    x, scalar = _as_array(x)
    if np.any(x < 0):
        raise InvalidParameterError("bessel_i1 requires x >= 0")
    if np.any(x > _BESSEL_MAX):
        raise OverflowError("I1(x) overflows double precision for x > %g" % _BESSEL_MAX)
    out = np.empty_like(x)
    small = x < BESSEL_SWITCH
    if np.any(small):
        out[small] = bessel_i1_series(x[small])
    big = ~small
    if np.any(big):
        out[big] = bessel_i1_asymptotic(x[big])
    return float(out) if scalar else out


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


def integrate(f: Callable[[float], float], a: float, b: float, tol: float = DEFAULT_TOL,
              limit: int = 200) -> QuadratureResult:
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``[a, b]``.

    ``b`` may be ``np.inf``; the semi-infinite range is mapped onto (0, 1]
    before subdivision. Integrable endpoint singularities must be removed by
    the caller with a substitution.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    if b == a:
        return QuadratureResult(0.0, 0.0, 1)
    # with full_output, quad reports trouble as a fourth return value instead of warning
    out = _spi.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=limit, full_output=1)
    value, err, info = out[:3]
    if len(out) > 3:
        raise NonConvergenceError(f"quadrature on [{a}, {b}] did not converge: {out[3]}")
    return QuadratureResult(float(value), float(abs(err)), int(info["neval"]))


@lru_cache(maxsize=32)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def gauss_legendre(breaks, order: int = 16):
    """Composite Gauss-Legendre nodes and weights on consecutive intervals of ``breaks``.

    ``breaks`` may be 1-D (one rule) or 2-D with shape (batch, n_breaks), giving
    one rule per row. Returns arrays shaped (..., (n_breaks - 1) * order).
    """
    t, w = _legendre(order)
    breaks = np.asarray(breaks, dtype=float)
    lo = breaks[..., :-1, None]
    hi = breaks[..., 1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (t + 1.0)).reshape(*breaks.shape[:-1], -1)
    weights = (half * w).reshape(*breaks.shape[:-1], -1)
    return nodes, weights


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of ``f`` in a sign-changing bracket ``[lo, hi]`` (Brent's method)."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise InvalidBracketError(f"f({lo})={flo:g} and f({hi})={fhi:g} have the same sign")
    try:
        root, res = _spo.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                maxiter=500, full_output=True)
    except RuntimeError as exc:
        raise NonConvergenceError(str(exc)) from exc
    if not res.converged:
        raise NonConvergenceError(res.flag)
    return float(root)


_CBRT_EPS = np.finfo(float).eps ** (1.0 / 3.0)


def differentiate(f: Callable, x, scale: float = 1.0):
    """Central difference with one Richardson step.

    The base step is ``scale * max(1, |x|) * eps**(1/3)``. ``f`` must accept
    arrays; ``x`` may be an array, in which case all stencil points are
    evaluated in a single call.
    """
    x, scalar = _as_array(x)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), x.shape)
    h = scale * np.maximum(1.0, np.abs(x)) * _CBRT_EPS
    pts = np.concatenate([(x + h).ravel(), (x - h).ravel(),
                          (x + 0.5 * h).ravel(), (x - 0.5 * h).ravel()])
    vals = np.asarray(f(pts), dtype=float).reshape((4,) + x.shape)
    d_h = (vals[0] - vals[1]) / (2.0 * h)
    d_h2 = (vals[2] - vals[3]) / h
    out = (4.0 * d_h2 - d_h) / 3.0
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite derivative estimate")
    return float(out) if scalar else out


def clamp_probability(value, what: str = "probability", noise: float = 1e-8):
    """Clip to [0, 1]; warn when the excursion exceeds rounding noise."""
    from .errors import ClampWarning

    arr, scalar = _as_array(value)
    excess = np.maximum(arr - 1.0, -arr)
    if np.any(excess > noise):
        warnings.warn(f"{what} left [0, 1] by {float(np.max(excess)):.3g}", ClampWarning,
                      stacklevel=3)
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if scalar else out
