"""Cramér-Lundberg surplus process with exponential claims.

X_t = x + c t - sum_{i <= N_t} C_i with N a Poisson process of rate ``eta``
and C_i ~ Exp(``alpha``). Everything here is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NumericalFailure
from .numerics import bessel_i1e


@dataclass(frozen=True)
class ClParams:
    """Premium rate ``c``, claim intensity ``eta`` and claim-size rate ``alpha``."""

    c: float
    eta: float
    alpha: float

    def __post_init__(self):
        for name in ("c", "eta", "alpha"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)
                    and value > 0):
                raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not self.c - self.eta / self.alpha > 0:
            raise InvalidParameterError(
                f"net-profit condition violated: c - eta/alpha = {self.c - self.eta / self.alpha:g} <= 0")

    @property
    def drift(self) -> float:
        """E[X_1] = c - eta/alpha."""
        return self.c - self.eta / self.alpha

    @property
    def decay(self) -> float:
        """Exponent eta/c - alpha < 0 appearing in W; minus the adjustment coefficient."""
        return self.eta / self.c - self.alpha

    @property
    def ruin_at_zero(self) -> float:
        """P_0(tau_0^- < infinity) = eta / (c alpha)."""
        return self.eta / (self.c * self.alpha)


def psi(p: ClParams, lam):
    """Laplace exponent c*lam - eta*lam/(alpha+lam)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise InvalidParameterError("psi is evaluated on lam >= 0")
    out = p.c * lam - p.eta * lam / (p.alpha + lam)
    return float(out) if out.ndim == 0 else out


def phi(p: ClParams, q: float) -> float:
    """Right inverse of psi: the largest root of psi(lam) = q.

    psi(lam) = q is the quadratic c lam^2 + (c alpha - eta - q) lam - q alpha = 0;
    the larger root is taken in a cancellation-free form and Newton-polished.
    """
    if not q >= 0:
        raise InvalidParameterError("phi requires q >= 0")
    b = p.c * p.alpha - p.eta - q
    disc = math.sqrt(b * b + 4.0 * p.c * q * p.alpha)
    if b > 0:
        lam = 2.0 * q * p.alpha / (b + disc)
    else:
        lam = (disc - b) / (2.0 * p.c)
    if lam > 0:
        dpsi = p.c - p.eta * p.alpha / (p.alpha + lam) ** 2
        lam -= (psi(p, lam) - q) / dpsi
    resid = abs(psi(p, lam) - q)
    if not math.isfinite(lam) or resid > 1e-12 * max(1.0, q):
        raise NumericalFailure(f"phi({q}) did not converge (residual {resid:g})")
    return float(lam)


def first_passage_laplace(p: ClParams, x: float, b: float, q: float) -> float:
    """E_x[exp(-q tau_b^+)] = exp(-Phi_q (b - x)) for x <= b; upward passage is continuous."""
    if not x <= b:
        raise InvalidParameterError(f"x={x} must not exceed b={b}")
    return math.exp(-phi(p, q) * (b - x))


def mean_per_unit(p: ClParams) -> float:
    return p.drift


def scale_w(p: ClParams, x):
    """Zero-level scale function W, extended by zero on the negative half-line."""
    x = np.asarray(x, dtype=float)
    k = p.ruin_at_zero
    with np.errstate(over="ignore"):
        val = (1.0 - k * np.exp(p.decay * np.maximum(x, 0.0))) / p.drift
    out = np.where(x < 0, 0.0, val)
    return float(out) if out.ndim == 0 else out


def z_theta(p: ClParams, x, theta: float):
    """Second scale function Z(x, theta) at q = 0.

    For x >= 0 this is exp(theta x) (1 - psi(theta) int_0^x exp(-theta y) W(y) dy).
    Since int_0^inf exp(-theta y) W(y) dy = 1/psi(theta), the bracket equals
    psi(theta) int_x^inf exp(-theta y) W(y) dy. That integral is a sum of two
    exponentials carrying exp(-theta x), which cancels the prefactor and leaves
    the form below, free of cancellation and overflow for large theta.
    """
    if not theta >= 0:
        raise InvalidParameterError("z_theta requires theta >= 0")
    x = np.asarray(x, dtype=float)
    d = p.decay
    k = p.ruin_at_zero
    xp = np.maximum(x, 0.0)
    pos = p.c * ((theta - d) - k * theta * np.exp(d * xp)) / ((p.alpha + theta) * p.drift)
    with np.errstate(over="ignore"):
        neg = np.exp(theta * np.minimum(x, 0.0))
        out = np.where(x < 0, neg, pos)
    return float(out) if out.ndim == 0 else out


def claims_density(p: ClParams, r: float, s):
    """Absolutely continuous part of the law of the aggregate claims S_r at s > 0.

    exp(-eta r) exp(-alpha s) sqrt(r eta alpha / s) I1(2 sqrt(r eta alpha s)),
    evaluated through the scaled Bessel function to avoid overflow.
    """
    s = np.asarray(s, dtype=float)
    a = r * p.eta * p.alpha
    ss = np.maximum(s, 1e-300)
    u = np.sqrt(ss)
    arg = 2.0 * np.sqrt(a) * u
    ustar = math.sqrt(r * p.eta / p.alpha)
    # exp(-eta r - alpha s + arg) = exp(-alpha (u - ustar)^2)
    dens = np.exp(-p.alpha * (u - ustar) ** 2) * bessel_i1e(arg) * np.sqrt(a) / u
    small = s < 1e-12
    if np.any(small):
        dens = np.where(small, math.exp(-p.eta * r) * a * np.exp(-p.alpha * ss), dens)
    out = np.where(s > 0, dens, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransitionLaw:
    """Law of X_r started at 0: an atom at c r plus a density on (-inf, c r)."""

    params: ClParams
    horizon: float

    @property
    def atom_location(self) -> float:
        return self.params.c * self.horizon

    @property
    def atom_mass(self) -> float:
        return math.exp(-self.params.eta * self.horizon)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        s = self.atom_location - z
        out = np.where(s > 0, claims_density(self.params, self.horizon, np.maximum(s, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out


def transition_law(p: ClParams, r: float) -> TransitionLaw:
    if not (r > 0 and math.isfinite(r)):
        raise InvalidParameterError(f"transition_law requires r > 0, got {r!r}")
    return TransitionLaw(p, float(r))
