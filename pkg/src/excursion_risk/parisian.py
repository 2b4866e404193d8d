"""Sum/maximum laws of excursion durations and the risk measures built on them.

Given N_inf = n, the durations D_1..D_n are i.i.d. with law F_D1 (for x >= 0),
so occupation time, peak-to-sum ruin and near-maximum counts are mixtures
over the geometric law of N_inf of functionals of n i.i.d. durations.

Two evaluation routes are provided:

* ``joint_density`` evaluates the joint density f_n(l, r) of (sum, max) by the
  recursion f_n(l, r) = n f(r) int f_{n-1}(l - r, t) dt over
  t in [(l - r)/(n - 1), min(l - r, r)], with Gauss-Legendre panels split at the
  kink lines t = s/m of f_{n-1}. It is exact up to quadrature error and meant
  for small n.
* The series quantities need n up to ~100, so they use the equivalent form
  P(S_n <= l, max <= r) = int_0^l g_r^{*n}, g_r = f 1{[0, r]}, computed by
  trapezoid convolution on a grid with r on a node, plus one Richardson step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from .errors import InvalidParameterError, ResolutionTooCoarseError
from .kernels import D1Table, d1_panels
from .laws import ExcursionLawContext, _require_iid, _resolve_terms, n_infty_pmf, ruin_prob
from .numerics import clamp_probability, gauss_legendre


def _table(ctx: ExcursionLawContext) -> D1Table:
    return ctx.kernels.d1_table()


# --- joint density of (sum, max) --------------------------------------------------------

@dataclass(frozen=True)
class LineMass:
    """f_1: the law of (D, D), a density f_D1(r) carried on the diagonal l = r."""

    table: D1Table

    def weight(self, r):
        return self.table.pdf(r)


def recursion_step(prev, n: int, l, r, order: int = 16):
    """One application of the recursion from f_{n-1} (``prev``) to f_n at (l, r).

    ``prev`` is either a ``LineMass`` (n = 2) or a callable (s, t) -> f_{n-1}(s, t).
    Against the line mass the t-integral collapses onto t = l - r.
    """
    l, r = np.broadcast_arrays(np.asarray(l, dtype=float), np.asarray(r, dtype=float))
    s = l - r
    lo = s / (n - 1)
    hi = np.minimum(s, r)
    if isinstance(prev, LineMass):
        f = prev.table
        inside = (s >= lo) & (s <= hi) & (s >= 0)
        out = np.where(inside, n * f.pdf(r) * prev.weight(np.maximum(s, 0.0)), 0.0)
        return float(out) if out.ndim == 0 else out
    raise TypeError("recursion_step integrates only against the line mass; use joint_density")


# Offsets below an endpoint where f(.) is evaluated near 0 and bends sharply.
_GRADING = np.array([0.02, 0.1, 0.4, 1.5, 6.0, 24.0, 96.0])


@nb.njit(cache=True)
def _pdf(y, breaks, coefs, y_max):
    if y < 0.0 or y > y_max:
        return 0.0
    k = np.searchsorted(breaks, y, side="right") - 1
    if k > breaks.size - 2:
        k = breaks.size - 2
    if k < 0:
        k = 0
    lo = breaks[k]
    hi = breaks[k + 1]
    t = (2.0 * y - lo - hi) / (hi - lo)
    b1 = 0.0
    b2 = 0.0
    for j in range(coefs.shape[1] - 1, 0, -1):
        b1, b2 = 2.0 * t * b1 - b2 + coefs[k, j], b1
    v = t * b1 - b2 + coefs[k, 0]
    return v if v > 0.0 else 0.0


@nb.njit(cache=True)
def _fn(n, l, r, breaks, coefs, y_max, gx, gw):
    s = l - r
    if n == 2:
        if s < 0.0 or s > r or r <= 0.0:
            return 0.0
        return 2.0 * _pdf(r, breaks, coefs, y_max) * _pdf(s, breaks, coefs, y_max)
    lo = s / (n - 1)
    hi = min(s, r)
    if not hi > lo:
        return 0.0
    # panel ends: kink lines t = s/m of f_{n-1}, plus grading towards t = s
    # where the integrand varies on the short scale of f near 0
    pts = np.empty(n + _GRADING.size)
    m = 0
    pts[m] = lo
    m += 1
    for q in range(2, n - 1):
        v = s / q
        if lo < v < hi:
            pts[m] = v
            m += 1
    for g in _GRADING:
        v = s - g
        if lo < v < hi:
            pts[m] = v
            m += 1
    pts[m] = hi
    m += 1
    pts = np.sort(pts[:m])
    total = 0.0
    for p in range(m - 1):
        a = pts[p]
        b = pts[p + 1]
        half = 0.5 * (b - a)
        if half <= 0.0:
            continue
        mid = 0.5 * (a + b)
        acc = 0.0
        for i in range(gx.size):
            acc += gw[i] * _fn(n - 1, s, mid + half * gx[i], breaks, coefs, y_max, gx, gw)
        total += half * acc
    return n * _pdf(r, breaks, coefs, y_max) * total


@nb.njit(cache=True)
def _fn_many(n, l, r, breaks, coefs, y_max, gx, gw, out):
    for i in range(l.size):
        out[i] = _fn(n, l[i], r[i], breaks, coefs, y_max, gx, gw)


def joint_density(table: D1Table, n: int, l, r, order: int = 12):
    """f_n(l, r), the density of (D_1 + ... + D_n, max D_i) on {l/n <= r <= l}, for n >= 2.

    Evaluated pointwise by the recursion, each t-integral on Gauss-Legendre
    panels of the given order.
    """
    if n < 2:
        raise InvalidParameterError("f_1 is a line mass; joint_density needs n >= 2")
    l, r = np.broadcast_arrays(np.asarray(l, dtype=float), np.asarray(r, dtype=float))
    gx, gw = np.polynomial.legendre.leggauss(order)
    out = np.empty(l.size)
    _fn_many(n, np.ascontiguousarray(l).ravel(), np.ascontiguousarray(r).ravel(), table.breaks,
             table.pdf_coefficients, table.y_max, gx, gw, out)
    out = out.reshape(l.shape)
    return float(out) if out.ndim == 0 else out


def joint_mass_rule(table: D1Table, n: int, order: int = 12):
    """Nodes (l, r) and weights of a product rule over the support of f_n.

    Uses r and w in [0, 1] with l = r (1 + (n - 1) w); the Jacobian (n - 1) r is
    folded into the weights. w is split at the kink lines l - r = m r and graded
    towards w = 0, where for large r all the mass sits in a thin strip.
    """
    rn, rw = gauss_legendre(d1_panels(table.y_max), order)
    kinks = np.arange(n) / (n - 1)
    grade = _GRADING[None, :] / ((n - 1) * rn[:, None])
    wb = np.sort(np.concatenate([np.broadcast_to(kinks, (rn.size, n)), np.minimum(grade, 1.0)],
                                axis=1), axis=1)
    wn, ww = gauss_legendre(wb, order)
    R = np.broadcast_to(rn[:, None], wn.shape)
    weights = ww * rw[:, None] * (n - 1) * R
    return R * (1.0 + (n - 1) * wn), R, weights


@dataclass(frozen=True)
class GridSpec:
    """Rectangular (l, r) lattice; ``r_max=None`` uses the 1 - 1e-4 quantile of D1."""

    r_max: float | None = None
    l_max: float | None = None
    n_r: int = 201
    n_l: int = 201

    def __post_init__(self):
        if self.n_r < 2 or self.n_l < 2:
            raise InvalidParameterError("grid needs at least two points per axis")


@dataclass(frozen=True)
class JointGridDensity:
    """f_n tabulated on a rectangular (l, r) lattice with the support mask {l/n <= r <= l}.

    ``values[i, j]`` is f_n(l_axis[i], r_axis[j]); ``total_mass`` is the
    integral over the support from the product rule, not a lattice sum.
    """

    n: int
    l_axis: np.ndarray
    r_axis: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    cell_area: float
    total_mass: float

    def lattice_sum(self) -> float:
        """Riemann sum over the lattice; a crude check only."""
        return float(np.sum(self.values) * self.cell_area)


def joint_sum_max_pdf(ctx: ExcursionLawContext, n: int, grid: GridSpec | None = None,
                      order: int = 12, tolerance: float = 1e-3) -> JointGridDensity:
    if n < 2:
        raise InvalidParameterError("n must be >= 2; f_1 is the diagonal line mass (see LineMass)")
    grid = grid or GridSpec()
    table = _table(ctx)
    r_max = grid.r_max if grid.r_max is not None else _quantile(table, 1.0 - 1e-4)
    l_max = grid.l_max if grid.l_max is not None else n * r_max
    l_axis = np.linspace(0.0, l_max, grid.n_l)
    r_axis = np.linspace(0.0, r_max, grid.n_r)
    L, R = np.meshgrid(l_axis, r_axis, indexing="ij")
    mask = (L / n <= R) & (R <= L) & (R > 0)
    values = np.where(mask, joint_density(table, n, L, R, order), 0.0)
    ln, rn, w = joint_mass_rule(table, n, order)
    total = float(np.sum(w * joint_density(table, n, ln, rn, order)))
    if abs(total - 1.0) > tolerance:
        raise ResolutionTooCoarseError(f"f_{n} integrates to {total:.6g}; raise the quadrature order")
    return JointGridDensity(n, l_axis, r_axis, values, mask,
                            float((l_axis[1] - l_axis[0]) * (r_axis[1] - r_axis[0])), total)


def joint_cell_masses(ctx: ExcursionLawContext, n: int, l_edges, r_edges, order: int = 12):
    """Probability of each (sum, max) cell, shape (len(l_edges) - 1, len(r_edges) - 1).

    Within a cell the l-integral runs over the support r <= l <= n r, split at the
    kinks l = k r; the r-panels split where l0 / k or l1 / k enters the cell.
    """
    if n < 2:
        raise InvalidParameterError("joint_cell_masses needs n >= 2")
    table = _table(ctx)
    l_edges = np.asarray(l_edges, dtype=float)
    r_edges = np.asarray(r_edges, dtype=float)
    if np.any(np.diff(l_edges) <= 0) or np.any(np.diff(r_edges) <= 0) or l_edges[0] < 0 \
            or r_edges[0] < 0:
        raise InvalidParameterError("edges must be nonnegative and increasing")
    ks = np.arange(1, n + 1)
    out = np.zeros((l_edges.size - 1, r_edges.size - 1))
    for i, (l0, l1) in enumerate(zip(l_edges[:-1], l_edges[1:])):
        for j, (r0, r1) in enumerate(zip(r_edges[:-1], r_edges[1:])):
            lo, hi = max(r0, l0 / n), min(r1, l1)
            if lo >= hi:
                continue
            cuts = np.concatenate([[lo, hi], l0 / ks, l1 / ks])
            rb = np.unique(cuts[(cuts >= lo) & (cuts <= hi)])
            rn, rw = gauss_legendre(rb, order)
            # per r node: l panels between the kinks k r, clipped to [l0, l1]
            lb = np.clip(np.concatenate([rn[:, None] * ks[None, :],
                                         np.full((rn.size, 2), [l0, l1])], axis=1),
                         np.maximum(l0, rn)[:, None], np.minimum(l1, n * rn)[:, None])
            lb = np.sort(lb, axis=1)
            ln, lw = gauss_legendre(lb, order)
            R = np.broadcast_to(rn[:, None], ln.shape)
            dens = joint_density(table, n, ln, R, order)
            out[i, j] = float(np.sum(rw * np.sum(lw * dens, axis=1)))
    return out


def _quantile(table: D1Table, q: float) -> float:
    grid = np.linspace(0.0, table.y_max, 20001)
    return float(grid[np.searchsorted(table.cdf(grid), q)])


# --- sums of truncated durations by trapezoid convolution ------------------------------

def _trapezoid_powers(g, h, k_max, levels):
    """P(S_k <= level) for k = 2..k_max, S_k a sum of k draws from the density g.

    ``g`` has shape (B, K + 1) on nodes 0, h, ..., K h (one grid per row, h of
    shape (B,)); any jump sits on a node and carries the mean of its one-sided
    limits. ``levels`` has shape (B, L) within [0, K h]. Returns (k_max + 1, B, L)
    with rows 0 and 1 left empty.
    """
    B, K1 = g.shape
    size = next_fast_len(2 * K1)
    G = rfft(g, size, axis=1)
    h_col = h[:, None]
    out = np.zeros((k_max + 1,) + levels.shape)
    phi = g
    pos = levels / h_col
    idx = np.clip(np.floor(pos).astype(int), 0, K1 - 2)
    frac = pos - idx
    for k in range(2, k_max + 1):
        full = irfft(G * rfft(phi, size, axis=1), size, axis=1)[:, :K1]
        phi = h_col * (full - 0.5 * (g[:, :1] * phi + g * phi[:, :1]))
        phi[:, 0] = 0.0
        cdf = np.concatenate([np.zeros((B, 1)),
                              np.cumsum(0.5 * h_col * (phi[:, 1:] + phi[:, :-1]), axis=1)], axis=1)
        # cubic Hermite on the cell holding each level, slopes = density values
        y0 = np.take_along_axis(cdf, idx, 1)
        y1 = np.take_along_axis(cdf, idx + 1, 1)
        d0 = np.take_along_axis(phi, idx, 1) * h_col
        d1 = np.take_along_axis(phi, idx + 1, 1) * h_col
        t = frac
        out[k] = ((2 * t**3 - 3 * t**2 + 1) * y0 + (t**3 - 2 * t**2 + t) * d0
                  + (-2 * t**3 + 3 * t**2) * y1 + (t**3 - t**2) * d1)
    return out


def truncated_sum_cdf(table: D1Table, caps, levels, k_max: int, per_cap: int = 64,
                      spacing: float = 0.01, max_nodes: int = 1 << 16):
    """H[k, b, j] = P(D_1 + ... + D_k <= levels[b, j], every D_i <= caps[b]) for k = 0..k_max.

    ``caps`` may be ``inf`` (no truncation). A finite cap sits on node
    ``per_cap`` of its row's grid; untruncated rows use ``spacing``. The result
    combines two resolutions by one Richardson step, and exact values replace
    the grid wherever a level is at least k times the cap.
    """
    caps = np.atleast_1d(np.asarray(caps, dtype=float))
    levels = np.atleast_2d(np.asarray(levels, dtype=float))
    if levels.shape[0] != caps.size:
        raise InvalidParameterError("levels needs one row per cap")
    if np.any(levels < 0):
        raise InvalidParameterError("levels must be nonnegative")
    eff = np.minimum(caps, table.y_max)
    finite = caps < table.y_max
    per_cap = np.broadcast_to(np.asarray(per_cap, dtype=int), caps.shape)
    if np.any(per_cap[finite] < 16):
        raise InvalidParameterError("per_cap must be at least 16")
    top = np.minimum(levels.max(axis=1), k_max * eff)
    h = np.where(finite, eff / per_cap, spacing)
    n_steps = int(np.ceil(np.max(top / h))) + 2
    if n_steps > max_nodes:
        raise InvalidParameterError(
            f"grid needs {n_steps} nodes, above max_nodes={max_nodes}; coarsen spacing or per_cap")
    grid_levels = np.minimum(levels, top[:, None])
    coarse_fine = []
    if k_max >= 2:
        for refine in (1, 2):
            hh = h / refine
            K = n_steps * refine
            cols = np.arange(K + 1)[None, :]
            g = table.pdf(hh[:, None] * cols)
            cap_node = np.where(finite, per_cap * refine, K + 1)[:, None]
            g = np.where(cols > cap_node, 0.0, np.where(cols == cap_node, 0.5 * g, g))
            coarse_fine.append(_trapezoid_powers(g, hh, k_max, grid_levels))
    H = np.zeros((k_max + 1,) + levels.shape)
    H[0] = 1.0
    if k_max >= 1:
        H[1] = table.cdf(np.minimum(levels, eff[:, None]))
    if k_max >= 2:
        H[2:] = (4.0 * coarse_fine[1][2:] - coarse_fine[0][2:]) / 3.0
    Fcap = table.cdf(eff)
    for k in range(2, k_max + 1):
        exact = levels >= k * eff[:, None]
        H[k] = np.where(exact, Fcap[:, None] ** k, H[k])
    return np.clip(H, 0.0, 1.0)


# --- occupation time and longest excursion ----------------------------------------------

def occupation_longest_joint_cdf(ctx: ExcursionLawContext, l: float, r: float,
                                 n_max: int | None = None) -> float:
    """P_x(total time below 0 <= l, longest excursion <= r).

    P(N_inf = 0) + sum_n pmf(n) F_n(l, r), F_n(l, r) = P(S_n <= l, max <= r).
    Since max <= sum, r >= l gives the same value as r = l.
    """
    _require_iid(ctx, "occupation_longest_joint_cdf")
    if not (l > 0 and r > 0):
        raise InvalidParameterError("l and r must be positive")
    n_max = _resolve_terms(ctx, n_max, "occupation_longest_joint_cdf")
    table = _table(ctx)
    cap = min(r, l)
    # h about 0.005, within 2^16 nodes up to the level
    per_cap = max(64, min(math.ceil(cap / 0.005), int((1 << 16) * cap / l) - 2))
    H = truncated_sum_cdf(table, [cap], [[l]], n_max, per_cap=per_cap)[:, 0, 0]
    pmf = n_infty_pmf(ctx, np.arange(n_max + 1))
    return clamp_probability(float(np.dot(pmf, H)), "occupation/longest joint cdf")


def occupation_cdf(ctx: ExcursionLawContext, l: float, n_max: int | None = None) -> float:
    """P_x(total time below 0 <= l)."""
    return occupation_longest_joint_cdf(ctx, l, l, n_max)


# --- peak-to-sum ruin -----------------------------------------------------------------

def _tail_nodes(table: D1Table, r: float, order: int):
    b = d1_panels(table.y_max)
    b = np.concatenate([[r], b[b > r]])
    if b.size < 2:
        return np.empty(0), np.empty(0)
    return gauss_legendre(b, order)


def peak_to_sum_ruin_prob(ctx: ExcursionLawContext, ratio_alpha: float, r: float,
                          n_max: int | None = None, order: int = 16) -> float:
    """P_x(some excursion is longer than r and than ratio_alpha times the total).

    Strict inequalities throughout, so a single excursion never qualifies when
    ratio_alpha = 1. Conditioning on which of the n durations is the maximum m:
    n int_r^inf f(m) P(S_{n-1} < m (1/ratio_alpha - 1), others <= m) dm.
    """
    _require_iid(ctx, "peak_to_sum_ruin_prob")
    if not 0 < ratio_alpha <= 1:
        raise InvalidParameterError("ratio_alpha must lie in (0, 1]")
    if not r > 0:
        raise InvalidParameterError("r must be positive")
    n_max = _resolve_terms(ctx, n_max, "peak_to_sum_ruin_prob")
    table = _table(ctx)
    m, w = _tail_nodes(table, r, order)
    if m.size == 0:
        return 0.0
    fm = table.pdf(m)
    Fm = table.cdf(m)
    q = 1.0 / ratio_alpha - 1.0
    k_max = n_max - 1
    H = np.empty((k_max + 1, m.size))
    H[0] = 1.0 if q > 0 else 0.0
    ks = np.arange(1, k_max + 1)
    if q == 0:
        H[1:] = 0.0
    else:
        # the sum bound implies the cap for k <= q, and makes it irrelevant for q <= 1
        H[1:] = Fm[None, :] ** ks[:, None]
        need = ks > q
        if np.any(need):
            kk = int(ks[need].max())
            if q <= 1.0:
                sums = truncated_sum_cdf(table, [np.inf], [q * m], kk)[:, 0, :]
            else:
                # h <= 0.05 where f(m) carries weight, 200 nodes per cap in the far tail
                per_cap = np.clip(np.ceil(m / 0.05), 48, 200).astype(int)
                sums = truncated_sum_cdf(table, m, (q * m)[:, None], kk, per_cap=per_cap)[:, :, 0]
            H[1:][need] = sums[1:][need]
    n = np.arange(1, n_max + 1)
    inner = n * (H[n - 1] @ (w * fm))
    pmf = n_infty_pmf(ctx, n)
    return clamp_probability(float(np.dot(pmf, np.clip(inner, 0.0, 1.0))), "peak-to-sum ruin")


# --- near-maximum distress counts --------------------------------------------------------

@dataclass(frozen=True)
class NearMaxSpec:
    """Window ``a``: an excursion counts when its duration is within a of the longest."""

    a: float
    x: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameterError("window a must be positive")


def _pgf_derivative(ctx: ExcursionLawContext, u):
    """h'(u) for h(s) = E[s^N_inf]: ruin_x (1 - ruin_0) / (1 - u ruin_0)^2."""
    k = ctx.params.ruin_at_zero
    return ruin_prob(ctx) * (1.0 - k) / (1.0 - u * k) ** 2


def _near_max_ctx(ctx: ExcursionLawContext, spec: NearMaxSpec):
    c = ctx.at(spec.x) if spec.x != ctx.x else ctx
    _require_iid(c, "near-maximum counts")
    return c


def near_max_mean(ctx: ExcursionLawContext, spec: NearMaxSpec, order: int = 24) -> float:
    """E[number of excursions whose duration is within a of the longest] = int h'(F(y + a)) f(y) dy."""
    c = _near_max_ctx(ctx, spec)
    table = _table(c)
    y, w = gauss_legendre(d1_panels(table.y_max), order)
    return float(np.sum(w * _pgf_derivative(c, table.cdf(y + spec.a)) * table.pdf(y)))


def near_max_pgf(ctx: ExcursionLawContext, spec: NearMaxSpec, s, include_atom: bool = True,
                 order: int = 24):
    """E[s^E_a]; with ``include_atom=False`` only the part on {N_inf >= 1}.

    Given the longest duration y, each of the other excursions is near-maximal
    with probability (F(y) - F(y - a)) / F(y), independently.
    """
    c = _near_max_ctx(ctx, spec)
    s_arr = np.asarray(s, dtype=float)
    if np.any((s_arr < 0) | (s_arr >= 1)):
        raise InvalidParameterError("s must lie in [0, 1)")
    table = _table(c)
    b = d1_panels(table.y_max)
    b = np.unique(np.concatenate([b, [spec.a]]))
    y, w = gauss_legendre(b, order)
    F = table.cdf(y)
    Fa = table.cdf(y - spec.a)
    f = table.pdf(y)
    sv = s_arr.reshape(-1, 1)
    val = sv[:, 0] * np.sum(w * _pgf_derivative(c, Fa + sv * (F - Fa)) * f, axis=1)
    if include_atom:
        val = val + n_infty_pmf(c, 0)
    val = val.reshape(s_arr.shape)
    return float(val) if val.ndim == 0 else val
