"""Exact event-driven Monte Carlo for the Cramér-Lundberg surplus process.

Paths are piecewise linear: premiums accrue at rate c between exponential
claim epochs, so downcrossings of 0 happen only at claims and upcrossings
at the deterministic time -X/c. No time grid is involved.

Each path draws from its own counter-based stream keyed by (seed, path_index)
(SplitMix64 output function over a Weyl counter), so a path's record does
not depend on how the index range is split across workers.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numba as nb
import numpy as np

from .errors import InvalidParameterError, MaxEventsExceeded
from .model import ClParams, scale_w

THREADS_ENV = "EXCURSION_RISK_THREADS"

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0x632BE59BD9B4E019)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0

STATUS_OK = 0
STATUS_MAX_EVENTS = 1
STATUS_BUFFER = 2


@nb.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit
def stream_key(seed, index):
    return _mix(np.uint64(seed) ^ _mix(np.uint64(index) + _SALT))


@nb.njit(inline="always")
def _uniform(key, counter):
    # (0, 1]
    z = _mix(key + (np.uint64(counter) + np.uint64(1)) * _GAMMA)
    return (float(z >> _S11) + 1.0) * _TWO53


@nb.njit
def _run_path(key, c, eta, alpha, x, barrier, b, obs_rate, max_events, windows, durations,
              deficits):
    """Simulate one path; returns a tuple of summary statistics.

    Terminates at the barrier (continuous mode, ``obs_rate == 0``) or at the
    first observation epoch with X > b (Poisson mode). ``durations`` receives
    the excursion lengths in order and ``deficits`` the undershoots at ruin.
    """
    ctr = 0
    t = 0.0
    X = x
    t_claim = -math.log(_uniform(key, ctr)) / eta
    ctr += 1
    t_obs = np.inf
    if obs_rate > 0.0:
        t_obs = -math.log(_uniform(key, ctr)) / obs_rate
        ctr += 1
    n_exc = 0
    in_exc = X < 0.0
    start = 0.0
    first_deficit = np.nan
    first_ruin_time = np.inf
    if in_exc:
        first_deficit = -X
        first_ruin_time = 0.0
        if durations.shape[0] > 0:
            deficits[0] = -X
    tau_b = np.inf
    longest_before_b = np.nan
    if X > b:
        tau_b = 0.0
        longest_before_b = 0.0
    poisson_first = False
    status = STATUS_OK
    events = 0
    cap = durations.shape[0]
    while True:
        events += 1
        if events > max_events:
            status = STATUS_MAX_EVENTS
            break
        # deterministic drift events: 0 = upcross of 0, 1 = barrier, 2 = level b
        if in_exc:
            t_det = t + (-X) / c
            kind = 0
        else:
            t_det = np.inf
            kind = 1
            if obs_rate == 0.0:
                t_det = t + (barrier - X) / c
            if tau_b == np.inf and b < barrier:
                tb = t + (b - X) / c
                if tb <= t_det:
                    t_det = tb
                    kind = 2
        if t_claim <= t_det and t_claim <= t_obs:
            X += c * (t_claim - t)
            t = t_claim
            X -= -math.log(_uniform(key, ctr)) / alpha
            ctr += 1
            t_claim = t - math.log(_uniform(key, ctr)) / eta
            ctr += 1
            if not in_exc and X < 0.0:
                in_exc = True
                start = t
                if n_exc < cap:
                    deficits[n_exc] = -X
                if n_exc == 0:
                    first_deficit = -X
                    first_ruin_time = t
        elif t_obs < t_det:
            X += c * (t_obs - t)
            t = t_obs
            t_obs = t - math.log(_uniform(key, ctr)) / obs_rate
            ctr += 1
            if X > b:
                poisson_first = n_exc == 0 and not in_exc
                break
        else:
            t = t_det
            if kind == 0:
                X = 0.0
                if n_exc < cap:
                    durations[n_exc] = t - start
                else:
                    status = STATUS_BUFFER
                n_exc += 1
                in_exc = False
            elif kind == 2:
                X = b
                tau_b = t
                # every excursion so far is complete
                longest_before_b = 0.0
                for j in range(min(n_exc, cap)):
                    longest_before_b = max(longest_before_b, durations[j])
            else:
                X = barrier
                break
    longest = 0.0
    shortest = 0.0
    occupation = 0.0
    m = min(n_exc, cap)
    if m > 0:
        longest = durations[0]
        shortest = durations[0]
        for j in range(m):
            d = durations[j]
            occupation += d
            if d > longest:
                longest = d
            if d < shortest:
                shortest = d
    counts = np.zeros(windows.shape[0], dtype=np.int64)
    for w in range(windows.shape[0]):
        for j in range(m):
            if durations[j] > longest - windows[w]:
                counts[w] += 1
    first = durations[0] if m > 0 else np.nan
    return (n_exc, longest, shortest, occupation, first, first_deficit, first_ruin_time, tau_b,
            poisson_first, t, status, counts, longest_before_b)


@nb.njit(nogil=True, cache=True)
def _run_batch(seed, start, stop, c, eta, alpha, x, barrier, b, obs_rate, max_events, windows,
               cap, n_exc, longest, shortest, occupation, first, deficit, ruin_time, tau_b,
               poisson_first, end_time, status, counts, longest_before_b):
    buf = np.empty(cap)
    dbuf = np.empty(cap)
    for i in range(start, stop):
        k = i - start
        out = _run_path(stream_key(seed, i), c, eta, alpha, x, barrier, b, obs_rate,
                        max_events, windows, buf, dbuf)
        n_exc[k] = out[0]
        longest[k] = out[1]
        shortest[k] = out[2]
        occupation[k] = out[3]
        first[k] = out[4]
        deficit[k] = out[5]
        ruin_time[k] = out[6]
        tau_b[k] = out[7]
        poisson_first[k] = out[8]
        end_time[k] = out[9]
        status[k] = out[10]
        counts[k, :] = out[11]
        longest_before_b[k] = out[12]


@nb.njit(cache=True)
def _run_single(seed, index, c, eta, alpha, x, barrier, b, obs_rate, max_events, windows, cap):
    buf = np.empty(cap)
    dbuf = np.empty(cap)
    out = _run_path(stream_key(seed, index), c, eta, alpha, x, barrier, b, obs_rate, max_events,
                    windows, buf, dbuf)
    m = min(out[0], cap)
    return out, buf[:m].copy(), dbuf[:m].copy()


@nb.njit(nogil=True, cache=True)
def _excursion_batch(seed, start, stop, c, eta, alpha, out):
    """Durations of excursions started from a deficit ~ Exp(alpha)."""
    for i in range(start, stop):
        key = stream_key(seed, i)
        ctr = 0
        X = math.log(_uniform(key, ctr)) / alpha
        ctr += 1
        t = 0.0
        while True:
            dt = -math.log(_uniform(key, ctr)) / eta
            ctr += 1
            if c * dt >= -X:
                t += -X / c
                break
            t += dt
            X += c * dt + math.log(_uniform(key, ctr)) / alpha
            ctr += 1
        out[i - start] = t


# --- configuration and records --------------------------------------------------------

def lundberg_barrier(p: ClParams, bias_tolerance: float) -> float:
    """Smallest level B with classical ruin probability from B at most ``bias_tolerance``."""
    k = p.ruin_at_zero
    if bias_tolerance >= k:
        return 0.0
    return math.log(bias_tolerance / k) / p.decay


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings. ``barrier=None`` derives B from ``bias_tolerance``."""

    params: ClParams
    x: float = 0.0
    seed: int = 0
    n_paths: int = 100_000
    barrier: float | None = None
    bias_tolerance: float = 1e-6
    passage_level: float | None = None
    poisson_obs_rate: float | None = None
    near_max_windows: tuple = ()
    max_events: int = 10_000_000
    max_excursions: int = 4096

    def __post_init__(self):
        if self.n_paths < 1:
            raise InvalidParameterError("n_paths must be >= 1")
        if not (0 <= self.seed < 2 ** 64):
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if self.poisson_obs_rate is not None:
            if not self.poisson_obs_rate > 0:
                raise InvalidParameterError("poisson_obs_rate must be positive")
            if self.passage_level is None or self.passage_level < self.x:
                raise InvalidParameterError("Poisson observation needs passage_level >= x")
        if any(not a > 0 for a in self.near_max_windows):
            raise InvalidParameterError("near-max windows must be positive")
        if self.barrier is not None and not self.barrier > max(self.x, 0.0):
            raise InvalidParameterError("barrier must exceed max(x, 0)")

    @property
    def effective_barrier(self) -> float:
        if self.barrier is not None:
            return float(self.barrier)
        floor = max(self.x, 0.0, self.passage_level or 0.0) + 1.0
        return max(lundberg_barrier(self.params, self.bias_tolerance), floor)

    @property
    def bias_bound(self) -> float:
        """Classical ruin probability from the barrier: the truncation bias bound."""
        if self.poisson_obs_rate is not None:
            return 0.0
        p = self.params
        return p.ruin_at_zero * math.exp(p.decay * self.effective_barrier)

    def _args(self):
        p = self.params
        b = np.inf if self.passage_level is None else float(self.passage_level)
        obs = 0.0 if self.poisson_obs_rate is None else float(self.poisson_obs_rate)
        barrier = np.inf if obs > 0 else self.effective_barrier
        return (p.c, p.eta, p.alpha, float(self.x), barrier, b, obs, int(self.max_events),
                np.asarray(self.near_max_windows, dtype=float))


@dataclass
class ExcursionRecord:
    """Excursion statistics of one simulated path."""

    path_index: int
    durations: list
    occupation: float
    longest: float
    shortest: float
    range: float
    near_max_counts: dict
    ruin_occurred: bool
    deficits: list
    end_time: float
    tau_b: float
    poisson_passage_first: bool | None = None

    @property
    def n_excursions(self) -> int:
        return len(self.durations)


def simulate_path(cfg: SimConfig, path_index: int) -> ExcursionRecord:
    if not 0 <= path_index < cfg.n_paths:
        raise InvalidParameterError("path_index must be in [0, n_paths)")
    out, durations, deficits = _run_single(np.uint64(cfg.seed), path_index, *cfg._args(),
                                           cfg.max_excursions)
    (n_exc, longest, shortest, occupation, _, _, _, tau_b, pfirst, end_time, status,
     counts, _) = out
    if status == STATUS_MAX_EVENTS:
        raise MaxEventsExceeded(f"path {path_index} exceeded {cfg.max_events} events")
    return ExcursionRecord(
        path_index=path_index,
        durations=[float(d) for d in durations],
        occupation=float(occupation),
        longest=float(longest),
        shortest=float(shortest),
        range=float(longest - shortest),
        near_max_counts={a: int(n) for a, n in zip(cfg.near_max_windows, counts)},
        ruin_occurred=n_exc > 0,
        deficits=[float(v) for v in deficits],
        end_time=float(end_time),
        tau_b=float(tau_b),
        poisson_passage_first=bool(pfirst) if cfg.poisson_obs_rate is not None else None,
    )


def worker_count(requested: int | None = None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass
class PathStats:
    """Per-path summaries of a simulation, indexed by path_index."""

    config: SimConfig
    n_excursions: np.ndarray
    longest: np.ndarray
    shortest: np.ndarray
    occupation: np.ndarray
    first_duration: np.ndarray
    first_deficit: np.ndarray
    first_ruin_time: np.ndarray
    tau_b: np.ndarray
    poisson_first: np.ndarray
    end_time: np.ndarray
    status: np.ndarray
    near_max_counts: np.ndarray
    longest_before_b: np.ndarray

    @property
    def ruined(self) -> np.ndarray:
        return self.n_excursions > 0

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(self.status != STATUS_OK))

    def valid(self) -> np.ndarray:
        return self.status == STATUS_OK

    def estimate(self, name: str, *args) -> "McEstimate":
        try:
            fn = FUNCTIONALS[name]
        except KeyError:
            raise InvalidParameterError(f"unknown functional {name!r}") from None
        return _summarise(fn(self, *args), self)

    def dump_csv(self, target) -> None:
        """One row per path: index, excursion count, longest, shortest, occupation, ruin flag.

        ``target`` is a path or an open text stream.
        """
        if hasattr(target, "write"):
            self._write_rows(target)
        else:
            with open(target, "w", newline="") as fh:
                self._write_rows(fh)

    def _write_rows(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_index", "n_excursions", "longest", "shortest", "occupation",
                    "ruin_flag"])
        for i in range(self.n_excursions.size):
            w.writerow([i, int(self.n_excursions[i]), repr(float(self.longest[i])),
                        repr(float(self.shortest[i])), repr(float(self.occupation[i])),
                        int(self.n_excursions[i] > 0)])


def simulate(cfg: SimConfig, workers: int | None = None, chunk: int = 65536) -> PathStats:
    """Simulate paths 0..n_paths-1, splitting the index range over threads."""
    n = cfg.n_paths
    nw = len(cfg.near_max_windows)
    arrays = dict(
        n_excursions=np.zeros(n, np.int64), longest=np.zeros(n), shortest=np.zeros(n),
        occupation=np.zeros(n), first_duration=np.zeros(n), first_deficit=np.zeros(n),
        first_ruin_time=np.zeros(n), tau_b=np.zeros(n), poisson_first=np.zeros(n, np.bool_),
        end_time=np.zeros(n), status=np.zeros(n, np.int64),
        near_max_counts=np.zeros((n, nw), np.int64), longest_before_b=np.zeros(n),
    )
    args = cfg._args()
    seed = np.uint64(cfg.seed)

    def run(lo):
        hi = min(lo + chunk, n)
        sl = slice(lo, hi)
        _run_batch(seed, lo, hi, *args, cfg.max_excursions,
                   *(arrays[k][sl] for k in ("n_excursions", "longest", "shortest", "occupation",
                                             "first_duration", "first_deficit", "first_ruin_time",
                                             "tau_b", "poisson_first", "end_time", "status",
                                             "near_max_counts", "longest_before_b")))

    starts = range(0, n, chunk)
    nw_threads = worker_count(workers)
    if nw_threads == 1:
        for lo in starts:
            run(lo)
    else:
        with ThreadPoolExecutor(nw_threads) as pool:
            list(pool.map(run, starts))
    return PathStats(cfg, **arrays)


def sample_excursions(p: ClParams, n: int, seed: int = 0) -> np.ndarray:
    """Durations of n independent excursions started from a deficit ~ Exp(alpha)."""
    out = np.empty(n)
    _excursion_batch(np.uint64(seed), 0, n, p.c, p.eta, p.alpha, out)
    return out


# --- estimators --------------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n: int
    seed: int
    bias_bound: float = 0.0

    def agrees(self, target: float, n_se: float = 3.0, floor: float = 1e-12) -> bool:
        """|value - target| within n_se standard errors plus the truncation bias bound."""
        return abs(self.value - target) <= n_se * self.std_error + self.bias_bound + floor


def _summarise(samples, stats: PathStats) -> McEstimate:
    samples = np.asarray(samples, dtype=float)
    ok = np.isfinite(samples)
    samples = samples[ok]
    n = samples.size
    if n == 0:
        raise InvalidParameterError("functional produced no finite samples")
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean, se, n, stats.config.seed, stats.config.bias_bound)


def _valid(stats, values):
    values = np.asarray(values, dtype=float)
    return np.where(stats.valid(), values, np.nan)


def _ruin(s):
    return _valid(s, s.ruined)


def _longest_cdf(s, r):
    return _valid(s, s.longest < r)


def _shortest_tail(s, r):
    return _valid(s, s.ruined & (s.shortest > r))


def _joint(s, u, v):
    return _valid(s, s.ruined & (s.shortest <= u) & (s.longest <= v))


def _range_cdf(s, r):
    return _valid(s, s.ruined & (s.longest - s.shortest < r))


def _occupation_joint(s, l, r):
    return _valid(s, (s.occupation <= l) & (s.longest <= r))


def _occupation_cdf(s, l):
    return _valid(s, s.occupation <= l)


def _peak_to_sum(s, ratio, r):
    return _valid(s, s.ruined & (s.longest > ratio * s.occupation) & (s.longest > r))


def _near_max_mean(s, a):
    windows = list(s.config.near_max_windows)
    if a not in windows:
        raise InvalidParameterError(f"window {a} was not simulated; add it to near_max_windows")
    return _valid(s, s.near_max_counts[:, windows.index(a)])


def _n_pmf(s, n):
    return _valid(s, s.n_excursions == n)


def _first_passage_below(s, r):
    # x < 0 start: first upcrossing of 0 before r
    return _valid(s, s.first_duration < r)


def _d1_cdf(s, y):
    vals = np.where(s.ruined, s.first_duration < y, np.nan)
    return _valid(s, vals)


def _longest_at_passage(s, r):
    # paths stopped at the barrier before tau_b^+ carry NaN and are dropped
    return _valid(s, np.where(np.isnan(s.longest_before_b), np.nan, s.longest_before_b < r))


def _laplace_tau_b(s, q):
    return _valid(s, np.exp(-q * s.tau_b))


def _passage_before_ruin(s):
    return _valid(s, s.tau_b < s.first_ruin_time)


def _id1(s, z):
    p = s.config.params
    vals = np.where(s.ruined, scale_w(p, -np.nan_to_num(s.first_deficit) + z), 0.0)
    return _valid(s, vals)


def _poisson_passage(s):
    return _valid(s, s.poisson_first)


def _poisson_ruin_first(s):
    return _valid(s, s.ruined)


def _poisson_longest(s, r):
    return _valid(s, s.longest < r)


FUNCTIONALS: dict[str, Callable] = {
    "ruin": _ruin,
    "longest_cdf": _longest_cdf,
    "shortest_tail": _shortest_tail,
    "joint": _joint,
    "range_cdf": _range_cdf,
    "occupation_joint": _occupation_joint,
    "occupation_cdf": _occupation_cdf,
    "peak_to_sum": _peak_to_sum,
    "near_max_mean": _near_max_mean,
    "n_pmf": _n_pmf,
    "first_passage_below": _first_passage_below,
    "d1_cdf": _d1_cdf,
    "laplace_tau_b": _laplace_tau_b,
    "longest_at_passage": _longest_at_passage,
    "passage_before_ruin": _passage_before_ruin,
    "id1": _id1,
    "poisson_passage": _poisson_passage,
    "poisson_ruin_first": _poisson_ruin_first,
    "poisson_longest": _poisson_longest,
}


def estimate(cfg: SimConfig, functional: str, *args, workers: int | None = None) -> McEstimate:
    """Simulate under ``cfg`` and average the named path functional."""
    return simulate(cfg, workers).estimate(functional, *args)
