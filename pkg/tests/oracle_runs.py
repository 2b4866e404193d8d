"""Monte Carlo runs shared by the test modules, built once per process."""

from functools import cache

from excursion_risk import ClParams, SimConfig, simulate

BASE = ClParams(5.5, 2.0, 0.5)
# larger claims at the same safety loading c alpha / eta
HEAVY = ClParams(11.0, 2.0, 0.25)
# near-maximum panels: one point from each figure sweep
PANELS = (ClParams(8.5, 1.0, 0.25), ClParams(9.5, 2.0, 1.0 / 3.0), BASE)
WINDOWS = (0.25, 0.5, 1.0)
N_PATHS = 1_000_000


@cache
def base_paths(x: float = 1.0, seed: int = 42, passage_level: float | None = 3.0):
    """Continuous-observation paths for BASE from x, with tau_b recorded at ``passage_level``."""
    return simulate(SimConfig(BASE, x, seed, N_PATHS, passage_level=passage_level,
                              near_max_windows=WINDOWS))


@cache
def panel_paths(index: int, x: float = 1.0):
    return simulate(SimConfig(PANELS[index], x, 100 + index, N_PATHS, near_max_windows=WINDOWS))


@cache
def poisson_paths(x: float = 1.0, b: float = 3.0, rate: float = 1.0):
    return simulate(SimConfig(BASE, x, 7, N_PATHS, passage_level=b, poisson_obs_rate=rate))
