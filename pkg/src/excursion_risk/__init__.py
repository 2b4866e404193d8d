"""Negative-excursion laws of the Cramer-Lundberg risk process with exponential claims.

Closed forms for the longest and shortest excursion below zero, their joint
law and range, Parisian-type ruin measures, near-maximum counts and
Poisson-observed passage, with an exact event-driven Monte Carlo oracle.
"""

from .errors import (ClampWarning, ExcursionRiskError, InvalidBracketError,
                     InvalidParameterError, MaxEventsExceeded, NonConvergenceError,
                     NumericalFailure, ResolutionTooCoarseError, TruncationWarning)
from .kernels import (D1Table, KernelCache, d1_cdf, d1_pdf, d1_tail, deficit_scale_expectation,
                      lambda0, upsilon)
from .laws import (ExcursionLawContext, joint_cdf_inf, longest_cdf_at_first_passage,
                   longest_cdf_inf, n_infty_pmf, parisian_ruin_prob, range_cdf, ruin_prob,
                   shortest_tail_inf)
from .model import (ClParams, TransitionLaw, first_passage_laplace, mean_per_unit, phi, psi,
                    scale_w, transition_law, z_theta)
from .montecarlo import (ExcursionRecord, McEstimate, PathStats, SimConfig, estimate,
                         simulate, simulate_path)
from .parisian import (GridSpec, JointGridDensity, NearMaxSpec, joint_density,
                       joint_sum_max_pdf, near_max_mean, near_max_pgf, occupation_cdf,
                       occupation_longest_joint_cdf, peak_to_sum_ruin_prob)
from .poisson_obs import (DeficitLaw, PoissonObsContext, excursion_count_pmf,
                          longest_cdf_at_poisson_passage, poisson_passage_before_ruin,
                          ruin_deficit_law_before_poisson_passage)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
