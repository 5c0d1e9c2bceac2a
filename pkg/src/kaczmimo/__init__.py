"""Randomized Kaczmarz detection and precoding for massive MIMO.

Submodules
----------
numerics     dense complex linear algebra (Cholesky, Jacobi eigensolver)
channel      correlated Rayleigh channels, estimates, seeded streams
kaczmarz     row sampling and the Kaczmarz solvers
gains        convergence gains and bounds
baselines    exact transceivers and reference Kaczmarz variants
rates        ergodic rate bounds and the Monte-Carlo driver
estimators   scikit-learn style wrappers
experiments  config-driven experiments behind the CLI
"""

__version__ = "0.1.0"

from .baselines import detect_direct, herman_ka, mrc, naive_ka_od, precode_direct
from .channel import ChannelParams, ChannelRealization, RngStream, realize
from .estimators import KaczmarzDetector, KaczmarzPrecoder
from .exceptions import KaczmimoError
from .gains import kappa_closed_form_ul, kappa_suboptimal, optimal_row_distribution
from .kaczmarz import (
    FactorizedLinearMap,
    KaState,
    RowDistribution,
    apply_detector,
    apply_precoder,
    compute_linear_map,
    dl_precode,
    replay_linear_map,
    ul_detect,
)
from .rates import BudgetPolicy, budget_to_iterations, gap_to_capacity, mc_ergodic_rates, mc_rate_grid

__all__ = [
    "__version__",
    "BudgetPolicy",
    "ChannelParams",
    "ChannelRealization",
    "FactorizedLinearMap",
    "KaState",
    "KaczmarzDetector",
    "KaczmarzPrecoder",
    "KaczmimoError",
    "RngStream",
    "RowDistribution",
    "apply_detector",
    "apply_precoder",
    "budget_to_iterations",
    "compute_linear_map",
    "detect_direct",
    "dl_precode",
    "gap_to_capacity",
    "herman_ka",
    "kappa_closed_form_ul",
    "kappa_suboptimal",
    "mc_ergodic_rates",
    "mc_rate_grid",
    "mrc",
    "naive_ka_od",
    "optimal_row_distribution",
    "precode_direct",
    "realize",
    "replay_linear_map",
    "ul_detect",
]
