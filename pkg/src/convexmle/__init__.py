"""Sampling distributions of maximum likelihood estimators under convex losses.

The refined CDF estimate, its normal and second-order competitors, the
exact weighted likelihood bootstrap law and the supporting numerics.
"""

from .asymptotic import (
    cdf_to_density,
    edgeworth_cdf,
    exact_exponential_cdf,
    normal_cdf_approx,
    pivot_study,
    refined_cdf,
)
from .curves import CdfCurve, DensityCurve, make_grid, parse_grid
from .exceptions import (
    AccuracyError,
    ConvexMLEError,
    DegenerateScoreError,
    DomainError,
    InvalidModelError,
    MonotonicityError,
    NoRootError,
    StabilityError,
)
from .mle import Dataset, empirical_mle_distribution, solve_mle, solve_weighted_mle
from .models import available_models, get_model
from .moments import MomentMethod, fisher_info, moment_partials, score_moments
from .numerics import RngStream
from .wlb import (
    jeffreys_posterior_exponential,
    probability_matching_sample,
    wlb_exact_cdf,
    wlb_fisher_approx,
    wlb_mc_oracle,
    wlb_normal_approx,
    wlb_sample,
)

__version__ = "0.1.0"
