"""Bayes-security accounting for DP-SGD.

Closed-form bounds against membership and attribute inference, numerical
oracles to check them, and an instrumented DP-SGD trainer.
"""

from .bounds import (
    BoundWarning,
    DpSgdConfig,
    InvalidConfigError,
    SecurityBound,
    Threat,
    TprQuery,
    advantage_from_dp,
    ai_bound,
    analytic_approx_error,
    eps_lower_bound,
    mia_bound,
    property_bound,
    select_noise_multiplier,
    select_sampling_rate,
    tpr_bound,
)
from .special import erf, erf_inv, erfc

__version__ = "0.1.0"

__all__ = [
    "BoundWarning", "DpSgdConfig", "InvalidConfigError", "SecurityBound", "Threat",
    "TprQuery", "advantage_from_dp", "ai_bound", "analytic_approx_error",
    "eps_lower_bound", "erf", "erf_inv", "erfc", "mia_bound", "property_bound",
    "select_noise_multiplier", "select_sampling_rate", "tpr_bound", "__version__",
]
