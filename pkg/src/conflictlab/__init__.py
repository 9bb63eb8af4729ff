"""Prior-data conflict checks for likelihood-free inference via Gaussian-mixture posteriors."""

from .conflict import CheckConfig, ConflictCheckResult, ConflictChecker, divergence_statistic, prepare_check, run_check
from .divergence import kl_gaussian, kl_mixture_variational, kl_monte_carlo
from .mixture import (
    FitConfig,
    GaussianMixture,
    condition,
    fit_em,
    log_density,
    marginal,
    sample,
    select_bic,
)
from .models import BoomBustModel, GkModel, LogisticModel
from .weakinfo import (
    LhsDesign,
    WeakInformativityConfig,
    WeakInformativityReport,
    degree_of_weak_informativity,
    fit_hierarchical,
    lhs_maximin,
    p_value_function,
    search,
)

__version__ = "0.1.0"

__all__ = [
    "BoomBustModel",
    "CheckConfig",
    "ConflictCheckResult",
    "ConflictChecker",
    "FitConfig",
    "GaussianMixture",
    "GkModel",
    "LhsDesign",
    "LogisticModel",
    "WeakInformativityConfig",
    "WeakInformativityReport",
    "condition",
    "degree_of_weak_informativity",
    "divergence_statistic",
    "fit_em",
    "fit_hierarchical",
    "kl_gaussian",
    "kl_mixture_variational",
    "kl_monte_carlo",
    "lhs_maximin",
    "log_density",
    "marginal",
    "p_value_function",
    "prepare_check",
    "run_check",
    "sample",
    "search",
    "select_bic",
]
