"""Example simulators and their summary statistics."""

from .base import SimulationError, SimulatorModel, draw_hierarchical, draw_predictive
from .boombust import BoomBustModel, BoomBustParams, boombust_simulate
from .gandk import GkModel, GkParams, gk_mv_simulate, gk_quantile, spherical_to_correlation
from .logistic import LogisticModel, logistic_simulate
from .summaries import (
    DegenerateSummaryError,
    moment_summaries,
    octile_summaries,
    rank_correlations,
)

MODELS = {
    "logistic": LogisticModel,
    "gk_mv": GkModel,
    "boombust": BoomBustModel,
}


def get_model(name: str, **options) -> SimulatorModel:
    try:
        cls = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return cls(**options)


__all__ = [
    "BoomBustModel",
    "BoomBustParams",
    "DegenerateSummaryError",
    "GkModel",
    "GkParams",
    "LogisticModel",
    "MODELS",
    "SimulationError",
    "SimulatorModel",
    "boombust_simulate",
    "draw_hierarchical",
    "draw_predictive",
    "get_model",
    "gk_mv_simulate",
    "gk_quantile",
    "logistic_simulate",
    "moment_summaries",
    "octile_summaries",
    "rank_correlations",
    "spherical_to_correlation",
]
