"""Simple recruitment, boom and bust population model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import SimulationError, SimulatorModel
from .summaries import moment_summaries_masked

SERIES_LENGTH = 250
BURN_IN = 50

# uniform nuisance prior: kappa, alpha, beta
NUISANCE_PRIOR = np.array([[10.0, 80.0], [0.0, 1.0], [0.0, 1.0]])

SUMMARY_NAMES = tuple(
    f"{stat}_{src}" for src in ("x", "dx", "rx") for stat in ("mean", "var", "skew", "kurt")
)


@dataclass(frozen=True)
class BoomBustParams:
    r: float
    kappa: float
    alpha: float
    beta: float

    def __post_init__(self):
        if self.r < 0 or self.beta < 0 or not 0 <= self.alpha <= 1:
            raise ValueError(f"invalid boom-bust parameters {self}")


def simulate_series(params: np.ndarray, rng: np.random.Generator, length: int = SERIES_LENGTH, burn_in: int = BURN_IN) -> np.ndarray:
    """Simulate population series for each row ``(r, kappa, alpha, beta)`` of ``params``.

    Returns an ``(m, length)`` integer-valued float array.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    r, kappa, alpha, beta = params.T
    N = np.floor(kappa)
    out = np.empty((params.shape[0], length))
    for t in range(burn_in + length):
        grow = rng.poisson(N * (1.0 + r))
        crash = rng.binomial(N.astype(np.int64), alpha)
        N = np.where(N <= kappa, grow, crash) + rng.poisson(beta)
        N = N.astype(float)
        if t >= burn_in:
            out[:, t - burn_in] = N
    return out


def series_summaries(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Twelve moment summaries of each row series and a success mask.

    Ratios with a zero denominator are dropped before taking moments.
    """
    x = np.atleast_2d(x)
    full = np.ones_like(x, dtype=bool)
    s_x, ok_x = moment_summaries_masked(x, full)
    d = np.diff(x, axis=1)
    s_d, ok_d = moment_summaries_masked(d, full[:, 1:])
    denom = x[:, :-1]
    valid = denom > 0
    ratio = np.where(valid, x[:, 1:] / np.where(valid, denom, 1.0), 0.0)
    s_r, ok_r = moment_summaries_masked(ratio, valid)
    return np.hstack([s_x, s_d, s_r]), ok_x & ok_d & ok_r


def boombust_simulate(params: BoomBustParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One length-250 series and its 12 summaries.

    Raises:
        SimulationError: the series is degenerate (e.g. absorbed at zero).
    """
    row = np.array([[params.r, params.kappa, params.alpha, params.beta]])
    x = simulate_series(row, rng)
    z, ok = series_summaries(x)
    if not ok[0]:
        raise SimulationError(f"degenerate boom-bust series for {params}")
    return x[0], z[0]


class BoomBustModel(SimulatorModel):
    """Growth rate ``r ~ Beta(gamma, gamma)``; kappa, alpha, beta are uniform nuisances.

    ``theta`` is the growth rate alone; the nuisance parameters are drawn
    inside :meth:`simulate_batch`.
    """

    name = "boombust"
    theta_dim = 1
    gamma_dim = 1
    summary_dim = 12
    theta_names = ("r",)
    summary_names = SUMMARY_NAMES

    def __init__(self, gamma_region=((0.2, 9.0),), gamma0=(5.0,)):
        self.gamma_region = np.asarray(gamma_region, dtype=float)
        self.gamma0 = np.asarray(gamma0, dtype=float)

    def sample_theta(self, gamma, rng):
        g = np.atleast_2d(gamma)[:, :1]
        return rng.beta(g, g)

    def sample_nuisance(self, n: int, rng) -> np.ndarray:
        lo, hi = NUISANCE_PRIOR[:, 0], NUISANCE_PRIOR[:, 1]
        return lo + (hi - lo) * rng.random((n, 3))

    def simulate_batch(self, theta, rng):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        params = np.hstack([theta[:, :1], self.sample_nuisance(theta.shape[0], rng)])
        return series_summaries(simulate_series(params, rng))
