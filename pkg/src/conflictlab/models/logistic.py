"""Bioassay logistic regression with 20 animals per dose."""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..mixture import GaussianMixture
from .base import SimulatorModel

# log dose, centred and scaled; configurable
DEFAULT_DOSES = (-0.86, -0.30, -0.05, 0.73)


def logistic_simulate(theta, rng: np.random.Generator, doses=DEFAULT_DOSES, n_animals: int = 20) -> np.ndarray:
    """Death counts at each dose for ``theta = (intercept, slope)``."""
    theta = np.asarray(theta, dtype=float)
    p = expit(theta[0] + theta[1] * np.asarray(doses))
    return rng.binomial(n_animals, p).astype(float)


class LogisticModel(SimulatorModel):
    """``theta_j ~ N(0, gamma_j^2)``, counts ``y_i ~ Binomial(20, expit(theta_1 + theta_2 d_i))``."""

    name = "logistic"
    theta_dim = 2
    gamma_dim = 2
    theta_names = ("theta_1", "theta_2")

    def __init__(
        self,
        doses=DEFAULT_DOSES,
        n_animals: int = 20,
        gamma_region=((0.5, 10.0), (0.5, 20.0)),
        gamma0=(1.0, 1.0),
    ):
        self.doses = np.asarray(doses, dtype=float)
        self.n_animals = int(n_animals)
        self.summary_dim = self.doses.size
        self.summary_names = tuple(f"y_{i + 1}" for i in range(self.summary_dim))
        self.gamma_region = np.asarray(gamma_region, dtype=float)
        self.gamma0 = np.asarray(gamma0, dtype=float)

    def prior(self, gamma) -> GaussianMixture:
        g = np.asarray(gamma, dtype=float).reshape(-1)
        return GaussianMixture.single(np.zeros(2), np.diag(g**2))

    def sample_theta(self, gamma, rng):
        gamma = np.atleast_2d(gamma)
        return gamma * rng.standard_normal(gamma.shape)

    def simulate_batch(self, theta, rng):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        p = expit(theta[:, :1] + theta[:, 1:2] * self.doses[None, :])
        y = rng.binomial(self.n_animals, p).astype(float)
        return y, np.ones(theta.shape[0], dtype=bool)

    def config(self):
        return {"name": self.name, "doses": self.doses.tolist(), "n_animals": self.n_animals}
