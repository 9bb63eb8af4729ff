"""Simulator interface shared by the example models."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..mixture import GaussianMixture


class SimulationError(RuntimeError):
    """A simulator produced a degenerate or invalid summary."""


class SimulatorModel(ABC):
    """Hierarchical simulator ``gamma -> theta -> summary``.

    Subclasses set the dimension attributes, ``gamma_region`` (``(k, 2)``
    lower/upper bounds of the expansion-parameter rectangle) and ``gamma0``
    (the base prior), and implement :meth:`sample_theta` and
    :meth:`simulate_batch`.
    """

    name: str = "model"
    theta_dim: int
    summary_dim: int
    gamma_dim: int
    gamma_region: np.ndarray
    gamma0: np.ndarray
    theta_names: tuple[str, ...] = ()
    summary_names: tuple[str, ...] = ()

    @property
    def prior_is_gaussian(self) -> bool:
        return self.prior(self.gamma0) is not None

    def prior(self, gamma) -> GaussianMixture | None:
        """Exact Gaussian(-mixture) form of ``p(theta | gamma)``, or None."""
        return None

    def sample_gamma(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from the uniform pseudo-prior on ``gamma_region``."""
        lo, hi = self.gamma_region[:, 0], self.gamma_region[:, 1]
        return lo + (hi - lo) * rng.random((n, self.gamma_dim))

    @abstractmethod
    def sample_theta(self, gamma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One theta draw per row of ``gamma`` (``(n, gamma_dim)`` -> ``(n, theta_dim)``)."""

    @abstractmethod
    def simulate_batch(self, theta: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Summaries for each row of ``theta``.

        Returns ``(summaries, ok)``; rows with ``ok == False`` failed and hold
        no meaningful values.
        """

    def simulate_summary(self, theta, rng: np.random.Generator) -> np.ndarray:
        z, ok = self.simulate_batch(np.atleast_2d(np.asarray(theta, dtype=float)), rng)
        if not ok[0]:
            raise SimulationError(f"{self.name}: degenerate simulation at theta={theta}")
        return z[0]

    def simulate_export(self, theta: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
        """Summaries written by the ``simulate`` command; same as the check by default."""
        z, ok = self.simulate_batch(theta, rng)
        return z, ok, self.summary_names

    def config(self) -> dict:
        return {"name": self.name}


def _as_gamma_rows(model: SimulatorModel, gamma, n: int) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    if g.ndim <= 1:
        g = np.broadcast_to(g.reshape(1, -1), (n, model.gamma_dim))
    if g.shape != (n, model.gamma_dim):
        raise ValueError(f"gamma has shape {g.shape}, expected ({n}, {model.gamma_dim})")
    return np.array(g)


def draw_predictive(
    model: SimulatorModel,
    gamma,
    n: int,
    rng: np.random.Generator,
    max_rounds: int = 200,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(theta, z)`` pairs from ``p(theta | gamma) p(z | theta)``.

    ``gamma`` is a single vector or one row per draw.  Failed simulations are
    redrawn (new theta, same gamma), so the result follows the predictive
    restricted to non-degenerate simulations.
    """
    g = _as_gamma_rows(model, gamma, n)
    theta = model.sample_theta(g, rng)
    z, ok = model.simulate_batch(theta, rng)
    z = np.array(z, dtype=float)
    for _ in range(max_rounds):
        bad = np.flatnonzero(~ok)
        if bad.size == 0:
            return theta, z
        theta[bad] = model.sample_theta(g[bad], rng)
        z_new, ok_new = model.simulate_batch(theta[bad], rng)
        z[bad] = z_new
        ok[bad] = ok_new
    raise SimulationError(f"{model.name}: {int((~ok).sum())} simulations still failing after {max_rounds} redraws")


def draw_hierarchical(
    model: SimulatorModel, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``(gamma, theta, z)`` with gamma from the uniform pseudo-prior."""
    gamma = model.sample_gamma(n, rng)
    theta, z = draw_predictive(model, gamma, n, rng)
    return gamma, theta, z
