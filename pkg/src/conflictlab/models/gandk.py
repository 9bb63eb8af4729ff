"""Multivariate g-and-k model with a Gaussian copula."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ..mixture import GaussianMixture
from .base import SimulatorModel
from .summaries import PAIRS, octile_summaries_columns, rank_correlations_batch

C_SKEW = 0.8

# uniform prior box for each margin: A, B, g, k
MARGIN_PRIOR = np.array([[-0.1, 0.1], [0.0, 0.05], [-1.0, 1.0], [-0.2, 0.5]])


@dataclass(frozen=True)
class GkParams:
    A: float
    B: float
    g: float
    k: float

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B}")
        if not self.k > -0.5:
            raise ValueError(f"k must exceed -0.5, got {self.k}")


def _quantile_from_normal(z, A, B, g, k):
    # (1 - e^{-gz}) / (1 + e^{-gz}) == tanh(gz / 2); saturates without overflow
    return A + B * (1.0 + C_SKEW * np.tanh(0.5 * g * z)) * (1.0 + z * z) ** k * z


def gk_quantile(p, params: GkParams):
    """g-and-k quantile function at probability ``p`` (scalar or array)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("p must lie strictly inside (0, 1)")
    out = _quantile_from_normal(ndtri(p), params.A, params.B, params.g, params.k)
    return float(out) if out.ndim == 0 else out


def spherical_to_correlation(w) -> np.ndarray:
    """3x3 correlation matrix from unconstrained angles ``w`` via its Cholesky factor."""
    w = np.asarray(w, dtype=float)
    return spherical_cholesky(w) @ spherical_cholesky(w).T


def spherical_cholesky(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    a1, a2, a3 = np.pi * _expit(w)
    return np.array(
        [
            [1.0, 0.0, 0.0],
            [np.cos(a1), np.sin(a1), 0.0],
            [np.cos(a2), np.sin(a2) * np.cos(a3), np.sin(a2) * np.sin(a3)],
        ]
    )


def _expit(w):
    return 1.0 / (1.0 + np.exp(-w))


def _spherical_cholesky_batch(w: np.ndarray) -> np.ndarray:
    a = np.pi * _expit(w)
    L = np.zeros((w.shape[0], 3, 3))
    L[:, 0, 0] = 1.0
    L[:, 1, 0] = np.cos(a[:, 0])
    L[:, 1, 1] = np.sin(a[:, 0])
    L[:, 2, 0] = np.cos(a[:, 1])
    L[:, 2, 1] = np.sin(a[:, 1]) * np.cos(a[:, 2])
    L[:, 2, 2] = np.sin(a[:, 1]) * np.sin(a[:, 2])
    return L


def gk_mv_simulate(margins, w, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` rows from the 3-variate g-and-k copula model.

    Args:
        margins: three :class:`GkParams` (or ``(A, B, g, k)`` tuples).
        w: unconstrained correlation parameters.
    """
    L = spherical_cholesky(w)
    z = rng.standard_normal((n, 3)) @ L.T
    out = np.empty_like(z)
    for j, m in enumerate(margins):
        m = m if isinstance(m, GkParams) else GkParams(*m)
        # Q(Phi(z)) evaluated without the round trip through Phi
        out[:, j] = _quantile_from_normal(z[:, j], m.A, m.B, m.g, m.k)
    return out


class GkModel(SimulatorModel):
    """Correlation parameters ``w ~ N(0, gamma^2 I_3)``; summaries are rank correlations.

    Marginal g-and-k parameters are nuisance draws from their uniform prior.
    Rank correlations are computed on the data scale: part of the prior box
    (negative k with nonzero g) gives quantile functions that fold over in a
    tail, so copula ranks and data ranks can differ.
    :meth:`simulate_export` produces the full 15 summaries.
    """

    name = "gk_mv"
    theta_dim = 3
    gamma_dim = 1
    summary_dim = 3
    theta_names = ("w_1", "w_2", "w_3")
    summary_names = ("rho_12", "rho_13", "rho_23")

    def __init__(self, n_obs: int = 1000, gamma_region=((0.5, 5.0),), gamma0=(0.5,), chunk: int = 500):
        self.n_obs = int(n_obs)
        self.gamma_region = np.asarray(gamma_region, dtype=float)
        self.gamma0 = np.asarray(gamma0, dtype=float)
        self.chunk = int(chunk)

    def prior(self, gamma):
        g = float(np.asarray(gamma, dtype=float).reshape(-1)[0])
        return GaussianMixture.single(np.zeros(3), g * g * np.eye(3))

    def sample_theta(self, gamma, rng):
        gamma = np.atleast_2d(gamma)
        return gamma[:, :1] * rng.standard_normal((gamma.shape[0], 3))

    def sample_margins(self, n: int, rng) -> np.ndarray:
        """``(n, 3, 4)`` draws of ``(A, B, g, k)`` per margin from the uniform prior box."""
        lo, hi = MARGIN_PRIOR[:, 0], MARGIN_PRIOR[:, 1]
        m = lo + (hi - lo) * rng.random((n, 3, 4))
        # B is drawn from the open interval
        m[:, :, 1] = np.where(m[:, :, 1] <= 0, hi[1] * 1e-12, m[:, :, 1])
        return m

    def simulate_data(self, theta, rng) -> np.ndarray:
        """``(m, n_obs, 3)`` datasets, one per row of ``theta``, with fresh margins."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        margins = self.sample_margins(theta.shape[0], rng)
        L = _spherical_cholesky_batch(theta)
        eps = rng.standard_normal((theta.shape[0], self.n_obs, 3))
        z = np.einsum("mab,mnb->mna", L, eps)
        A, B, g, k = (margins[:, None, :, i] for i in range(4))
        return _quantile_from_normal(z, A, B, g, k)

    def simulate_batch(self, theta, rng):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        out = np.empty((theta.shape[0], 3))
        for s in range(0, theta.shape[0], self.chunk):
            out[s : s + self.chunk] = rank_correlations_batch(self.simulate_data(theta[s : s + self.chunk], rng))
        ok = np.all(np.isfinite(out), axis=1)
        return out, ok

    def simulate_export(self, theta, rng):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        out = np.empty((theta.shape[0], 15))
        ok = np.ones(theta.shape[0], dtype=bool)
        for s in range(0, theta.shape[0], self.chunk):
            y = self.simulate_data(theta[s : s + self.chunk], rng)
            out[s : s + self.chunk, 12:] = rank_correlations_batch(y)
            for i in range(y.shape[0]):
                try:
                    out[s + i, :12] = octile_summaries_columns(y[i]).reshape(-1)
                except ValueError:
                    ok[s + i] = False
        names = tuple(
            f"{stat}_{j + 1}" for j in range(3) for stat in ("loc", "scale", "skew", "kurt")
        ) + tuple(f"rho_{i + 1}{j + 1}" for i, j in PAIRS)
        return out, ok, names

    def config(self):
        return {"name": self.name, "n_obs": self.n_obs}
