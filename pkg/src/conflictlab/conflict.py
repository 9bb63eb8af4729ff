"""Prior-data conflict check from a mixture approximation of the joint (theta, z).

The joint density of parameters and summaries is approximated once by a
Gaussian mixture; every posterior is then a conditional of that mixture and
the prior-to-posterior divergence is the closed-form variational mixture KL.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .divergence import kl_mixture_variational, variational_kl_batch
from .mixture import BicSelection, Conditioner, FitConfig, GaussianMixture, select_bic
from .models.base import SimulatorModel, draw_predictive

logger = logging.getLogger(__name__)

BATCH = 2048


class ConflictError(RuntimeError):
    """Numerical failure while computing conflict statistics."""


@dataclass
class CheckConfig:
    n_train: int = 100_000
    n_replicates: int = 1000
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.n_train < 1 or self.n_replicates < 1:
            raise ValueError("n_train and n_replicates must be positive")
        if self.n_replicates < 100:
            warnings.warn("fewer than 100 replicates: p-value resolution is coarser than 0.01", stacklevel=2)
        if self.n_train < 10 * self.n_replicates:
            warnings.warn("n_train is below 10 x replicates", stacklevel=2)


@dataclass
class ConflictCheckResult:
    g_obs: float
    g_replicates: np.ndarray
    p_value: float
    n_components: int
    bic: float
    mahalanobis: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "g_obs": self.g_obs,
            "p_value": self.p_value,
            "n_replicates": int(self.g_replicates.size),
            "g_replicates": self.g_replicates.tolist(),
            "joint_fit": {"n_components": self.n_components, "bic": _or_none(self.bic)},
            "mahalanobis_to_nearest_component": _or_none(self.mahalanobis),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_replicates_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["g_tilde"])
            for g in self.g_replicates:
                w.writerow([repr(float(g))])


def _or_none(v):
    return float(v) if v is not None and np.isfinite(v) else None


def divergence_statistic(posterior: GaussianMixture, prior: GaussianMixture) -> float:
    """Approximate prior-to-posterior KL divergence, KL~(posterior || prior)."""
    return kl_mixture_variational(posterior, prior)


def tail_probability(sorted_replicates: np.ndarray, g_obs) -> np.ndarray | float:
    """Proportion of replicate divergences >= ``g_obs`` (replicates sorted ascending)."""
    R = sorted_replicates.size
    below = np.searchsorted(sorted_replicates, g_obs, side="left")
    out = (R - below) / R
    return float(out) if np.ndim(out) == 0 else out


class PosteriorDivergence:
    """Maps summaries to G~(z) for one conditioner/prior pair.

    Args:
        conditioner: conditioning of the fitted joint on the summary (and, for
            the hierarchical fit, gamma) coordinates; its free coordinates are theta.
        prior: mixture approximation of the analysis prior over theta.
    """

    def __init__(self, conditioner: Conditioner, prior: GaussianMixture):
        if prior.dimension != conditioner.free.size:
            raise ConflictError(
                f"prior has dimension {prior.dimension}, posterior {conditioner.free.size}"
            )
        self.conditioner = conditioner
        self.prior = prior

    def __call__(self, values) -> np.ndarray:
        v = np.atleast_2d(np.asarray(values, dtype=float))
        bad = np.flatnonzero(~np.all(np.isfinite(v), axis=1))
        if bad.size:
            raise ConflictError(f"non-finite summary in row {int(bad[0])} (of {v.shape[0]})")
        out = np.empty(v.shape[0])
        for s in range(0, v.shape[0], BATCH):
            w, mu = self.conditioner.condition_many(v[s : s + BATCH])
            out[s : s + BATCH] = variational_kl_batch(w, mu, self.conditioner.cond_covariances, self.prior)
        bad = np.flatnonzero(~np.isfinite(out))
        if bad.size:
            raise ConflictError(f"non-finite divergence for row {int(bad[0])} (of {v.shape[0]})")
        return out


class ConflictChecker:
    """A fitted joint approximation plus a sorted replicate set.

    The replicate divergences depend only on the model, configuration and
    seed, so any number of observed summaries can be checked against one
    checker; each p-value is a binary search.
    """

    def __init__(
        self,
        joint: BicSelection,
        prior: GaussianMixture,
        theta_dim: int,
        g_replicates: np.ndarray | None = None,
    ):
        self.joint = joint
        self.prior = prior
        self.theta_dim = theta_dim
        d = joint.mixture.dimension
        self.summary_dim = d - theta_dim
        self.conditioner = Conditioner(joint.mixture, np.arange(theta_dim, d))
        self.statistic = PosteriorDivergence(self.conditioner, prior)
        self.g_replicates = None
        self.sorted_replicates = None
        if g_replicates is not None:
            self.set_replicates(g_replicates)

    def set_replicates(self, g_replicates) -> None:
        self.g_replicates = np.asarray(g_replicates, dtype=float)
        self.sorted_replicates = np.sort(self.g_replicates)

    def replicates_from_summaries(self, z_replicates) -> np.ndarray:
        try:
            g = self.statistic(z_replicates)
        except ConflictError as exc:
            raise ConflictError(f"replicate failed: {exc}") from exc
        self.set_replicates(g)
        return g

    def posterior(self, z) -> GaussianMixture:
        return self.conditioner.condition(z)

    def _check_z(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.summary_dim:
            raise ValueError(f"summary has length {z.shape[-1]}, model expects {self.summary_dim}")
        return z

    def p_value(self, z_obs) -> np.ndarray | float:
        """Tail probability for one summary vector or an ``(m, q)`` batch."""
        z = self._check_z(z_obs)
        g = self.statistic(np.atleast_2d(z))
        return tail_probability(self.sorted_replicates, g[0] if z.ndim == 1 else g)

    def mahalanobis(self, z_obs) -> float:
        """Mahalanobis distance of ``z_obs`` to the nearest fitted component's summary margin."""
        c = self.conditioner
        z = self._check_z(z_obs)
        dist = []
        for j in range(c.mean_obs.shape[0]):
            y = np.linalg.solve(c.chol_obs[j], z - c.mean_obs[j])
            dist.append(float(np.sqrt(y @ y)))
        return min(dist)

    def check(self, z_obs) -> ConflictCheckResult:
        if self.sorted_replicates is None:
            raise ConflictError("no replicate divergences computed")
        z = self._check_z(z_obs).reshape(-1)
        g_obs = float(self.statistic(z[None])[0])
        return ConflictCheckResult(
            g_obs=g_obs,
            g_replicates=self.g_replicates.copy(),
            p_value=tail_probability(self.sorted_replicates, g_obs),
            n_components=self.joint.k,
            bic=self.joint.bic,
            mahalanobis=self.mahalanobis(z),
        )

    @classmethod
    def from_draws(
        cls,
        theta,
        z,
        z_replicates,
        cfg: CheckConfig,
        prior: GaussianMixture | None = None,
        rng: np.random.Generator | None = None,
    ) -> "ConflictChecker":
        """Build a checker from precomputed prior-predictive simulations.

        ``theta``/``z`` train the joint fit; ``z_replicates`` are independent
        prior-predictive summaries for the reference distribution.  Without
        ``prior``, the prior is approximated by a mixture fitted to ``theta``.
        """
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        fit_rng, prior_rng = rng.spawn(2)
        theta = np.atleast_2d(np.asarray(theta, dtype=float).T).T
        x = np.hstack([theta, np.asarray(z, dtype=float)])
        joint = select_bic(x, cfg.fit, fit_rng)
        if prior is None:
            prior = select_bic(theta, cfg.fit, prior_rng).mixture
        checker = cls(joint, prior, theta.shape[1])
        checker.replicates_from_summaries(z_replicates)
        return checker


def prepare_check(model: SimulatorModel, cfg: CheckConfig, rng: np.random.Generator | None = None) -> ConflictChecker:
    """Steps that do not depend on the observed summary: training draws, fits, replicates."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sim_rng, fit_rng, prior_rng, rep_rng = rng.spawn(4)
    theta, z = draw_predictive(model, model.gamma0, cfg.n_train, sim_rng)
    joint = select_bic(np.hstack([theta, z]), cfg.fit, fit_rng)
    logger.info("joint fit: %d components (%s)", joint.k, joint.structure)
    prior = model.prior(model.gamma0)
    if prior is None:
        prior = select_bic(theta, cfg.fit, prior_rng).mixture
    checker = ConflictChecker(joint, prior, model.theta_dim)
    _, z_rep = draw_predictive(model, model.gamma0, cfg.n_replicates, rep_rng)
    checker.replicates_from_summaries(z_rep)
    return checker


def run_check(model: SimulatorModel, z_obs, cfg: CheckConfig, rng: np.random.Generator | None = None) -> ConflictCheckResult:
    """Full conflict check of ``z_obs`` under the model's base prior."""
    z_obs = np.asarray(z_obs, dtype=float).reshape(-1)
    if z_obs.size != model.summary_dim:
        raise ValueError(f"z_obs has length {z_obs.size}, model {model.name} has {model.summary_dim} summaries")
    return prepare_check(model, cfg, rng).check(z_obs)


def write_result(result: ConflictCheckResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "check.json").write_text(result.to_json() + "\n", encoding="utf-8")
    result.write_replicates_csv(out / "g_replicates.csv")
