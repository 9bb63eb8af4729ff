"""Degree of weak informativity over a prior-expansion family.

One mixture is fitted to hierarchical draws ``(gamma, theta, z)`` with gamma
from a uniform pseudo-prior.  Conditioning that mixture on ``(gamma, z)``
gives the posterior under the prior ``p(theta | gamma)`` for any gamma, so
conflict p-values can be computed for every candidate prior without refitting.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial.distance import pdist

from .conflict import CheckConfig, ConflictError, PosteriorDivergence, prepare_check, tail_probability
from .mixture import BicSelection, Conditioner, FitConfig, GaussianMixture, marginal, select_bic
from .models.base import SimulatorModel, draw_hierarchical, draw_predictive

logger = logging.getLogger(__name__)


class WeakInformativityError(RuntimeError):
    pass


@dataclass
class WeakInformativityConfig:
    alpha: float = 0.05
    delta: float = 0.5
    n_train: int = 100_000
    R: int = 1000
    S: int = 500
    gamma_region: np.ndarray | None = None
    gamma0: np.ndarray | None = None
    design_size: int = 100
    lhs_iterations: int = 2000
    grid: list | None = None
    normalization: str = "base_rate"
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.gamma_region is not None:
            self.gamma_region = _check_region(self.gamma_region)
        if self.gamma0 is not None:
            self.gamma0 = np.atleast_1d(np.asarray(self.gamma0, dtype=float))


def _check_region(region) -> np.ndarray:
    r = np.atleast_2d(np.asarray(region, dtype=float))
    if r.shape[1] != 2:
        raise ValueError("region must be a list of (lower, upper) pairs")
    if not np.all(np.isfinite(r)):
        raise ValueError("region bounds must be finite")
    if np.any(r[:, 1] <= r[:, 0]):
        raise ValueError(f"degenerate region {r.tolist()}: need lower < upper in every dimension")
    return r


# ---------------------------------------------------------------------------
# design


@dataclass
class LhsDesign:
    points: np.ndarray
    criterion_value: float


def _min_distance(u: np.ndarray) -> float:
    return float(pdist(u).min()) if u.shape[0] > 1 else math.inf


def lhs_maximin(region, n: int, iterations: int, rng: np.random.Generator) -> LhsDesign:
    """Centred Latin hypercube improved towards maximin by column swaps.

    Each proposal swaps two entries of one column (which preserves the
    stratification) and is kept when the minimum pairwise distance in
    unit-cube coordinates does not decrease.
    """
    region = _check_region(region)
    if n < 1 or iterations < 1:
        raise ValueError("n and iterations must be >= 1")
    dim = region.shape[0]
    perms = np.column_stack([rng.permutation(n) for _ in range(dim)])
    u = (perms + 0.5) / n
    best = _min_distance(u)
    if n > 2:
        for _ in range(iterations):
            col = rng.integers(dim)
            i, j = rng.choice(n, size=2, replace=False)
            u[[i, j], col] = u[[j, i], col]
            crit = _min_distance(u)
            if crit >= best:
                best = crit
            else:
                u[[i, j], col] = u[[j, i], col]
    lo, hi = region[:, 0], region[:, 1]
    return LhsDesign(points=lo + u * (hi - lo), criterion_value=best)


def grid_points(region, counts) -> np.ndarray:
    """Rectangular grid with ``counts[i]`` equally spaced values per dimension."""
    region = _check_region(region)
    axes = [np.linspace(lo, hi, int(c)) for (lo, hi), c in zip(region, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


# ---------------------------------------------------------------------------
# hierarchical fit


class HierarchicalFit:
    """Mixture over ``(gamma, theta, z)`` and the derived conditionals.

    Attributes:
        selection: the BIC-selected joint fit.
        analytic_prior: whether :meth:`prior` uses the model's exact prior.
    """

    def __init__(self, selection: BicSelection, model: SimulatorModel):
        self.selection = selection
        self.model = model
        k, p = model.gamma_dim, model.theta_dim
        d = selection.mixture.dimension
        self.gamma_idx = np.arange(k)
        self.theta_idx = np.arange(k, k + p)
        self.z_idx = np.arange(k + p, d)
        self.posterior_conditioner = Conditioner(
            selection.mixture, np.concatenate([self.gamma_idx, self.z_idx])
        )
        self.analytic_prior = model.prior_is_gaussian
        self._gamma_conditioner = None

    @property
    def mixture(self) -> GaussianMixture:
        return self.selection.mixture

    def prior(self, gamma) -> GaussianMixture:
        """``p~(theta | gamma)``: exact when the model prior is Gaussian, else from the fit."""
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        if self.analytic_prior:
            return self.model.prior(gamma)
        if self._gamma_conditioner is None:
            self._gamma_conditioner = Conditioner(self.mixture, self.gamma_idx)
        theta_z = self._gamma_conditioner.condition(gamma)
        return marginal(theta_z, np.arange(self.model.theta_dim))

    def statistic(self, gamma) -> Callable[[np.ndarray], np.ndarray]:
        """Function mapping summaries ``(m, q)`` to G~(z, gamma)."""
        gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        div = PosteriorDivergence(self.posterior_conditioner, self.prior(gamma))

        def g(z):
            z = np.atleast_2d(z)
            return div(np.hstack([np.broadcast_to(gamma, (z.shape[0], gamma.size)), z]))

        return g


def fit_hierarchical(
    model: SimulatorModel, cfg: WeakInformativityConfig, rng: np.random.Generator | None = None
) -> HierarchicalFit:
    """Simulate ``n_train`` hierarchical draws and fit their joint mixture by BIC."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    sim_rng, fit_rng = rng.spawn(2)
    model = _with_region(model, cfg)
    gamma, theta, z = draw_hierarchical(model, cfg.n_train, sim_rng)
    selection = select_bic(np.hstack([gamma, theta, z]), cfg.fit, fit_rng)
    logger.info("hierarchical fit: %d components (%s)", selection.k, selection.structure)
    return HierarchicalFit(selection, model)


def _with_region(model: SimulatorModel, cfg: WeakInformativityConfig) -> SimulatorModel:
    if cfg.gamma_region is None and cfg.gamma0 is None:
        return model
    model = copy.copy(model)
    if cfg.gamma_region is not None:
        if cfg.gamma_region.shape[0] != model.gamma_dim:
            raise ValueError(f"gamma region has {cfg.gamma_region.shape[0]} dims, model {model.gamma_dim}")
        model.gamma_region = cfg.gamma_region
    if cfg.gamma0 is not None:
        model.gamma0 = cfg.gamma0
    return model


# ---------------------------------------------------------------------------
# p-values and degree of weak informativity


class PValueFunction:
    """Empirical conflict p-value ``z -> P^_gamma(z)`` from ``R`` sorted replicates."""

    def __init__(self, statistic: Callable[[np.ndarray], np.ndarray], g_replicates: np.ndarray, gamma=None):
        self.statistic = statistic
        self.g_replicates = np.asarray(g_replicates, dtype=float)
        self.sorted_replicates = np.sort(self.g_replicates)
        self.gamma = gamma

    @property
    def R(self) -> int:
        return self.sorted_replicates.size

    def __call__(self, z) -> np.ndarray | float:
        z = np.asarray(z, dtype=float)
        g = self.statistic(np.atleast_2d(z))
        out = tail_probability(self.sorted_replicates, g)
        return float(out[0]) if z.ndim == 1 else out


def _in_region(region: np.ndarray, gamma: np.ndarray) -> bool:
    return bool(np.all(gamma >= region[:, 0] - 1e-12) and np.all(gamma <= region[:, 1] + 1e-12))


def p_value_function(
    fit: HierarchicalFit, model: SimulatorModel, gamma, R: int, rng: np.random.Generator
) -> PValueFunction:
    """Simulate ``R`` summaries under ``p(theta | gamma)`` and return their tail-probability function."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    if not _in_region(model.gamma_region, gamma):
        warnings.warn(f"gamma={gamma.tolist()} lies outside the pseudo-prior region; the fit is extrapolated", stacklevel=2)
    stat = fit.statistic(gamma)
    _, z = draw_predictive(model, gamma, R, rng)
    try:
        g = stat(z)
    except ConflictError as exc:
        raise ConflictError(f"replicate failed at gamma={gamma.tolist()}: {exc}") from exc
    return PValueFunction(stat, g, gamma)


def lower_quantile(values: np.ndarray, alpha: float) -> float:
    """Order statistic ``ceil(alpha * n)`` (1-based) of ``values``."""
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[max(math.ceil(alpha * v.size), 1) - 1])


@dataclass
class DegreeEstimate:
    gamma: np.ndarray
    w_alpha: float
    se: float
    conflict_rate: float


class BaseReference:
    """Base-prior predictive draws ``z'`` and the level ``x_alpha``, shared across gamma values.

    ``W`` is one minus the ratio of the conflict rate ``P(P_gamma(z') <= x_alpha)``
    to a normalizer.  With ``normalization="base_rate"`` the normalizer is the
    base prior's own conflict rate at ``x_alpha`` (the proportion of conflicts
    avoided; zero at the base prior by construction).  With ``"x_alpha"`` it
    is ``x_alpha`` itself; the two agree when the base p-values are uniform.

    Args:
        base_pvalues_fn: conflict p-value function under the base prior.
        base_z: ``(S, q)`` summaries from the base prior predictive.
        alpha: conflict level.
    """

    def __init__(
        self,
        base_pvalues_fn: Callable,
        base_z: np.ndarray,
        alpha: float,
        gamma0: np.ndarray,
        normalization: str = "base_rate",
    ):
        self.base_fn = base_pvalues_fn
        self.base_z = base_z
        self.alpha = alpha
        self.gamma0 = gamma0
        self.base_pvalues = np.asarray(base_pvalues_fn(base_z))
        self.x_alpha = lower_quantile(self.base_pvalues, alpha)
        if self.x_alpha <= 0:
            raise WeakInformativityError(
                "x_alpha is 0: base p-values tie at the smallest value; increase R"
            )
        self.base_rate = float(np.mean(self.base_pvalues <= self.x_alpha))
        if normalization == "base_rate":
            self.normalizer = self.base_rate
        elif normalization == "x_alpha":
            self.normalizer = self.x_alpha
        else:
            raise ValueError(f"unknown normalization {normalization!r}")
        self.normalization = normalization

    @property
    def S(self) -> int:
        return self.base_z.shape[0]

    def degree(self, pfun: Callable) -> tuple[float, float, float]:
        """``(W_alpha, standard error, conflict rate)`` for a p-value function."""
        p = pfun(self.base_z)
        count = int(np.sum(p <= self.x_alpha))
        rate = count / self.S
        w = 1.0 - rate / self.normalizer
        # Agresti-Coull adjusted proportion keeps the error nonzero at 0 or S conflicts
        q = (count + 2.0) / (self.S + 4.0)
        se = math.sqrt(q * (1.0 - q) / (self.S + 4.0)) / self.normalizer
        return w, se, rate


def build_reference(
    fit: HierarchicalFit, model: SimulatorModel, cfg: WeakInformativityConfig, rng: np.random.Generator
) -> BaseReference:
    """Base predictive draws and ``x_alpha``.

    When gamma0 lies outside the pseudo-prior region the base p-values come
    from a separate single-prior conflict check rather than the hierarchical fit.
    """
    gamma0 = np.atleast_1d(np.asarray(model.gamma0, dtype=float))
    draw_rng, rep_rng = rng.spawn(2)
    _, base_z = draw_predictive(model, gamma0, cfg.S, draw_rng)
    if _in_region(model.gamma_region, gamma0):
        base_fn = p_value_function(fit, model, gamma0, cfg.R, rep_rng)
    else:
        check_cfg = CheckConfig(n_train=cfg.n_train, n_replicates=cfg.R, seed=cfg.seed, fit=cfg.fit)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            base_fn = prepare_check(model, check_cfg, rep_rng).p_value
    return BaseReference(base_fn, base_z, cfg.alpha, gamma0, cfg.normalization)


def degree_of_weak_informativity(
    fit: HierarchicalFit,
    model: SimulatorModel,
    gamma,
    gamma0,
    cfg: WeakInformativityConfig,
    rng: np.random.Generator,
    reference: BaseReference | None = None,
) -> DegreeEstimate:
    """Estimate ``W_alpha(gamma)`` relative to the base prior at ``gamma0``.

    At ``gamma == gamma0`` the base p-value function is reused, so the
    estimate is zero up to ties at ``x_alpha``.
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    gamma0 = np.atleast_1d(np.asarray(gamma0, dtype=float))
    ref_rng, rep_rng = rng.spawn(2)
    if reference is None:
        model = copy.copy(model)
        model.gamma0 = gamma0
        reference = build_reference(fit, model, cfg, ref_rng)
    if np.array_equal(gamma, reference.gamma0):
        pfun = reference.base_fn
    else:
        pfun = p_value_function(fit, model, gamma, cfg.R, rep_rng)
    w, se, rate = reference.degree(pfun)
    return DegreeEstimate(gamma, w, se, rate)


# ---------------------------------------------------------------------------
# search


@dataclass
class WeakInformativityReport:
    gamma_points: np.ndarray
    w_alpha: np.ndarray
    w_se: np.ndarray
    x_alpha: float
    alpha: float
    delta: float
    gamma0: np.ndarray
    grid_shape: tuple[int, ...] | None = None
    n_components: int = 0

    @property
    def best_gamma(self) -> np.ndarray:
        return self.gamma_points[int(np.argmax(self.w_alpha))]

    @property
    def satisfying_points(self) -> np.ndarray:
        return self.gamma_points[self.w_alpha > self.delta]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "delta": self.delta,
            "x_alpha": self.x_alpha,
            "gamma0": self.gamma0.tolist(),
            "gamma_points": self.gamma_points.tolist(),
            "w_alpha": self.w_alpha.tolist(),
            "w_se": self.w_se.tolist(),
            "best_gamma": self.best_gamma.tolist(),
            "satisfying_points": self.satisfying_points.tolist(),
            "grid_shape": list(self.grid_shape) if self.grid_shape else None,
            "n_components": self.n_components or None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_csv(self, path) -> None:
        k = self.gamma_points.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([f"gamma_{i + 1}" for i in range(k)] + ["w_alpha"])
            for g, v in zip(self.gamma_points, self.w_alpha):
                w.writerow([repr(float(x)) for x in g] + [repr(float(v))])


def design_for(model: SimulatorModel, cfg: WeakInformativityConfig, rng) -> tuple[np.ndarray, tuple[int, ...] | None]:
    """Candidate gamma points and, for grids, the grid shape.

    ``cfg.grid`` has one entry per gamma dimension: an integer count of
    equally spaced values over the region, or an explicit list of values.
    Without a grid a maximin Latin hypercube of ``design_size`` points is used.
    """
    if cfg.grid is None:
        design = lhs_maximin(model.gamma_region, cfg.design_size, cfg.lhs_iterations, rng)
        return design.points, None
    if len(cfg.grid) != model.gamma_dim:
        raise ValueError(f"grid has {len(cfg.grid)} axes, model has gamma_dim={model.gamma_dim}")
    axes = []
    for (lo, hi), spec in zip(model.gamma_region, cfg.grid):
        if np.isscalar(spec):
            axes.append(np.linspace(lo, hi, int(spec)))
        else:
            axes.append(np.asarray(spec, dtype=float).reshape(-1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh]), tuple(a.size for a in axes)


def search(
    model: SimulatorModel,
    cfg: WeakInformativityConfig,
    rng: np.random.Generator | None = None,
    fit: HierarchicalFit | None = None,
    points: np.ndarray | None = None,
) -> WeakInformativityReport:
    """Evaluate ``W_alpha`` on a grid or maximin design and collect the report.

    The base predictive draws and ``x_alpha`` are computed once and shared
    by every candidate.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    fit_rng, ref_rng, design_rng, eval_rng = rng.spawn(4)
    model = _with_region(model, cfg)
    if fit is None:
        fit = fit_hierarchical(model, cfg, fit_rng)
    grid_shape = None
    if points is None:
        points, grid_shape = design_for(model, cfg, design_rng)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    reference = build_reference(fit, model, cfg, ref_rng)
    streams = eval_rng.spawn(points.shape[0])

    def evaluate(i):
        return degree_of_weak_informativity(fit, model, points[i], reference.gamma0, cfg, streams[i], reference=reference)

    # each point owns its stream, so results do not depend on the worker count
    if cfg.fit.workers > 1 and points.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=cfg.fit.workers) as pool:
            estimates = list(pool.map(evaluate, range(points.shape[0])))
    else:
        estimates = [evaluate(i) for i in range(points.shape[0])]
    w = np.array([e.w_alpha for e in estimates])
    se = np.array([e.se for e in estimates])
    for e in estimates:
        logger.debug("gamma=%s W=%.3f", e.gamma, e.w_alpha)
    return WeakInformativityReport(
        gamma_points=points,
        w_alpha=w,
        w_se=se,
        x_alpha=reference.x_alpha,
        alpha=cfg.alpha,
        delta=cfg.delta,
        gamma0=reference.gamma0,
        grid_shape=grid_shape,
        n_components=fit.selection.k,
    )


def write_report(report: WeakInformativityReport, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "wi_report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    report.write_csv(out / "wi_surface.csv")
