"""Finite Gaussian mixtures: evaluation, sampling, conditioning and EM fitting.

A :class:`GaussianMixture` is the single approximation object used throughout
the package.  Joint densities of (parameter, summary) draws are fitted with
:func:`select_bic`, and posterior approximations are obtained from the fitted
joint with :func:`condition` (or the batched :class:`Conditioner`).
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

CovarianceStructure = Literal["full", "diagonal"]


class MixtureError(ValueError):
    """Raised for invalid mixtures or degenerate numerical operations."""


class SingularBlockError(MixtureError):
    """An observed covariance block could not be factorized.

    Usually means the fit is degenerate; refit with a larger ridge.
    """


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of multivariate normal components.

    Args:
        weights: ``(J,)`` nonnegative mixing weights, normalized on construction.
        means: ``(J, d)`` component means.
        covariances: ``(J, d, d)`` symmetric positive-definite covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        cov = np.array(self.covariances, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if cov.ndim == 1:
            cov = cov[:, None, None]
        J = w.shape[0]
        if J == 0:
            raise MixtureError("mixture needs at least one component")
        if mu.shape[0] != J or cov.shape[0] != J:
            raise MixtureError(
                f"component count mismatch: {J} weights, {mu.shape[0]} means, "
                f"{cov.shape[0]} covariances"
            )
        d = mu.shape[1]
        if cov.shape[1:] != (d, d):
            raise MixtureError(f"covariances must be ({J}, {d}, {d}), got {cov.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise MixtureError("mixture parameters must be finite")
        if np.any(w < 0):
            raise MixtureError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise MixtureError("weights sum to zero")
        # leave already-normalized weights untouched so serialization round-trips bit-exactly
        if abs(total - 1.0) > 1e-12:
            w = w / total
        asym = np.max(np.abs(cov - np.swapaxes(cov, 1, 2)))
        if asym > 1e-10 * max(1.0, float(np.max(np.abs(cov)))):
            raise MixtureError(f"covariances are not symmetric (max asymmetry {asym:.3g})")
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        for arr in (w, mu, cov):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        # raises on non-PD input
        self.cholesky  # noqa: B018

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factors of the component covariances, ``(J, d, d)``."""
        try:
            L = np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as exc:
            raise MixtureError("component covariance is not positive definite") from exc
        L.setflags(write=False)
        return L

    @cached_property
    def log_dets(self) -> np.ndarray:
        return 2.0 * np.log(np.diagonal(self.cholesky, axis1=1, axis2=2)).sum(axis=1)

    @cached_property
    def precisions(self) -> np.ndarray:
        eye = np.broadcast_to(np.eye(self.dimension), self.covariances.shape)
        Linv = np.linalg.solve(self.cholesky, eye)
        P = np.swapaxes(Linv, 1, 2) @ Linv
        return 0.5 * (P + np.swapaxes(P, 1, 2))

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """Log density of every component at every row of ``x``, ``(n, J)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty((x.shape[0], self.n_components))
        for j in range(self.n_components):
            out[:, j] = _gaussian_logpdf(x, self.means[j], self.cholesky[j], self.log_dets[j])
        return out

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        """Overall covariance of the mixture distribution."""
        mu = self.mean()
        diff = self.means - mu
        return np.einsum("j,jab->ab", self.weights, self.covariances) + np.einsum(
            "j,ja,jb->ab", self.weights, diff, diff
        )

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GaussianMixture":
        try:
            return cls(
                np.asarray(doc["weights"], dtype=float),
                np.asarray(doc["means"], dtype=float),
                np.asarray(doc["covariances"], dtype=float),
            )
        except KeyError as exc:
            raise MixtureError(f"mixture document missing key {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussianMixture":
        return cls.from_dict(json.loads(text))

    @classmethod
    def single(cls, mean, covariance) -> "GaussianMixture":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        return cls(np.ones(1), mean[None, :], cov[None, :, :])


def _gaussian_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray, log_det: float) -> np.ndarray:
    y = linalg.solve_triangular(chol, (x - mean).T, lower=True, check_finite=False)
    return -0.5 * (np.einsum("ij,ij->j", y, y) + x.shape[1] * LOG_2PI + log_det)


def log_density(m: GaussianMixture, x) -> np.ndarray | float:
    """Log of the mixture density at ``x``.

    ``x`` may be a single ``d``-vector (returns a float) or an ``(n, d)``
    array (returns ``(n,)``); for a univariate mixture a 1-D array is read
    as ``n`` points.  Evaluated with log-sum-exp so far-tail points
    do not underflow.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and not (m.dimension == 1 and x.size > 1))
    if x.ndim == 2:
        x2 = x
    elif single:
        x2 = x.reshape(1, -1)
    else:
        # a 1-D array of scalars for a univariate mixture
        x2 = x[:, None]
    if x2.shape[1] != m.dimension:
        raise MixtureError(f"point has dimension {x2.shape[1]}, mixture has {m.dimension}")
    with np.errstate(divide="ignore"):
        logw = np.log(m.weights)
    out = logsumexp(m.component_log_densities(x2) + logw, axis=1)
    return float(out[0]) if single else out


def sample(m: GaussianMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. points, ``(n, d)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    labels = rng.choice(m.n_components, size=n, p=m.weights)
    eps = rng.standard_normal((n, m.dimension))
    return m.means[labels] + np.einsum("nab,nb->na", m.cholesky[labels], eps)


def _check_indices(indices: Sequence[int], d: int, *, proper: bool) -> np.ndarray:
    idx = np.asarray(indices, dtype=int).reshape(-1)
    if idx.size == 0:
        raise MixtureError("index set is empty")
    if np.any(idx < 0) or np.any(idx >= d):
        raise MixtureError(f"indices {idx.tolist()} out of range for dimension {d}")
    if np.unique(idx).size != idx.size:
        raise MixtureError("index set has duplicates")
    if proper and idx.size == d:
        raise MixtureError("cannot condition on every coordinate")
    return idx


def marginal(m: GaussianMixture, kept_indices: Sequence[int]) -> GaussianMixture:
    """Marginal mixture over ``kept_indices`` (in the order given)."""
    idx = _check_indices(kept_indices, m.dimension, proper=False)
    return GaussianMixture(
        m.weights, m.means[:, idx], m.covariances[:, idx[:, None], idx[None, :]]
    )


class Conditioner:
    """Precomputed conditioning of one mixture on a fixed coordinate subset.

    The regression coefficients, conditional covariances and the Cholesky
    factors of the observed blocks do not depend on the observed values, so
    conditioning many summary vectors only costs a few matrix products.

    Args:
        m: mixture over all coordinates.
        observed_indices: coordinates that will be fixed.
    """

    def __init__(self, m: GaussianMixture, observed_indices: Sequence[int]):
        obs = _check_indices(observed_indices, m.dimension, proper=True)
        free = np.setdiff1d(np.arange(m.dimension), obs)
        self.mixture = m
        self.observed = obs
        self.free = free
        S = m.covariances
        S_ff = S[:, free[:, None], free[None, :]]
        S_fo = S[:, free[:, None], obs[None, :]]
        S_oo = S[:, obs[:, None], obs[None, :]]
        try:
            L_oo = np.linalg.cholesky(S_oo)
        except np.linalg.LinAlgError as exc:
            raise SingularBlockError(
                "observed covariance block is singular; refit with a larger ridge"
            ) from exc
        J = m.n_components
        # A_j = S_fo S_oo^{-1}
        A = np.empty((J, free.size, obs.size))
        for j in range(J):
            A[j] = linalg.cho_solve((L_oo[j], True), S_fo[j].T, check_finite=False).T
        cond = S_ff - A @ np.swapaxes(S_fo, 1, 2)
        cond = 0.5 * (cond + np.swapaxes(cond, 1, 2))
        self.gain = A
        self.cond_covariances = cond
        self.mean_free = m.means[:, free]
        self.mean_obs = m.means[:, obs]
        self.chol_obs = L_oo
        self.log_det_obs = 2.0 * np.log(np.diagonal(L_oo, axis1=1, axis2=2)).sum(axis=1)
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(m.weights)
        try:
            self.cond_cholesky = np.linalg.cholesky(cond)
        except np.linalg.LinAlgError as exc:
            raise SingularBlockError("conditional covariance is not positive definite") from exc

    def condition_many(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Condition on each row of ``values``.

        Returns:
            ``(weights, means)`` with shapes ``(n, J)`` and ``(n, J, p)``; the
            conditional covariances are :attr:`cond_covariances` for every row.
        """
        v = np.atleast_2d(np.asarray(values, dtype=float))
        if v.shape[1] != self.observed.size:
            raise MixtureError(
                f"observed values have length {v.shape[1]}, expected {self.observed.size}"
            )
        J = self.mixture.n_components
        logw = np.empty((v.shape[0], J))
        means = np.empty((v.shape[0], J, self.free.size))
        for j in range(J):
            diff = v - self.mean_obs[j]
            logw[:, j] = self.log_weights[j] + _gaussian_logpdf(
                v, self.mean_obs[j], self.chol_obs[j], self.log_det_obs[j]
            )
            means[:, j] = self.mean_free[j] + diff @ self.gain[j].T
        logw -= logsumexp(logw, axis=1, keepdims=True)
        return np.exp(logw), means

    def condition(self, values) -> GaussianMixture:
        w, mu = self.condition_many(np.asarray(values, dtype=float).reshape(1, -1))
        return GaussianMixture(w[0], mu[0], self.cond_covariances)


def condition(m: GaussianMixture, observed_indices: Sequence[int], observed_values) -> GaussianMixture:
    """Conditional mixture of the remaining coordinates given observed ones.

    The result is over the free coordinates in increasing index order.

    Raises:
        SingularBlockError: an observed covariance block is not positive definite.
    """
    return Conditioner(m, observed_indices).condition(observed_values)


@dataclass
class FitConfig:
    """Settings for EM fitting and BIC model selection."""

    max_components: int = 15
    covariance_structure: CovarianceStructure | tuple[CovarianceStructure, ...] = ("full", "diagonal")
    em_tolerance: float = 1e-6
    max_iterations: int = 500
    restarts: int = 5
    ridge: float = 1e-6
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")
        if self.em_tolerance <= 0:
            raise ValueError("em_tolerance must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be >= 1")
        for s in self.structures:
            if s not in ("full", "diagonal"):
                raise ValueError(f"unknown covariance structure {s!r}")

    @property
    def structures(self) -> tuple[str, ...]:
        s = self.covariance_structure
        return (s,) if isinstance(s, str) else tuple(s)


@dataclass
class EMFit:
    mixture: GaussianMixture
    log_likelihood: float
    history: list[float]
    converged: bool
    pruned: int = 0
    structure: str = "full"


def n_parameters(k: int, d: int, structure: str = "full") -> int:
    """Free-parameter count of a ``k``-component mixture in ``d`` dimensions."""
    if structure == "full":
        return k - 1 + k * d + k * d * (d + 1) // 2
    if structure == "diagonal":
        return k - 1 + 2 * k * d
    raise ValueError(f"unknown covariance structure {structure!r}")


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = x[rng.integers(n)]
        else:
            centers[i] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _m_step(x, xx, resp, ridge, structure):
    nk = resp.sum(axis=0)
    keep = nk / x.shape[0] >= 1e-8
    resp, nk = resp[:, keep], nk[keep]
    w = nk / nk.sum()
    mu = (resp.T @ x) / nk[:, None]
    J, d = mu.shape
    if structure == "full":
        # raw second moments; x is standardized so cancellation is benign
        cov = (resp.T @ xx).reshape(J, d, d) / nk[:, None, None] - mu[:, :, None] * mu[:, None, :]
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    else:
        var = (resp.T @ (x * x)) / nk[:, None] - mu * mu
        cov = np.zeros((J, d, d))
        cov[:, np.arange(d), np.arange(d)] = np.maximum(var, 0.0)
    cov[:, np.arange(d), np.arange(d)] += ridge
    return w, mu, cov, int((~keep).sum())


def _component_logpdf(x, mu, cov):
    L = np.linalg.cholesky(cov)
    eye = np.broadcast_to(np.eye(x.shape[1]), cov.shape)
    Li = np.linalg.solve(L, eye)
    y = np.einsum("na,jba->jnb", x, Li, optimize=True)
    y -= np.einsum("ja,jba->jb", mu, Li)[:, None, :]
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    return -0.5 * (np.einsum("jnb,jnb->nj", y, y) + x.shape[1] * LOG_2PI + logdet)


def _e_step(x, w, mu, cov):
    logp = _component_logpdf(x, mu, cov) + np.log(w)
    top = logp.max(axis=1, keepdims=True)
    np.exp(logp - top, out=logp)
    total = logp.sum(axis=1, keepdims=True)
    logp /= total
    return logp, float((np.log(total) + top).sum())


def _em_standardized(x, k, structure, cfg, rng):
    xx = (x[:, :, None] * x[:, None, :]).reshape(x.shape[0], -1) if structure == "full" else None
    centers = _kmeanspp(x, k, rng)
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((x.shape[0], k))
    resp[np.arange(x.shape[0]), d2.argmin(axis=1)] = 1.0
    w, mu, cov, pruned = _m_step(x, xx, resp, cfg.ridge, structure)
    history: list[float] = []
    converged = False
    for _ in range(cfg.max_iterations):
        try:
            resp, ll = _e_step(x, w, mu, cov)
        except np.linalg.LinAlgError as exc:
            raise MixtureError("EM produced a singular covariance; increase ridge") from exc
        if history and abs(ll - history[-1]) < cfg.em_tolerance * abs(history[-1]):
            history.append(ll)
            converged = True
            break
        history.append(ll)
        w, mu, cov, p = _m_step(x, xx, resp, cfg.ridge, structure)
        pruned += p
    else:
        # parameters were updated after the last evaluation
        _, ll = _e_step(x, w, mu, cov)
        history.append(ll)
    return w, mu, cov, history, converged, pruned


def _validate_data(data) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise MixtureError("data must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise MixtureError("data contain non-finite values")
    return x


def _standardize(x):
    loc = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale <= 0] = 1.0
    return (x - loc) / scale, loc, scale


def _unstandardize(w, mu, cov, loc, scale) -> GaussianMixture:
    return GaussianMixture(w, mu * scale + loc, cov * np.outer(scale, scale))


def fit_em(
    data,
    k: int,
    cfg: FitConfig | None = None,
    rng: np.random.Generator | None = None,
    structure: str | None = None,
) -> EMFit:
    """Fit a ``k``-component mixture by EM, keeping the best of ``cfg.restarts``.

    Fitting happens on per-coordinate standardized data, so ``cfg.ridge`` is
    in units of each coordinate's sample variance.  The reported
    log-likelihood and ``history`` are on the original scale.
    """
    cfg = cfg or FitConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    structure = structure or cfg.structures[0]
    x = _validate_data(data)
    n, d = x.shape
    if n <= k * d:
        raise MixtureError(f"need more than k*d = {k * d} rows, got {n}")
    z, loc, scale = _standardize(x)
    jac = float(n * np.log(scale).sum())
    best = None
    for child in rng.spawn(cfg.restarts):
        w, mu, cov, hist, conv, pruned = _em_standardized(z, k, structure, cfg, child)
        if best is None or hist[-1] > best[3][-1]:
            best = (w, mu, cov, hist, conv, pruned)
    w, mu, cov, hist, conv, pruned = best
    if pruned:
        logger.info("EM pruned %d collapsed component(s) (k=%d, %s)", pruned, k, structure)
    return EMFit(
        mixture=_unstandardize(w, mu, cov, loc, scale),
        log_likelihood=hist[-1] - jac,
        history=[h - jac for h in hist],
        converged=conv,
        pruned=pruned,
        structure=structure,
    )


@dataclass
class BicCandidate:
    k: int
    structure: str
    log_likelihood: float
    n_params: int
    bic: float
    components: int


@dataclass
class BicSelection:
    """Result of a BIC sweep; ``mixture`` is the selected fit."""

    mixture: GaussianMixture
    bic: float
    log_likelihood: float
    k: int
    structure: str
    table: list[BicCandidate] = field(default_factory=list)

    def table_rows(self) -> list[dict]:
        return [vars(c).copy() for c in self.table]


def select_bic(data, cfg: FitConfig | None = None, rng: np.random.Generator | None = None) -> BicSelection:
    """Fit k = 1..max_components for every configured structure; keep the best BIC.

    BIC is ``2 loglik - p log n`` (larger is better).  Candidates whose
    data are too few for ``k`` components are skipped.
    """
    cfg = cfg or FitConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    x = _validate_data(data)
    n, d = x.shape
    jobs = [(k, s) for s in cfg.structures for k in range(1, cfg.max_components + 1) if n > k * d]
    if not jobs:
        raise MixtureError(f"too few rows ({n}) to fit any mixture in {d} dimensions")
    streams = rng.spawn(len(jobs))

    def run(i):
        k, s = jobs[i]
        return fit_em(x, k, cfg, streams[i], structure=s)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            fits = list(pool.map(run, range(len(jobs))))
    else:
        fits = [run(i) for i in range(len(jobs))]

    table = []
    best_i = 0
    for i, ((k, s), f) in enumerate(zip(jobs, fits)):
        # pruned components no longer count as parameters
        kk = f.mixture.n_components
        p = n_parameters(kk, d, s)
        bic = 2.0 * f.log_likelihood - p * math.log(n)
        table.append(BicCandidate(k, s, f.log_likelihood, p, bic, kk))
        if bic > table[best_i].bic:
            best_i = i
    c = table[best_i]
    logger.info("BIC selected k=%d (%s), bic=%.3f", c.components, c.structure, c.bic)
    return BicSelection(fits[best_i].mixture, c.bic, c.log_likelihood, c.components, c.structure, table)
