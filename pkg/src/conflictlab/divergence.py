"""Kullback-Leibler divergences between Gaussians and Gaussian mixtures."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .mixture import GaussianMixture, MixtureError, log_density, sample


def _chol(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise MixtureError("covariance is not positive definite") from exc


def _as_normal(n):
    if isinstance(n, GaussianMixture):
        if n.n_components != 1:
            raise MixtureError("kl_gaussian needs single-component mixtures")
        return n.means[0], n.covariances[0]
    return n


def kl_gaussian(p, q) -> float:
    """KL(N_p || N_q) for ``p = (mean, cov)`` and ``q = (mean, cov)``.

    Single-component mixtures are accepted in place of the tuples.
    """
    p, q = _as_normal(p), _as_normal(q)
    mu_p = np.atleast_1d(np.asarray(p[0], dtype=float))
    mu_q = np.atleast_1d(np.asarray(q[0], dtype=float))
    S_p = np.atleast_2d(np.asarray(p[1], dtype=float))
    S_q = np.atleast_2d(np.asarray(q[1], dtype=float))
    d = mu_p.shape[0]
    if mu_q.shape[0] != d or S_p.shape != (d, d) or S_q.shape != (d, d):
        raise MixtureError("dimension mismatch between the two normals")
    L_p, L_q = _chol(S_p), _chol(S_q)
    logdet_p = 2.0 * np.log(np.diag(L_p)).sum()
    logdet_q = 2.0 * np.log(np.diag(L_q)).sum()
    Li = np.linalg.solve(L_q, np.eye(d))
    P_q = Li.T @ Li
    P_q = 0.5 * (P_q + P_q.T)
    kl = _pairwise_kl(
        mu_p[None], S_p[None], np.array([logdet_p]), mu_q[None], P_q[None], np.array([logdet_q])
    )
    return float(kl[0, 0])


def _pairwise_kl(mu_a, S_a, logdet_a, mu_b, P_b, logdet_b) -> np.ndarray:
    """KL(a_i || b_j) for all component pairs, ``(..., I, J)``.

    ``mu_a`` may carry leading batch dimensions ``(..., I, p)``; covariances
    are shared across the batch.
    """
    p = S_a.shape[-1]
    trace = np.einsum("jab,iba->ij", P_b, S_a)
    diff = mu_b[..., None, :, :] - mu_a[..., :, None, :]
    maha = np.einsum("...ija,jab,...ijb->...ij", diff, P_b, diff)
    return 0.5 * (trace + maha - p + logdet_b[None, :] - logdet_a[:, None])


def _log_weights(w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(w)


def variational_kl_batch(
    g_weights: np.ndarray,
    g_means: np.ndarray,
    g_covariances: np.ndarray,
    f: GaussianMixture,
) -> np.ndarray:
    """Variational mixture KL for a batch of mixtures sharing covariances.

    Args:
        g_weights: ``(n, J)`` weights of the ``n`` first-argument mixtures.
        g_means: ``(n, J, p)`` their means.
        g_covariances: ``(J, p, p)`` covariances common to the whole batch
            (true for conditionals of one fitted joint).
        f: the second-argument mixture.

    Returns:
        ``(n,)`` divergences.
    """
    g_cov = np.asarray(g_covariances, dtype=float)
    if g_cov.shape[-1] != f.dimension:
        raise MixtureError(f"dimension mismatch: {g_cov.shape[-1]} vs {f.dimension}")
    L_g = _chol(g_cov)
    logdet_g = 2.0 * np.log(np.diagonal(L_g, axis1=1, axis2=2)).sum(axis=1)
    eye = np.broadcast_to(np.eye(g_cov.shape[-1]), g_cov.shape)
    Li = np.linalg.solve(L_g, eye)
    P_g = np.swapaxes(Li, 1, 2) @ Li

    kl_gg = _pairwise_kl(g_means, g_cov, logdet_g, g_means, P_g, logdet_g)
    kl_gf = _pairwise_kl(g_means, g_cov, logdet_g, f.means[None], f.precisions, f.log_dets)
    # exact zeros on the diagonal keep g == f exact
    idx = np.arange(g_cov.shape[0])
    kl_gg[..., idx, idx] = 0.0

    logw_g = _log_weights(g_weights)
    logw_f = _log_weights(f.weights)
    num = logsumexp(logw_g[:, None, :] - kl_gg, axis=2)
    den = logsumexp(logw_f[None, None, :] - kl_gf, axis=2)
    terms = np.where(g_weights > 0, g_weights * (num - den), 0.0)
    return terms.sum(axis=1)


def kl_mixture_variational(g: GaussianMixture, f: GaussianMixture) -> float:
    """Closed-form variational approximation to KL(g || f) for Gaussian mixtures.

    The approximation can be negative; values are returned unclamped.
    """
    if g.dimension != f.dimension:
        raise MixtureError(f"dimension mismatch: {g.dimension} vs {f.dimension}")
    if g is f:
        return 0.0
    # g == f component-for-component gives an exact zero
    if (
        g.n_components == f.n_components
        and np.array_equal(g.weights, f.weights)
        and np.array_equal(g.means, f.means)
        and np.array_equal(g.covariances, f.covariances)
    ):
        return 0.0
    return float(variational_kl_batch(g.weights[None], g.means[None], g.covariances, f)[0])


def kl_monte_carlo(
    g: GaussianMixture, f: GaussianMixture, n: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo KL(g || f): mean and standard error of log g(X) - log f(X), X ~ g."""
    if n < 1000:
        raise ValueError("use at least 1000 draws")
    x = sample(g, n, rng)
    vals = log_density(g, x) - log_density(f, x)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))
