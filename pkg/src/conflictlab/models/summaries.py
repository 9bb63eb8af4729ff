"""Summary statistics used by the example simulators."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class DegenerateSummaryError(ValueError):
    """The data do not support the requested summary (e.g. zero spread)."""


def octile_summaries(column) -> np.ndarray:
    """Robust location, scale, skewness and kurtosis from the sample octiles.

    Octiles use linear interpolation between order statistics (type 7).
    """
    x = np.asarray(column, dtype=float).reshape(-1)
    if x.size < 8:
        raise DegenerateSummaryError("need at least 8 observations for octiles")
    e = np.quantile(x, np.arange(1, 8) / 8.0)
    return _octile_stats(e[None, :])[0]


def _octile_stats(e: np.ndarray) -> np.ndarray:
    e1, e2, e3, e4, e5, e6, e7 = e.T
    spread = e6 - e2
    if np.any(spread <= 0):
        raise DegenerateSummaryError("octile range E6 - E2 is zero")
    return np.column_stack(
        [e4, spread, (e6 + e2 - 2.0 * e4) / spread, (e7 - e5 + e3 - e1) / spread]
    )


def octile_summaries_columns(data: np.ndarray) -> np.ndarray:
    """Octile summaries of every column of ``data`` (``(n, J)`` -> ``(J, 4)``)."""
    e = np.quantile(np.asarray(data, dtype=float), np.arange(1, 8) / 8.0, axis=0).T
    return _octile_stats(e)


PAIRS = ((0, 1), (0, 2), (1, 2))


def rank_correlations(data) -> np.ndarray:
    """Spearman correlations of column pairs (1,2), (1,3), (2,3); ties get average ranks."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) matrix, got shape {x.shape}")
    if x.shape[0] < 3:
        raise ValueError("need at least 3 rows")
    ranks = rankdata(x, axis=0)
    ranks = ranks - ranks.mean(axis=0)
    norms = np.sqrt((ranks**2).sum(axis=0))
    if np.any(norms == 0):
        raise DegenerateSummaryError("constant column")
    return np.array([ranks[:, i] @ ranks[:, j] / (norms[i] * norms[j]) for i, j in PAIRS])


def rank_correlations_batch(data: np.ndarray) -> np.ndarray:
    """Spearman correlations for a stack of tie-free datasets ``(m, n, 3)`` -> ``(m, 3)``.

    Uses ordinal ranks, which equal average ranks when there are no ties
    (continuous simulated data).
    """
    ranks = np.argsort(np.argsort(data, axis=1), axis=1).astype(float)
    ranks -= ranks.mean(axis=1, keepdims=True)
    ss = (ranks**2).sum(axis=1)
    out = np.empty((data.shape[0], 3))
    for c, (i, j) in enumerate(PAIRS):
        out[:, c] = (ranks[:, :, i] * ranks[:, :, j]).sum(axis=1) / np.sqrt(ss[:, i] * ss[:, j])
    return out


def moment_summaries(series) -> np.ndarray:
    """Mean, unbiased variance, skewness and (non-excess) kurtosis of a series."""
    x = np.asarray(series, dtype=float).reshape(-1)
    if x.size < 4:
        raise DegenerateSummaryError("need at least 4 values")
    out, ok = moment_summaries_masked(x[None, :], np.ones((1, x.size), dtype=bool))
    if not ok[0]:
        raise DegenerateSummaryError("series has zero variance")
    return out[0]


def moment_summaries_masked(x: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise moment summaries over the entries where ``mask`` is true.

    Returns ``(summaries (m, 4), ok (m,))``; a row fails if it has fewer than
    4 entries or zero variance.
    """
    n = mask.sum(axis=1)
    safe_n = np.maximum(n, 1)
    xm = np.where(mask, x, 0.0)
    mean = xm.sum(axis=1) / safe_n
    c = np.where(mask, x - mean[:, None], 0.0)
    m2 = (c**2).sum(axis=1) / safe_n
    m3 = (c**3).sum(axis=1) / safe_n
    m4 = (c**4).sum(axis=1) / safe_n
    ok = (n >= 4) & (m2 > 1e-12 * np.maximum(1.0, mean**2))
    m2s = np.where(ok, m2, 1.0)
    var = m2 * safe_n / np.maximum(n - 1, 1)
    out = np.column_stack([mean, var, m3 / m2s**1.5, m4 / m2s**2])
    return out, ok
