"""Pairwise (bivariate) Granger causality F-tests."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..core import ScoreMatrix, Series
from ..errors import ParameterError

LOG10_CLIP = 300.0


def _rss(x: np.ndarray, y: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    r = y - x @ coef
    return float(r @ r)


def granger_pvalues(series: Series, max_lag: int = 1):
    """``p[i, j]`` tests whether lags of ``j`` help predict ``i`` beyond ``i``'s own lags.

    Returns ``(pvalues, log10p, degenerate)``; the diagonal is NaN.
    """
    values = series.values
    t, k = values.shape
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    n = t - max_lag
    df_u = n - (2 * max_lag + 1)
    if df_u < 1:
        raise ParameterError(f"series length {t} too short for bivariate Granger at lag {max_lag}")
    lags = np.stack([values[max_lag - tau:t - tau] for tau in range(1, max_lag + 1)], axis=2)
    ones = np.ones((n, 1))
    pvals = np.full((k, k), np.nan)
    log10p = np.full((k, k), np.nan)
    degenerate = np.zeros((k, k), dtype=bool)
    for i in range(k):
        y = values[max_lag:, i]
        own = lags[:, i, :]
        restricted = np.hstack([ones, own])
        rss_r = _rss(restricted, y)
        for j in range(k):
            if j == i:
                continue
            rss_u = _rss(np.hstack([restricted, lags[:, j, :]]), y)
            if not (rss_u > 1e-12 * max(float(y @ y), 1e-300)) or np.ptp(y) == 0:
                degenerate[i, j] = True
                pvals[i, j], log10p[i, j] = 1.0, 0.0
                continue
            f = max((rss_r - rss_u) / max_lag, 0.0) / (rss_u / df_u)
            logp = stats.f.logsf(f, max_lag, df_u)
            pvals[i, j] = np.exp(logp)
            log10p[i, j] = logp / np.log(10.0)
    return pvals, log10p, degenerate


def granger_bivariate(series: Series, max_lag: int = 1) -> ScoreMatrix:
    """Static score ``-log10 p`` clipped at 300, diagonal zeroed, max-normalized."""
    _, log10p, degenerate = granger_pvalues(series, max_lag)
    raw = np.nan_to_num(np.clip(-log10p, 0.0, LOG10_CLIP), nan=0.0)
    flags = ("degenerate_variance",) if degenerate.any() else ()
    return ScoreMatrix.from_raw(raw, flags=flags)
