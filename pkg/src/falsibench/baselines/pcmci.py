"""A reduced PCMCI: PC-style parent preselection followed by MCI tests.

Conditional independence is tested with partial correlation and a
t-distributed null. Stage 1 caps the conditioning set at three of the
currently strongest parents and tries one combination per size; stage 2
conditions each surviving link on the parents of both endpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..core import ScoreMatrix, Series
from ..errors import ParameterError

logger = logging.getLogger(__name__)

MAX_CONDITIONS = 3

Link = tuple[int, int]  # (variable, lag)


@dataclass
class _Lagged:
    values: np.ndarray
    start: int

    def col(self, var: int, lag: int) -> np.ndarray:
        t = self.values.shape[0]
        return self.values[self.start - lag:t - lag, var]


@dataclass
class PCMCIResult:
    scores: ScoreMatrix
    pvalues: np.ndarray  # (K, K, L), NaN where the link was removed in stage 1
    parents: dict[int, list[Link]]
    events: list[str] = field(default_factory=list)


def partial_corr(x: np.ndarray, y: np.ndarray, z: np.ndarray | None,
                 events: list | None = None) -> tuple[float, float]:
    """Partial correlation of ``x`` and ``y`` given columns of ``z``; returns ``(r, p)``."""
    n = x.shape[0]
    z = np.empty((n, 0)) if z is None else z
    while True:
        design = np.hstack([np.ones((n, 1)), z])
        if np.linalg.matrix_rank(design) == design.shape[1] or z.shape[1] == 0:
            break
        # conditions are passed strongest first; drop the weakest
        if events is not None:
            events.append(f"singular condition set of size {z.shape[1]}, dropped weakest")
        logger.debug("singular condition set, dropping weakest condition")
        z = z[:, :-1]
    coef, *_ = np.linalg.lstsq(design, np.column_stack([x, y]), rcond=None)
    res = np.column_stack([x, y]) - design @ coef
    sx, sy = np.sqrt(res[:, 0] @ res[:, 0]), np.sqrt(res[:, 1] @ res[:, 1])
    if sx == 0 or sy == 0:
        return 0.0, 1.0
    r = float(np.clip(res[:, 0] @ res[:, 1] / (sx * sy), -1.0, 1.0))
    df = n - 2 - z.shape[1]
    if df < 1:
        return r, 1.0
    if abs(r) >= 1.0:
        return r, 0.0
    tstat = r * np.sqrt(df / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(tstat), df))


def _stack(data: _Lagged, links) -> np.ndarray | None:
    if not links:
        return None
    return np.column_stack([data.col(j, tau) for j, tau in links])


def pc1_select(series: Series, max_lag: int = 1, alpha_pc: float = 0.05,
               events: list | None = None) -> dict[int, list[Link]]:
    """Stage 1: per-target candidate parents, ordered strongest first."""
    k = series.k
    data = _Lagged(series.values, max_lag)
    out = {}
    for i in range(k):
        target = data.col(i, 0)
        parents: list[Link] = [(j, tau) for tau in range(1, max_lag + 1) for j in range(k)]
        strength = {p: np.inf for p in parents}
        for size in range(MAX_CONDITIONS + 1):
            if not parents or len(parents) - 1 < size:
                break
            removed = []
            for link in parents:
                conds = [q for q in parents if q != link][:size]
                r, p = partial_corr(target, data.col(*link), _stack(data, conds), events)
                strength[link] = min(strength[link], abs(r))
                if p > alpha_pc:
                    removed.append(link)
            parents = [q for q in parents if q not in removed]
            parents.sort(key=lambda q: -strength[q])
        out[i] = parents
    return out


def pcmci_lite(series: Series, max_lag: int = 1, alpha_pc: float = 0.05,
               return_details: bool = False):
    """Scores ``1 - p`` from the MCI stage for surviving links, 0 for removed ones."""
    k, t = series.k, series.t
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    if t - 2 * max_lag <= 2 * max_lag + 1:
        raise ParameterError(f"series length {t} too short for max_lag={max_lag}")
    if not 0 < alpha_pc < 1:
        raise ParameterError("alpha_pc must lie in (0, 1)")
    events: list[str] = []
    parents = pc1_select(series, max_lag, alpha_pc, events)
    data = _Lagged(series.values, 2 * max_lag)
    raw = np.zeros((k, k, max_lag))
    pvalues = np.full((k, k, max_lag), np.nan)
    for i in range(k):
        target = data.col(i, 0)
        for j, tau in parents[i]:
            conds = [q for q in parents[i] if q != (j, tau)]
            conds += [(m, lag + tau) for m, lag in parents[j]]
            conds = [q for q in dict.fromkeys(conds) if q != (j, tau)]
            _, p = partial_corr(target, data.col(j, tau), _stack(data, conds), events)
            pvalues[i, j, tau - 1] = p
            raw[i, j, tau - 1] = 1.0 - p
    flags = ("singular_conditions",) if events else ()
    scores = ScoreMatrix.from_raw(raw, flags=flags, allow_zero=True)
    if return_details:
        return PCMCIResult(scores, pvalues, parents, events)
    return scores
