"""Flat-lag AUROC, win-rate tables and paired-seed tests."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .core import LaggedAdjacency, ScoreMatrix, off_diagonal_mask
from .errors import IncompleteGridError, ParameterError, UndefinedAUROCError

COLLAPSE_MODES = ("flat", "pairs")


def auroc_from_labels(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUROC with mid-rank ties."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUROCError(f"AUROC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = stats.rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_bruteforce(scores, labels) -> float:
    """O(P*N) pairwise reference; counts ties as one half."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    pos, neg = scores[labels], scores[~labels]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedAUROCError("AUROC undefined")
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (pos.size * neg.size)


def align(scores: ScoreMatrix, truth: LaggedAdjacency, collapse: str = "flat"):
    """Return (score tensor, truth tensor) on a common (K, K, L) grid.

    ``flat`` keeps (pair, lag) cells when both sides are lagged, padding the
    shorter lag axis with zeros/False. A static side forces the other side to
    collapse: truth by any-lag OR, scores by max over lags. ``pairs`` always
    collapses both sides to (pair) cells.
    """
    if collapse not in COLLAPSE_MODES:
        raise ParameterError(f"collapse must be one of {COLLAPSE_MODES}")
    if scores.k != truth.k:
        raise ParameterError(f"score K={scores.k} does not match truth K={truth.k}")
    s, e = scores.scores, truth.edges
    if collapse == "pairs" or s.shape[2] == 1 or e.shape[2] == 1:
        return s.max(axis=2, keepdims=True), e.any(axis=2, keepdims=True)
    lags = max(s.shape[2], e.shape[2])
    s = np.pad(s, ((0, 0), (0, 0), (0, lags - s.shape[2])))
    e = np.pad(e, ((0, 0), (0, 0), (0, lags - e.shape[2])))
    return s, e


def auroc_flat_lag(scores: ScoreMatrix, truth: LaggedAdjacency, collapse: str = "flat",
                   exclude: np.ndarray | None = None) -> float:
    """Flat-lag AUROC over off-diagonal cells; ``exclude`` is a (K, K) mask of
    (effect, cause) pairs left out of the evaluation at every lag."""
    s, e = align(scores, truth, collapse)
    mask = off_diagonal_mask(s.shape[0], s.shape[2])
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != s.shape[:2]:
            raise ParameterError(f"exclude mask shape {exclude.shape} != {s.shape[:2]}")
        mask = mask & ~exclude[:, :, None]
    return auroc_from_labels(s[mask], e[mask])


@dataclass
class RunRecord:
    stage: str
    cell: str
    seed: int
    method: str
    arm: str = "obs"
    auroc: float = float("nan")
    mse: float | None = None
    flags: str = ""
    wall_time: float = 0.0

    def __post_init__(self):
        if not (math.isnan(self.auroc) or 0.0 <= self.auroc <= 1.0):
            raise ParameterError(f"auroc {self.auroc} outside [0, 1]")
        if self.mse is not None and not (math.isfinite(self.mse) and self.mse >= 0):
            raise ParameterError(f"mse {self.mse} must be finite and nonnegative")

    @property
    def ok(self) -> bool:
        return not math.isnan(self.auroc)

    def sort_key(self):
        return (self.stage, self.cell, self.seed, self.method, self.arm)


LEDGER_FIELDS = tuple(f.name for f in fields(RunRecord))


def write_ledger(records: Iterable[RunRecord], path: str | Path, append: bool = False) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(LEDGER_FIELDS)
        for r in records:
            row = asdict(r)
            row["auroc"] = repr(float(r.auroc))
            row["mse"] = "" if r.mse is None else repr(float(r.mse))
            row["wall_time"] = f"{r.wall_time:.3f}"
            w.writerow([row[f] for f in LEDGER_FIELDS])


def read_ledger(path: str | Path) -> list[RunRecord]:
    with open(path, newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append(RunRecord(
                stage=row["stage"], cell=row["cell"], seed=int(row["seed"]),
                method=row["method"], arm=row["arm"], auroc=float(row["auroc"]),
                mse=float(row["mse"]) if row["mse"] else None, flags=row["flags"],
                wall_time=float(row["wall_time"] or 0.0),
            ))
    return out


@dataclass
class MetricSummary:
    metric: str
    mean_delta: float
    win_rate: float
    loss_rate: float
    tie_rate: float
    wins: int
    n_cells: int
    best_competitor: dict[str, str] = field(default_factory=dict)

    def best_tally(self) -> dict[str, int]:
        tally: dict[str, int] = defaultdict(int)
        for name in self.best_competitor.values():
            tally[name] += 1
        return dict(sorted(tally.items(), key=lambda kv: (-kv[1], kv[0])))


def cell_means(records: Sequence[RunRecord], metric: str) -> dict[tuple[str, str], float]:
    """Seed-averaged metric per (cell, method); records missing the metric are skipped."""
    acc: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in records:
        v = r.auroc if metric == "auroc" else r.mse
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        acc[(r.cell, r.method)].append(float(v))
    return {key: float(np.mean(vals)) for key, vals in acc.items()}


def win_rate_table(records: Sequence[RunRecord], reference_method: str,
                   metrics: Sequence[str] = ("auroc", "mse")) -> dict[str, MetricSummary]:
    """Reference vs best competitor per cell (seed means); ties are non-wins.

    AUROC delta is reference minus best competitor (higher favours the
    reference); MSE delta is reference minus best competitor (higher means
    the reference predicts worse).
    """
    if not records:
        raise ParameterError("no records")
    cells = sorted({r.cell for r in records})
    methods = sorted({r.method for r in records})
    competitors = [m for m in methods if m != reference_method]
    if not competitors:
        raise ParameterError("need at least one competitor method")
    out = {}
    for metric in metrics:
        means = cell_means(records, metric)
        missing = [(c, m) for c in cells for m in [reference_method, *competitors]
                   if (c, m) not in means]
        if missing:
            raise IncompleteGridError(missing)
        higher_better = metric == "auroc"
        deltas, wins, losses, best = [], 0, 0, {}
        for c in cells:
            ref = means[(c, reference_method)]
            comp = {m: means[(c, m)] for m in competitors}
            pick = min(comp, key=lambda m: (-comp[m] if higher_better else comp[m], m))
            best[c] = pick
            delta = ref - comp[pick]
            deltas.append(delta)
            better = delta > 0 if higher_better else delta < 0
            worse = delta < 0 if higher_better else delta > 0
            wins += better
            losses += worse
        n = len(cells)
        out[metric] = MetricSummary(metric, float(np.mean(deltas)), wins / n, losses / n,
                                    (n - wins - losses) / n, wins, n, best)
    return out


@dataclass
class PairedTestResult:
    label: str
    deltas: np.ndarray
    mean_delta: float
    p_ttest: float | None
    p_sign: float
    n: int
    degenerate_ttest: bool = False

    def format_gap(self) -> str:
        p = self.p_ttest if self.p_ttest is not None else self.p_sign
        return f"{self.mean_delta:+.3f} (p={p:.1e}, n={self.n})"


def paired_test(deltas_by_seed, label: str = "") -> PairedTestResult:
    """Two-sided one-sample t-test on per-seed deltas plus an exact sign test."""
    d = np.asarray(deltas_by_seed, dtype=float).ravel()
    if d.size < 3:
        raise ParameterError(f"paired test needs n >= 3, got {d.size}")
    if not np.all(np.isfinite(d)):
        raise ParameterError("deltas must be finite")
    n_pos, n_neg = int((d > 0).sum()), int((d < 0).sum())
    p_sign = 1.0 if n_pos + n_neg == 0 else float(
        stats.binomtest(n_pos, n_pos + n_neg, 0.5).pvalue)
    p_sign = min(p_sign, 1.0)
    degenerate = bool(np.ptp(d) == 0)
    p_t = None
    if not degenerate:
        p_t = max(float(stats.ttest_1samp(d, 0.0).pvalue), np.finfo(float).tiny)
    return PairedTestResult(label, d, float(d.mean()), p_t, p_sign, int(d.size), degenerate)
