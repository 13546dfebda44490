"""Data containers shared by generators, methods and evaluation.

Index convention used everywhere: ``edges[i, j, tau - 1]`` / ``scores[i, j, tau - 1]``
means "variable ``j`` at lag ``tau`` drives variable ``i``".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DegenerateExtractionError, ParameterError


@dataclass
class Series:
    """A ``T x K`` multivariate time series."""

    values: np.ndarray
    var_names: tuple[str, ...] = ()
    dt: float = 1.0
    intervention_log: Any = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ParameterError(f"series values must be 2-D, got shape {values.shape}")
        t, k = values.shape
        if t < 2 or k < 2:
            raise ParameterError(f"series needs T >= 2 and K >= 2, got T={t}, K={k}")
        if not np.all(np.isfinite(values)):
            raise ParameterError("series contains non-finite entries")
        self.values = values
        if not self.var_names:
            self.var_names = tuple(f"x{i}" for i in range(k))
        self.var_names = tuple(str(n) for n in self.var_names)
        if len(self.var_names) != k:
            raise ParameterError(f"{len(self.var_names)} names for {k} variables")

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int | None = None, stop: int | None = None) -> "Series":
        return Series(self.values[start:stop].copy(), self.var_names, self.dt)

    def permuted(self, perm: Sequence[int]) -> "Series":
        perm = list(perm)
        return Series(self.values[:, perm].copy(), tuple(self.var_names[p] for p in perm), self.dt)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.var_names)
            for row in self.values:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, dt: float = 1.0) -> "Series":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise ParameterError(f"{path}: no data rows")
        return cls(np.array([[float(v) for v in r] for r in rows[1:]]), tuple(rows[0]), dt)


@dataclass
class LaggedAdjacency:
    """Boolean ground truth ``edges[i, j, tau-1]``: ``j`` at lag ``tau`` causes ``i``."""

    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=bool)
        if edges.ndim == 2:
            edges = edges[:, :, None]
        if edges.ndim != 3 or edges.shape[0] != edges.shape[1] or edges.shape[2] < 1:
            raise ParameterError(f"adjacency must be K x K x L, got shape {edges.shape}")
        self.edges = edges

    @property
    def k(self) -> int:
        return self.edges.shape[0]

    @property
    def max_lag(self) -> int:
        return self.edges.shape[2]

    def collapsed(self) -> "LaggedAdjacency":
        """Any-lag OR collapse to a static (L=1) adjacency."""
        return LaggedAdjacency(self.edges.any(axis=2, keepdims=True))

    def off_diagonal(self) -> np.ndarray:
        """Flat boolean vector over all (i != j, tau) cells."""
        return self.edges[off_diagonal_mask(self.k, self.max_lag)]

    def n_edges(self, include_self: bool = False) -> int:
        if include_self:
            return int(self.edges.sum())
        return int(self.off_diagonal().sum())

    def is_evaluable(self) -> bool:
        flat = self.off_diagonal()
        return bool(flat.any() and not flat.all())

    def permuted(self, perm: Sequence[int]) -> "LaggedAdjacency":
        perm = np.asarray(perm)
        return LaggedAdjacency(self.edges[np.ix_(perm, perm)].copy())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["effect", "cause", "lag", "is_edge"])
            for i, j, tau in np.ndindex(self.edges.shape):
                w.writerow([i, j, tau + 1, int(self.edges[i, j, tau])])

    @classmethod
    def from_csv(cls, path: str | Path) -> "LaggedAdjacency":
        rows = _read_indexed_csv(path, "is_edge")
        k, lags = _grid_shape(rows)
        edges = np.zeros((k, k, lags), dtype=bool)
        for i, j, tau, v in rows:
            edges[i, j, tau - 1] = bool(int(v))
        return cls(edges)


def off_diagonal_mask(k: int, max_lag: int) -> np.ndarray:
    mask = ~np.eye(k, dtype=bool)
    return np.repeat(mask[:, :, None], max_lag, axis=2)


@dataclass
class ScoreMatrix:
    """Nonnegative edge-strength scores ``scores[i, j, tau-1]`` (j -> i).

    Use :meth:`from_raw` to build a normalized instance from arbitrary
    magnitudes; the constructor only validates.
    """

    scores: np.ndarray
    normalization: str = "max"
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[0] != s.shape[1]:
            raise ParameterError(f"score tensor must be K x K x L, got {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ParameterError("scores must be finite and nonnegative")
        self.scores = s

    @classmethod
    def from_raw(cls, raw: np.ndarray, normalize: bool = True, flags=(),
                 allow_zero: bool = False) -> "ScoreMatrix":
        s = np.abs(np.asarray(raw, dtype=float))
        if s.ndim == 2:
            s = s[:, :, None]
        s = s.copy()
        k = s.shape[0]
        s[np.arange(k), np.arange(k), :] = 0.0
        if not normalize:
            return cls(s, "none", tuple(flags))
        peak = s.max()
        if not peak > 0:
            if allow_zero:
                return cls(s, "none", tuple(flags) + ("all_zero",))
            raise DegenerateExtractionError("off-diagonal scores are identically zero")
        return cls(s / peak, "max", tuple(flags))

    @property
    def k(self) -> int:
        return self.scores.shape[0]

    @property
    def max_lag(self) -> int:
        return self.scores.shape[2]

    def collapsed(self) -> "ScoreMatrix":
        """Max-over-lags collapse to a static score matrix."""
        return ScoreMatrix(self.scores.max(axis=2, keepdims=True), self.normalization, self.flags)

    def permuted(self, perm: Sequence[int]) -> "ScoreMatrix":
        perm = np.asarray(perm)
        return ScoreMatrix(self.scores[np.ix_(perm, perm)].copy(), self.normalization, self.flags)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["effect", "cause", "lag", "score"])
            for i, j, tau in np.ndindex(self.scores.shape):
                w.writerow([i, j, tau + 1, repr(float(self.scores[i, j, tau]))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ScoreMatrix":
        rows = _read_indexed_csv(path, "score")
        k, lags = _grid_shape(rows)
        s = np.full((k, k, lags), np.nan)
        for i, j, tau, v in rows:
            s[i, j, tau - 1] = v
        if np.isnan(s).any():
            raise ParameterError(f"{path}: score grid has missing cells")
        return cls.from_raw(s)


def _read_indexed_csv(path, value_col: str) -> list[tuple[int, int, int, float]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            needed = {"effect", "cause", "lag", value_col}
            if reader.fieldnames is None or not needed <= set(reader.fieldnames):
                raise ParameterError(f"{path}: expected columns {sorted(needed)}")
            rows = [(int(r["effect"]), int(r["cause"]), int(r["lag"]), float(r[value_col]))
                    for r in reader]
    except (OSError, ValueError, TypeError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"{path}: {exc}") from exc
    if not rows:
        raise ParameterError(f"{path}: no rows")
    return rows


def _grid_shape(rows) -> tuple[int, int]:
    k = max(max(i, j) for i, j, _, _ in rows) + 1
    lags = max(tau for _, _, tau, _ in rows)
    if min(min(i, j) for i, j, _, _ in rows) < 0 or min(tau for _, _, tau, _ in rows) < 1:
        raise ParameterError("negative index or lag < 1 in indexed CSV")
    return k, lags
