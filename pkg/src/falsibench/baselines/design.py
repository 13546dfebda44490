"""Lagged design matrices and the time-ordered holdout split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError

HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class LaggedDesign:
    """``targets[r] = x[max_lag + r]``; ``regressors[r]`` stacks ``x[t-1], ..., x[t-L]``.

    ``columns[c] = (variable, lag)`` for regressor column ``c``; column
    ``(tau - 1) * K + j`` holds variable ``j`` at lag ``tau``.
    """

    targets: np.ndarray
    regressors: np.ndarray
    columns: tuple[tuple[int, int], ...]
    max_lag: int

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    @property
    def k(self) -> int:
        return self.targets.shape[1]

    def rows(self, start: int | None = None, stop: int | None = None) -> "LaggedDesign":
        return LaggedDesign(self.targets[start:stop], self.regressors[start:stop], self.columns,
                            self.max_lag)

    def coef_to_tensor(self, coef: np.ndarray) -> np.ndarray:
        """Regressor-by-target coefficients (K*L x K) -> (K x K x L) tensor (effect, cause, lag)."""
        k, lags = self.k, self.max_lag
        return np.transpose(coef.reshape(lags, k, k), (2, 1, 0))


def lagged_design(values: np.ndarray, max_lag: int) -> LaggedDesign:
    values = np.asarray(values, dtype=float)
    t, k = values.shape
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    if t <= max_lag:
        raise ParameterError(f"series of length {t} too short for max_lag={max_lag}")
    regressors = np.hstack([values[max_lag - tau:t - tau] for tau in range(1, max_lag + 1)])
    columns = tuple((j, tau) for tau in range(1, max_lag + 1) for j in range(k))
    return LaggedDesign(values[max_lag:], regressors, columns, max_lag)


def holdout_rows(n_rows: int, fraction: float = HOLDOUT_FRACTION) -> int:
    """Number of leading design rows used for fitting; the remainder is held out."""
    n_train = int(np.floor((1.0 - fraction) * n_rows))
    if n_train < 2 or n_rows - n_train < 1:
        raise ParameterError(f"{n_rows} design rows cannot be split for holdout")
    return n_train


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        mean = values.mean(axis=0)
        scale = values.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.scale

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.scale + self.mean
