"""VAR-style linear baselines: OLS, Ridge, Lasso and reduced-rank regression.

All four share one protocol. The series is standardized with statistics of
the fitting window, a lagged design is built, and hyperparameters are chosen
on the last 20% of design rows (time-ordered holdout). Scores come from a
refit on the full series at the chosen hyperparameters; the reported MSE is
the holdout MSE at those hyperparameters, in original units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import LaggedAdjacency, ScoreMatrix, Series
from ..errors import ParameterError
from .design import LaggedDesign, Standardizer, holdout_rows, lagged_design
from .lasso_cd import lasso_path

LAMBDA_GRID = np.logspace(-4, 1, 20)
MAX_RANK = 8
COND_LIMIT = 1e8
MIN_ROWS = 10


@dataclass
class TuningReport:
    """``criterion[e, g]`` is the holdout MSE of equation ``e`` at grid point ``g``.

    Per-equation rules have one row per equation; joint rules (RRR) have a
    single row. ``chosen`` holds one grid value per row.
    """

    grid: np.ndarray
    criterion: np.ndarray
    chosen: np.ndarray
    rule: str = "holdout-mse"
    relative: bool = False

    def to_rows(self) -> list[dict]:
        rows = []
        for e in range(self.criterion.shape[0]):
            for g, value in enumerate(self.grid):
                rows.append({"equation": e, "grid_value": float(value),
                             "criterion": float(self.criterion[e, g]),
                             "chosen": bool(value == self.chosen[e]), "rule": self.rule})
        return rows


@dataclass
class BaselineFit:
    scores: ScoreMatrix
    mse: float
    coef: np.ndarray  # (K, K, L) standardized coefficients, effect x cause x lag
    tuning: TuningReport | None = None
    flags: tuple[str, ...] = field(default=())


@dataclass
class _Split:
    train: LaggedDesign
    test: LaggedDesign
    test_raw: np.ndarray
    std: Standardizer
    full: LaggedDesign
    flags: list


def _prepare(series: Series, max_lag: int) -> _Split:
    values = series.values
    n_rows = values.shape[0] - max_lag
    if n_rows < MIN_ROWS:
        raise ParameterError(f"series of length {series.t} too short for max_lag={max_lag}")
    n_train = holdout_rows(n_rows)
    std = Standardizer.fit(values[:max_lag + n_train])
    design = lagged_design(std.transform(values), max_lag)
    flags = []
    if n_train <= series.k * max_lag:
        flags.append("underdetermined")
    full_std = Standardizer.fit(values)
    return _Split(design.rows(0, n_train), design.rows(n_train), values[max_lag + n_train:],
                  std, lagged_design(full_std.transform(values), max_lag), flags)


def _holdout_mse(split: _Split, coef: np.ndarray) -> np.ndarray:
    """Per-equation holdout MSE in original units for a (K*L, K) coefficient matrix."""
    pred = split.std.inverse(split.test.regressors @ coef)
    return np.mean((pred - split.test_raw) ** 2, axis=0)


def _ols_coef(x: np.ndarray, y: np.ndarray, flags: list | None = None) -> np.ndarray:
    coef, _, rank, sv = np.linalg.lstsq(x, y, rcond=None)
    if flags is not None:
        if rank < x.shape[1]:
            flags.append("rank_deficient")
        elif sv[-1] == 0 or sv[0] / sv[-1] > np.sqrt(COND_LIMIT):
            # singular values of X; cond(X'X) = (s_max / s_min)^2
            flags.append("near_singular")
    return coef


def _finish(split: _Split, coef_full: np.ndarray, mse: float, tuning=None, flags=()):
    tensor = split.full.coef_to_tensor(coef_full)
    scores = ScoreMatrix.from_raw(tensor, allow_zero=True)
    return BaselineFit(scores, float(mse), tensor, tuning, tuple(dict.fromkeys(flags)))


def _oracle_pick(split, fit_full: Callable[[int], np.ndarray], n_grid: int,
                 truth: LaggedAdjacency) -> int:
    from ..evalstats import auroc_flat_lag

    best, best_auc = 0, -1.0
    for g in range(n_grid):
        tensor = split.full.coef_to_tensor(fit_full(g))
        if not np.any(tensor[~np.eye(tensor.shape[0], dtype=bool)]):
            continue
        auc = auroc_flat_lag(ScoreMatrix.from_raw(tensor), truth)
        if auc > best_auc:
            best, best_auc = g, auc
    return best


def _check_select(select: str, truth):
    if select not in ("holdout", "oracle"):
        raise ParameterError(f"select must be 'holdout' or 'oracle', got {select!r}")
    if select == "oracle" and truth is None:
        raise ParameterError("oracle selection needs ground truth")


def fit_ols(series: Series, max_lag: int = 1) -> BaselineFit:
    """Per-equation least squares; minimum-norm solution when the design is deficient."""
    split = _prepare(series, max_lag)
    flags = list(split.flags)
    coef_train = _ols_coef(split.train.regressors, split.train.targets)
    mse = _holdout_mse(split, coef_train).mean()
    coef_full = _ols_coef(split.full.regressors, split.full.targets, flags)
    return _finish(split, coef_full, mse, flags=flags)


def _ridge_solver(x: np.ndarray, y: np.ndarray):
    n = x.shape[0]
    evals, evecs = np.linalg.eigh(x.T @ x / n)
    evals = np.clip(evals, 0.0, None)
    proj = evecs.T @ (x.T @ y / n)

    def solve(lam: float) -> np.ndarray:
        return evecs @ (proj / (evals + lam)[:, None])

    return solve


def fit_ridge(series: Series, max_lag: int = 1, lambda_grid=None, select: str = "holdout",
              truth: LaggedAdjacency | None = None) -> BaselineFit:
    """Ridge ``||y - Xb||^2/(2n) + lam/2 |b|^2`` with ``lam`` chosen per equation."""
    _check_select(select, truth)
    grid = np.asarray(LAMBDA_GRID if lambda_grid is None else lambda_grid, dtype=float)
    if np.any(grid <= 0):
        raise ParameterError("ridge lambdas must be positive")
    split = _prepare(series, max_lag)
    solve_train = _ridge_solver(split.train.regressors, split.train.targets)
    crit = np.stack([_holdout_mse(split, solve_train(lam)) for lam in grid], axis=1)
    solve_full = _ridge_solver(split.full.regressors, split.full.targets)
    if select == "oracle":
        g = _oracle_pick(split, lambda g: solve_full(grid[g]), grid.size, truth)
        pick = np.full(series.k, g)
    else:
        pick = np.argmin(crit, axis=1)
    coef_full = np.column_stack([solve_full(grid[g])[:, e] for e, g in enumerate(pick)])
    mse = crit[np.arange(series.k), pick].mean()
    report = TuningReport(grid, crit, grid[pick], "holdout-mse" if select == "holdout" else "oracle-auroc")
    return _finish(split, coef_full, mse, report, split.flags)


def _lasso_lambdas(c: np.ndarray, grid: np.ndarray) -> np.ndarray:
    lam_max = float(np.max(np.abs(c)))
    if lam_max == 0:
        lam_max = 1.0
    return np.sort(lam_max * grid)[::-1]


def _lasso_equation(x: np.ndarray, y: np.ndarray, lambdas: np.ndarray, strict: bool = True):
    n = x.shape[0]
    G = x.T @ x / n
    c = x.T @ y / n
    return lasso_path(G, c, float(y @ y / n), lambdas, strict=strict)


def fit_lasso(series: Series, max_lag: int = 1, lambda_grid=None, select: str = "holdout",
              truth: LaggedAdjacency | None = None) -> BaselineFit:
    """Per-equation Lasso by coordinate descent; grid is relative to each equation's ``max|X'y|/n``."""
    _check_select(select, truth)
    rel = np.sort(np.asarray(LAMBDA_GRID if lambda_grid is None else lambda_grid, dtype=float))[::-1]
    if np.any(rel < 0):
        raise ParameterError("lasso lambdas must be nonnegative")
    split = _prepare(series, max_lag)
    flags = list(split.flags)
    k, p = series.k, split.train.regressors.shape[1]
    xtr, xfull = split.train.regressors, split.full.regressors
    crit = np.empty((k, rel.size))
    train_coefs = np.empty((k, rel.size, p))
    converged = np.empty((k, rel.size), dtype=bool)
    for e in range(k):
        y = split.train.targets[:, e]
        lambdas = _lasso_lambdas(xtr.T @ y / len(y), rel)
        path = _lasso_equation(xtr, y, lambdas, strict=False)
        train_coefs[e], converged[e] = path[0], path[4]
    for g in range(rel.size):
        crit[:, g] = _holdout_mse(split, train_coefs[:, g, :].T)
    if not converged.all():
        # unconverged grid points are excluded from selection, never silently used
        flags.append("lasso_grid_unconverged")
        crit = np.where(converged, crit, np.inf)

    full_paths = None
    if select == "oracle":
        full_paths = np.empty((k, rel.size, p))
        for e in range(k):
            y = split.full.targets[:, e]
            full_paths[e] = _lasso_equation(xfull, y, _lasso_lambdas(xfull.T @ y / len(y), rel))[0]
        g = _oracle_pick(split, lambda g: full_paths[:, g, :].T, rel.size, truth)
        pick = np.full(k, g)
    else:
        pick = np.argmin(crit, axis=1)

    coef_full = np.empty((p, k))
    chosen = np.empty(k)
    for e in range(k):
        y = split.full.targets[:, e]
        lambdas = _lasso_lambdas(xfull.T @ y / len(y), rel)
        chosen[e] = rel[pick[e]]
        if full_paths is not None:
            coef_full[:, e] = full_paths[e, pick[e]]
        else:
            coef_full[:, e] = _lasso_equation(xfull, y, lambdas[:pick[e] + 1])[0][-1]
    mse = crit[np.arange(k), pick].mean()
    report = TuningReport(rel, crit, chosen, "holdout-mse" if select == "holdout" else "oracle-auroc",
                          relative=True)
    return _finish(split, coef_full, mse, report, flags)


def rrr_coef(x: np.ndarray, y: np.ndarray, rank: int, ols: np.ndarray | None = None) -> np.ndarray:
    """OLS coefficients projected onto the top ``rank`` right singular vectors of the fit."""
    b = _ols_coef(x, y) if ols is None else ols
    _, _, vt = np.linalg.svd(x @ b, full_matrices=False)
    v = vt[:rank].T
    return b @ v @ v.T


def fit_rrr(series: Series, max_lag: int = 1, rank_grid=None, select: str = "holdout",
            truth: LaggedAdjacency | None = None) -> BaselineFit:
    """Reduced-rank regression with a single rank chosen jointly over equations."""
    _check_select(select, truth)
    k = series.k
    grid = np.asarray(rank_grid if rank_grid is not None else range(1, min(k, MAX_RANK) + 1),
                      dtype=int)
    if np.any(grid < 1):
        raise ParameterError("ranks must be >= 1")
    split = _prepare(series, max_lag)
    ols_train = _ols_coef(split.train.regressors, split.train.targets)
    crit = np.array([[_holdout_mse(split, rrr_coef(split.train.regressors, split.train.targets,
                                                    r, ols_train)).mean() for r in grid]])
    flags = list(split.flags)
    ols_full = _ols_coef(split.full.regressors, split.full.targets, flags)
    if select == "oracle":
        g = _oracle_pick(split, lambda g: rrr_coef(split.full.regressors, split.full.targets,
                                                   int(grid[g]), ols_full), grid.size, truth)
    else:
        g = int(np.argmin(crit[0]))
    coef_full = rrr_coef(split.full.regressors, split.full.targets, int(grid[g]), ols_full)
    report = TuningReport(grid, crit, np.array([grid[g]]),
                          "holdout-mse" if select == "holdout" else "oracle-auroc")
    return _finish(split, coef_full, crit[0, g], report, flags)
