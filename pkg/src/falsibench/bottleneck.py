"""Linear and lagged bottleneck predictors and the weight-product readout.

The model predicts the next standardized step as ``W_out @ W_in @ z`` where
``z`` stacks the last ``max_lag`` standardized observations. Training is
full-batch Adam on mean squared error plus an L1 penalty on both weight
matrices. Because the model is linear, the data only enter through second
moments, so each epoch costs O(d * K * L * K) regardless of series length.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines.design import Standardizer, lagged_design
from .core import ScoreMatrix, Series
from .errors import ParameterError, TrainingDivergenceError


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-2
    epochs: int = 2000
    lambda_sparse: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class BottleneckModel:
    w_in: np.ndarray  # d x (K * L), block tau-1 = columns [(tau-1)K, tau K)
    w_out: np.ndarray  # K x d
    max_lag: int
    config: TrainConfig
    seed: int
    standardizer: Standardizer
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    init_w_in: np.ndarray | None = None
    init_w_out: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.w_in.shape[0]

    @property
    def k(self) -> int:
        return self.w_out.shape[0]

    def product(self) -> np.ndarray:
        """``W_out @ W_in`` as a (K, K*L) matrix."""
        return self.w_out @ self.w_in

    def lag_blocks(self, w_in: np.ndarray | None = None) -> list[np.ndarray]:
        w_in = self.w_in if w_in is None else w_in
        k = self.k
        return [w_in[:, tau * k:(tau + 1) * k] for tau in range(self.max_lag)]

    def predict_standardized(self, z_lags: np.ndarray) -> np.ndarray:
        return z_lags @ self.product().T

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["matrix", "row", "col", "value"])
            for name, mat in (("w_in", self.w_in), ("w_out", self.w_out)):
                for r, c in np.ndindex(mat.shape):
                    w.writerow([name, r, c, repr(float(mat[r, c]))])


@dataclass(frozen=True)
class Moments:
    """Second moments of a standardized lagged design."""

    cxx: np.ndarray
    cxy: np.ndarray
    cyy: float
    k: int


def _moments(x: np.ndarray, y: np.ndarray) -> Moments:
    n = x.shape[0]
    return Moments(x.T @ x / n, x.T @ y / n, float(np.sum(y * y) / n), y.shape[1])


def loss_and_grads(w_in, w_out, mom: Moments, lam: float, smooth_only: bool = False):
    """Objective ``||Y - X M||^2 / (n K) + lam (|W_in|_1 + |W_out|_1)``, ``M = W_in^T W_out^T``.

    Returns ``(loss, mse, grad_in, grad_out)``. Gradients include the L1
    subgradient ``lam * sign(w)`` unless ``smooth_only`` is set; the loss
    always includes the penalty.
    """
    m = w_in.T @ w_out.T
    cm = mom.cxx @ m
    mse = (mom.cyy - 2.0 * np.sum(m * mom.cxy) + np.sum(m * cm)) / mom.k
    g = (2.0 / mom.k) * (cm - mom.cxy)
    grad_in = w_out.T @ g.T
    grad_out = g.T @ w_in.T
    loss = mse + lam * (np.abs(w_in).sum() + np.abs(w_out).sum())
    if lam and not smooth_only:
        grad_in = grad_in + lam * np.sign(w_in)
        grad_out = grad_out + lam * np.sign(w_out)
    return loss, mse, grad_in, grad_out


def _check_series(series: Series, max_lag: int):
    if max_lag < 1:
        raise ParameterError(f"max_lag must be >= 1, got {max_lag}")
    if series.t <= max_lag + 10:
        raise ParameterError(f"series length {series.t} must exceed max_lag + 10")


def train(series: Series, d: int | None = None, max_lag: int = 1,
          lambda_sparse: float | None = None, train_cfg: TrainConfig | None = None,
          seed: int = 0) -> BottleneckModel:
    """Fit a bottleneck predictor on next-step MSE; ``d`` defaults to K."""
    cfg = train_cfg or TrainConfig()
    if lambda_sparse is not None:
        cfg = replace(cfg, lambda_sparse=lambda_sparse)
    _check_series(series, max_lag)
    k = series.k
    d = k if d is None else int(d)
    if d < 1:
        raise ParameterError(f"bottleneck width must be >= 1, got {d}")
    std = Standardizer.fit(series.values)
    design = lagged_design(std.transform(series.values), max_lag)
    mom = _moments(design.regressors, design.targets)

    rng = np.random.default_rng(seed)
    sd = 1.0 / np.sqrt(max(d, k))
    w_in = rng.normal(0.0, sd, (d, k * max_lag))
    w_out = rng.normal(0.0, sd, (k, d))
    init_in, init_out = w_in.copy(), w_out.copy()

    params = [w_in, w_out]
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, lr, lam = cfg.beta1, cfg.beta2, cfg.lr, cfg.lambda_sparse
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        loss, _, g_in, g_out = loss_and_grads(params[0], params[1], mom, lam, smooth_only=True)
        if not np.isfinite(loss):
            raise TrainingDivergenceError(epoch)
        history[epoch] = loss
        step = lr * _schedule(epoch, cfg.epochs)
        c1 = 1.0 - b1 ** (epoch + 1)
        c2 = 1.0 - b2 ** (epoch + 1)
        for p, g, a, v in zip(params, (g_in, g_out), m1, m2):
            a *= b1
            a += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            scaled = step / (np.sqrt(v / c2) + cfg.eps)
            p -= scaled * (a / c1)
            if lam:
                # proximal L1 step in the same per-parameter metric
                np.copyto(p, np.sign(p) * np.maximum(np.abs(p) - scaled * lam, 0.0))
    final = loss_and_grads(params[0], params[1], mom, lam)[0]
    if not np.isfinite(final):
        raise TrainingDivergenceError(cfg.epochs)
    return BottleneckModel(params[0], params[1], max_lag, cfg, seed, std, history,
                           init_in, init_out)


def _schedule(epoch: int, epochs: int) -> float:
    """Cosine decay to zero; keeps the tail of training monotone."""
    return 0.5 * (1.0 + np.cos(np.pi * epoch / epochs))


def extract(model: BottleneckModel, initial: bool = False) -> ScoreMatrix:
    """``S[i, j, tau-1] = |W_out W_in^(tau)|[i, j]``, zero diagonal, max-normalized.

    ``initial=True`` reads the weights at initialization instead (diagnostic).
    """
    w_out = model.init_w_out if initial else model.w_out
    w_in = model.init_w_in if initial else model.w_in
    if w_out is None or w_in is None:
        raise ParameterError("model carries no initial weights")
    blocks = [np.abs(w_out @ b) for b in model.lag_blocks(w_in)]
    return ScoreMatrix.from_raw(np.stack(blocks, axis=2))


def fit_predict_mse(model: BottleneckModel, heldout: Series) -> float:
    """Mean squared next-step error over ``heldout`` in the series' original units."""
    if heldout.k != model.k:
        raise ParameterError(f"heldout has K={heldout.k}, model expects K={model.k}")
    if heldout.t <= model.max_lag + 1:
        raise ParameterError("heldout series too short")
    std = model.standardizer
    design = lagged_design(std.transform(heldout.values), model.max_lag)
    pred = std.inverse(model.predict_standardized(design.regressors))
    actual = heldout.values[model.max_lag:]
    return float(np.mean((pred - actual) ** 2))


def training_mse(model: BottleneckModel, series: Series) -> float:
    return fit_predict_mse(model, series)
