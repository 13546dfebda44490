"""Method registry: built-in scorers, user plug-ins and file-backed score CSVs.

A method is called as ``fn(series, max_lag, seed, **options)`` and returns a
:class:`MethodOutput` (or a bare :class:`ScoreMatrix`). Plan entries may carry
options after the base name, e.g. ``bottleneck:d=half:lam=0.001`` or
``bottleneck:L=5``. Option values ``half``, ``k`` and ``2k`` for ``d`` are
resolved against the series width.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from ..baselines import fit_lasso, fit_ols, fit_ridge, fit_rrr, granger_bivariate, pcmci_lite
from ..baselines.design import holdout_rows
from ..bottleneck import extract, fit_predict_mse, train
from ..core import ScoreMatrix, Series
from ..errors import FalsibenchError, ParameterError, RegistrationError


@dataclass
class MethodOutput:
    scores: ScoreMatrix
    mse: float | None = None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ResolvedMethod:
    name: str
    base: str
    fn: Callable
    options: dict

    def __call__(self, series: Series, max_lag: int, seed: int, **context) -> MethodOutput:
        opts = dict(self.options)
        lag = int(opts.pop("L", max_lag))
        params = inspect.signature(self.fn).parameters
        takes_any = any(p.kind is p.VAR_KEYWORD for p in params.values())
        for key, value in context.items():
            if takes_any or key in params:
                opts.setdefault(key, value)
        out = self.fn(series, lag, seed, **opts)
        if isinstance(out, ScoreMatrix):
            out = MethodOutput(out)
        if not isinstance(out, MethodOutput):
            raise ParameterError(f"method {self.name!r} returned {type(out).__name__}")
        return out


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_method_name(name: str) -> tuple[str, dict]:
    base, *parts = name.split(":")
    options = {}
    for part in parts:
        key, sep, value = part.partition("=")
        if not sep or not key:
            raise ParameterError(f"malformed method option {part!r} in {name!r}")
        options[key] = _parse_value(value)
    return base, options


def resolve_width(d, k: int) -> int | None:
    if d is None:
        return None
    if d == "half":
        return math.ceil(k / 2)
    if d == "k":
        return k
    if d == "2k":
        return 2 * k
    if isinstance(d, int) and d >= 1:
        return d
    raise ParameterError(f"bottleneck width must be a positive int, 'half', 'k' or '2k', got {d!r}")


def _bottleneck(series: Series, max_lag: int, seed: int, d=None, lam=None,
                with_mse: bool = False, **_) -> MethodOutput:
    width = resolve_width(d, series.k)
    model = train(series, d=width, max_lag=max_lag, lambda_sparse=lam, seed=seed)
    scores = extract(model)
    mse = None
    if with_mse:
        # same time-ordered split as the regression baselines
        n_train = holdout_rows(series.t - max_lag)
        fitted = train(series.slice(0, max_lag + n_train), d=width, max_lag=max_lag,
                       lambda_sparse=lam, seed=seed)
        mse = fit_predict_mse(fitted, series.slice(n_train))
    return MethodOutput(scores, mse)


def _linear(fitter, tuned: bool):
    def run(series: Series, max_lag: int, seed: int, select: str = "holdout",
            truth=None, **_) -> MethodOutput:
        if tuned:
            fit = fitter(series, max_lag, select=select, truth=truth)
        else:
            fit = fitter(series, max_lag)
        return MethodOutput(fit.scores, fit.mse, fit.flags + fit.scores.flags)

    run.__name__ = fitter.__name__
    return run


def _granger(series: Series, max_lag: int, seed: int, **_) -> MethodOutput:
    s = granger_bivariate(series, max_lag)
    return MethodOutput(s, None, s.flags)


def _pcmci(series: Series, max_lag: int, seed: int, alpha_pc: float = 0.05, **_) -> MethodOutput:
    s = pcmci_lite(series, max_lag, alpha_pc)
    return MethodOutput(s, None, s.flags)


class MethodRegistry:
    def __init__(self, builtins: bool = True):
        self._methods: dict[str, Callable] = {}
        if builtins:
            self.register("bottleneck", _bottleneck)
            self.register("ols", _linear(fit_ols, False))
            self.register("ridge", _linear(fit_ridge, True))
            self.register("lasso", _linear(fit_lasso, True))
            self.register("rrr", _linear(fit_rrr, True))
            self.register("granger", _granger)
            self.register("pcmci_lite", _pcmci)

    def register(self, name: str, scorer: Callable) -> None:
        if not name or ":" in name:
            raise RegistrationError(f"invalid method name {name!r}")
        if name in self._methods:
            raise RegistrationError(f"method {name!r} is already registered")
        if not callable(scorer):
            raise RegistrationError(f"scorer for {name!r} is not callable")
        try:
            inspect.signature(scorer).bind(None, 1, 0)
        except TypeError as exc:
            raise RegistrationError(
                f"scorer for {name!r} must accept (series, max_lag, seed): {exc}") from exc
        self._methods[name] = scorer

    def register_file(self, name: str, path: str | Path) -> None:
        """A method that always returns the scores stored in ``path`` (validated now)."""
        try:
            scores = ScoreMatrix.from_csv(path)
        except FalsibenchError as exc:
            raise RegistrationError(f"file-backed method {name!r}: {exc}") from exc

        def from_file(series: Series, max_lag: int, seed: int, **_) -> MethodOutput:
            if series.k != scores.k:
                raise ParameterError(f"{path} holds K={scores.k} scores, series has K={series.k}")
            return MethodOutput(scores, None, ("file_backed",))

        self.register(name, from_file)

    def names(self) -> list[str]:
        return sorted(self._methods)

    def __contains__(self, name: str) -> bool:
        return name in self._methods

    def resolve(self, name: str) -> ResolvedMethod:
        base, options = parse_method_name(name)
        if base not in self._methods:
            raise RegistrationError(f"unknown method {base!r}; registered: {self.names()}")
        if base == "bottleneck" and "d" in options and options["d"] not in ("half", "k", "2k"):
            resolve_width(options["d"], 1)
        return ResolvedMethod(name, base, self._methods[base], options)


def default_registry() -> MethodRegistry:
    return MethodRegistry()
