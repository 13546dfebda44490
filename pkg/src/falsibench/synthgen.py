"""Seeded synthetic generators with exact ground-truth adjacency.

Every generator is a pure function of its arguments. Structure (support and
coefficients) and innovations come from two independent child streams of the
seed, so the same seed always gives bit-identical output.

The linear families and the CauseMe-style family share one structural
simulator (:class:`VarProcess`); Lorenz-96 has its own RK4 integrator
(:class:`LorenzProcess`). Both accept an optional intervention object with an
``apply(t, x) -> held_index_or_None`` method, which is how
:mod:`falsibench.intervene` injects episodes without duplicating the dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .core import LaggedAdjacency, Series
from .errors import GenerationError, IntegrationBlowupError, ParameterError

FAMILIES = ("var_chain", "var_random", "regime_switch", "lorenz96", "causeme_nonlinear")
STRUCTURAL_FAMILIES = FAMILIES  # every shipped family accepts interventions

TARGET_RADIUS = 0.9
COEF_RANGE = (0.2, 0.8)
CHAIN_SELF = 0.5
CHAIN_CROSS = 0.5
SWITCH_PROB = 0.02
VAR_BURN_IN = 200
MAX_REDRAWS = 100
OVERFLOW_GUARD = 1e6

LORENZ_DT = 0.01
LORENZ_THIN = 10
LORENZ_BURN_IN = 1000
LORENZ_INIT_SD = 0.5


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    k: int
    t: int
    max_lag: int = 1
    density: float = 0.1
    nonlinearity: float = 0.0
    forcing_f: float = 10.0
    seed: int = 0

    def validate(self) -> "GeneratorSpec":
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown generator family {self.family!r}")
        if self.k < 2:
            raise ParameterError(f"k must be >= 2, got {self.k}")
        if self.t < 2:
            raise ParameterError(f"t must be >= 2, got {self.t}")
        if self.max_lag < 1:
            raise ParameterError(f"max_lag must be >= 1, got {self.max_lag}")
        if not 0 < self.density <= 1:
            raise ParameterError(f"density must lie in (0, 1], got {self.density}")
        if not 0 <= self.nonlinearity <= 1:
            raise ParameterError(f"nonlinearity must lie in [0, 1], got {self.nonlinearity}")
        if self.family == "lorenz96" and self.k < 4:
            raise ParameterError("lorenz96 needs k >= 4")
        if self.family == "var_chain" and self.t < 20:
            raise ParameterError("var_chain needs t >= 20")
        if self.family != "lorenz96" and self.forcing_f != 10.0:
            raise ParameterError("forcing_f only applies to lorenz96")
        if self.family != "causeme_nonlinear" and self.nonlinearity != 0.0:
            raise ParameterError("nonlinearity only applies to causeme_nonlinear")
        return self

    def with_t(self, t: int) -> "GeneratorSpec":
        return replace(self, t=t)


def phi(u: np.ndarray, alpha: float) -> np.ndarray:
    """Interpolates identity (alpha=0) and ``tanh(2u)`` (alpha=1)."""
    if alpha == 0:
        return u
    return (1.0 - alpha) * u + alpha * np.tanh(2.0 * u)


def companion(coefs: np.ndarray) -> np.ndarray:
    """Stacked companion matrix of lag blocks ``coefs[tau-1]`` (L x K x K)."""
    lags, k, _ = coefs.shape
    top = np.concatenate(list(coefs), axis=1)
    if lags == 1:
        return top
    below = np.eye(k * (lags - 1), k * lags)
    return np.vstack([top, below])


def spectral_radius(coefs: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion(coefs)))))


def rescale_to_radius(coefs: np.ndarray, target: float = TARGET_RADIUS) -> np.ndarray:
    """Uniformly scale all lag blocks so the companion spectral radius equals ``target``."""
    rho = spectral_radius(coefs)
    if rho == 0:
        raise GenerationError("nilpotent coefficient draw, cannot rescale")
    hi = 1.0
    while spectral_radius(hi * coefs) < target:
        hi *= 2.0
    s = brentq(lambda c: spectral_radius(c * coefs) - target, 0.0, hi, xtol=1e-14, rtol=1e-14)
    return s * coefs


def _split_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    structure, noise = ss.spawn(2)
    return np.random.default_rng(structure), np.random.default_rng(noise)


def _draw_signs(rng: np.random.Generator, size) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size)


def _draw_support(rng: np.random.Generator, k: int, max_lag: int, density: float) -> np.ndarray:
    offdiag = ~np.eye(k, dtype=bool)
    for _ in range(MAX_REDRAWS):
        support = (rng.random((k, k, max_lag)) < density) & offdiag[:, :, None]
        adj = LaggedAdjacency(support)
        if adj.is_evaluable():
            return support
    raise GenerationError(
        f"no evaluable support (k={k}, max_lag={max_lag}, density={density}) "
        f"after {MAX_REDRAWS} draws"
    )


def _coefs_on_support(rng: np.random.Generator, support: np.ndarray,
                      signs: np.ndarray | None = None) -> np.ndarray:
    """Coefficient blocks (L x K x K) on ``support`` plus positive lag-1 self-memory."""
    k = support.shape[0]
    if signs is None:
        signs = _draw_signs(rng, support.shape)
    coefs = np.where(support, rng.uniform(*COEF_RANGE, support.shape) * signs, 0.0)
    coefs[np.arange(k), np.arange(k), 0] = rng.uniform(*COEF_RANGE, k)
    return rescale_to_radius(np.moveaxis(coefs, 2, 0))


class VarProcess:
    """``x_t = sum_tau A_tau(r_t) phi(x_{t-tau}) + eps_t`` with optional regime switching."""

    def __init__(self, coefs, adjacency: LaggedAdjacency, alpha: float = 0.0,
                 switch_prob: float = 0.0, burn_in: int = VAR_BURN_IN):
        coefs = np.asarray(coefs, dtype=float)
        if coefs.ndim == 3:
            coefs = coefs[None]
        self.coefs = coefs  # (regimes, L, K, K)
        self.adjacency = adjacency
        self.alpha = float(alpha)
        self.switch_prob = float(switch_prob)
        self.burn_in = burn_in
        self.dt = 1.0

    @property
    def k(self) -> int:
        return self.coefs.shape[-1]

    @property
    def lags(self) -> int:
        return self.coefs.shape[1]

    def regime_path(self, n: int, rng: np.random.Generator) -> np.ndarray:
        path = np.zeros(n, dtype=int)
        if self.coefs.shape[0] == 1:
            return path
        flips = rng.random(n) < self.switch_prob
        return np.cumsum(flips) % self.coefs.shape[0]

    def simulate(self, n: int, noise_rng: np.random.Generator, intervention=None) -> np.ndarray:
        """Simulate ``n`` post-burn-in steps; intervention times are post-burn-in indices."""
        k, lags = self.k, self.lags
        total = self.burn_in + n
        eps = noise_rng.standard_normal((total, k))
        regimes = self.regime_path(total, noise_rng)
        # flat[r] @ concat(x_{t-1}, ..., x_{t-L})
        flat = np.concatenate([self.coefs[:, tau] for tau in range(lags)], axis=2)
        x = np.zeros((total, k))
        x[:lags] = eps[:lags]
        alpha = self.alpha
        for t in range(lags, total):
            hist = x[t - lags:t][::-1].ravel()
            val = flat[regimes[t]] @ phi(hist, alpha) + eps[t]
            if intervention is not None and t >= self.burn_in:
                intervention.apply(t - self.burn_in, val)
            if np.max(np.abs(val)) > OVERFLOW_GUARD or not np.all(np.isfinite(val)):
                raise GenerationError(f"trajectory exceeded overflow guard at step {t}")
            x[t] = val
        return x[self.burn_in:]


def lorenz96_rhs(x: np.ndarray, forcing: float) -> np.ndarray:
    return (np.roll(x, -1) - np.roll(x, 2)) * np.roll(x, 1) - x + forcing


def rk4_step(x: np.ndarray, h: float, forcing: float, held: int | None = None) -> np.ndarray:
    def f(state):
        d = lorenz96_rhs(state, forcing)
        if held is not None:
            d[held] = 0.0
        return d

    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def lorenz96_adjacency(k: int) -> LaggedAdjacency:
    edges = np.zeros((k, k, 1), dtype=bool)
    for i in range(k):
        for j in ((i - 2) % k, (i - 1) % k, (i + 1) % k):
            edges[i, j, 0] = True
    return LaggedAdjacency(edges)


class LorenzProcess:
    def __init__(self, k: int, forcing: float, x0: np.ndarray, dt: float = LORENZ_DT,
                 thin: int = LORENZ_THIN, burn_in: int = LORENZ_BURN_IN):
        self.k = k
        self.forcing = float(forcing)
        self.x0 = np.asarray(x0, dtype=float)
        self.h = dt
        self.thin = thin
        self.burn_in = burn_in
        self.dt = dt * thin
        self.adjacency = lorenz96_adjacency(k)

    def simulate(self, n: int, noise_rng=None, intervention=None) -> np.ndarray:
        x = self.x0.copy()
        step = 0
        for _ in range(self.burn_in):
            x = rk4_step(x, self.h, self.forcing)
            step += 1
            if not np.all(np.isfinite(x)):
                raise IntegrationBlowupError(step)
        out = np.empty((n, self.k))
        for t in range(n):
            held = None
            if intervention is not None:
                held = intervention.apply(t, x)
            out[t] = x
            for _ in range(self.thin):
                x = rk4_step(x, self.h, self.forcing, held)
                step += 1
            if not np.all(np.isfinite(x)):
                raise IntegrationBlowupError(step)
        return out


def build_process(spec: GeneratorSpec):
    """Draw the structure for ``spec``; returns ``(process, noise_rng)``."""
    spec.validate()
    rng, noise_rng = _split_rngs(spec.seed)
    k = spec.k
    if spec.family == "var_chain":
        coefs = np.zeros((1, k, k))
        coefs[0][np.arange(k), np.arange(k)] = CHAIN_SELF
        coefs[0][np.arange(1, k), np.arange(k - 1)] = CHAIN_CROSS
        edges = np.zeros((k, k, 1), dtype=bool)
        edges[np.arange(1, k), np.arange(k - 1), 0] = True
        return VarProcess(coefs, LaggedAdjacency(edges)), noise_rng
    if spec.family in ("var_random", "causeme_nonlinear"):
        support = _draw_support(rng, k, spec.max_lag, spec.density)
        coefs = _coefs_on_support(rng, support)
        return VarProcess(coefs, LaggedAdjacency(support), alpha=spec.nonlinearity), noise_rng
    if spec.family == "regime_switch":
        support = _draw_support(rng, k, spec.max_lag, spec.density)
        signs = _draw_signs(rng, support.shape)
        regimes = np.stack([_coefs_on_support(rng, support, signs) for _ in range(2)])
        return VarProcess(regimes, LaggedAdjacency(support), switch_prob=SWITCH_PROB), noise_rng
    x0 = spec.forcing_f + rng.normal(0.0, LORENZ_INIT_SD, k)
    return LorenzProcess(k, spec.forcing_f, x0), noise_rng


def generate(spec: GeneratorSpec) -> tuple[Series, LaggedAdjacency]:
    """Dispatch on ``spec.family``."""
    if spec.family == "causeme_nonlinear":
        return _generate_with_redraw(spec)
    process, noise_rng = build_process(spec)
    values = process.simulate(spec.t, noise_rng)
    return Series(values, dt=process.dt), process.adjacency


def _attempt_seed(seed: int, attempt: int) -> int:
    if attempt == 0:
        return seed
    words = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, attempt]).generate_state(2)
    return int(words[0]) << 32 | int(words[1])


def stable_spec(spec: GeneratorSpec) -> GeneratorSpec:
    """First redraw of ``spec`` whose trajectory stays inside the overflow guard."""
    spec.validate()
    last = None
    for attempt in range(MAX_REDRAWS):
        trial = replace(spec, seed=_attempt_seed(spec.seed, attempt))
        process, noise_rng = build_process(trial)
        try:
            process.simulate(spec.t, noise_rng)
        except GenerationError as exc:
            last = exc
            continue
        return trial
    raise GenerationError(f"unstable after {MAX_REDRAWS} coefficient draws: {last}")


def _generate_with_redraw(spec: GeneratorSpec):
    process, noise_rng = build_process(stable_spec(spec))
    return Series(process.simulate(spec.t, noise_rng), dt=process.dt), process.adjacency


def gen_var_chain(k: int, t: int, seed: int):
    return generate(GeneratorSpec("var_chain", k, t, seed=seed))


def gen_var_random(k: int, t: int, max_lag: int = 1, density: float = 0.1, seed: int = 0):
    return generate(GeneratorSpec("var_random", k, t, max_lag=max_lag, density=density, seed=seed))


def gen_regime_switch(k: int, t: int, seed: int, density: float | None = None,
                      switch_prob: float = SWITCH_PROB):
    """Two coefficient regimes on one support, switched by a symmetric Markov chain."""
    density = 1.0 / (k - 1) if density is None else density
    spec = GeneratorSpec("regime_switch", k, t, density=density, seed=seed)
    process, noise_rng = build_process(spec)
    process.switch_prob = switch_prob
    return Series(process.simulate(t, noise_rng)), process.adjacency


def gen_lorenz96(k: int, t: int, forcing_f: float = 10.0, seed: int = 0, x0=None,
                 dt: float = LORENZ_DT, thin: int = LORENZ_THIN,
                 burn_in: int = LORENZ_BURN_IN):
    spec = GeneratorSpec("lorenz96", k, t, forcing_f=forcing_f, seed=seed).validate()
    process, _ = build_process(spec)
    if x0 is not None:
        process.x0 = np.asarray(x0, dtype=float)
    process.h, process.thin, process.burn_in = dt, thin, burn_in
    process.dt = dt * thin
    return Series(process.simulate(t), dt=process.dt), process.adjacency


def gen_causeme_nonlinear(k: int, t: int, max_lag: int = 1, density: float = 0.1,
                          alpha: float = 0.3, seed: int = 0):
    return generate(GeneratorSpec("causeme_nonlinear", k, t, max_lag=max_lag,
                                  density=density, nonlinearity=alpha, seed=seed))
