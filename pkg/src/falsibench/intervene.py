"""Intervention episodes on the structural generators and size-matched arms.

An intervened series is an observational prefix followed by ``K`` consecutive
episodes of ``episode_len`` steps, one per variable. Three semantics:

* ``do_clamp``: ``x_i`` is held at a constant ``c = +/- scale * sd_i`` for the episode.
* ``soft_noise``: ``x_i`` gets an extra ``N(0, (scale * sd_i)^2)`` on top of its equation.
* ``random_forcing``: ``x_i`` is replaced by ``scale * sd_i * eps`` with fresh ``eps`` each step.

``sd_i`` is the observational standard deviation of variable ``i`` measured on
the prefix. Episode draws come from their own random stream, so the
generator's innovations are identical with and without interventions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import LaggedAdjacency, Series
from .errors import ParameterError
from .synthgen import STRUCTURAL_FAMILIES, GeneratorSpec, LorenzProcess, build_process, stable_spec

KINDS = ("do_clamp", "soft_noise", "random_forcing")
MIN_T_OBS = 50
_ROLE_TAG = 0x1A7E  # keeps the intervention stream apart from the generator streams


@dataclass(frozen=True)
class InterventionScheme:
    kind: str
    scale: float = 2.0
    episode_len: int = 50
    order: tuple[int, ...] | None = None  # variable order of the episodes; None = index order

    def validate(self, k: int | None = None) -> "InterventionScheme":
        if self.kind not in KINDS:
            raise ParameterError(f"unknown intervention kind {self.kind!r}; expected one of {KINDS}")
        if not self.scale > 0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")
        if self.episode_len < 1:
            raise ParameterError(f"episode_len must be >= 1, got {self.episode_len}")
        if k is not None and self.order is not None and sorted(self.order) != list(range(k)):
            raise ParameterError(f"episode order must be a permutation of range({k})")
        return self

    def episode_order(self, k: int) -> list[int]:
        return list(range(k)) if self.order is None else list(self.order)


@dataclass
class InterventionLog:
    """One row per intervened cell. ``value`` is the stored value for clamped and
    forced cells and the noise standard deviation for softened cells."""

    t: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    var: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    kind: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=object))
    value: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self) -> int:
        return int(self.t.size)

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        out[self.t, self.var] = True
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "var", "kind", "value"])
            for row in zip(self.t, self.var, self.kind, self.value):
                w.writerow([int(row[0]), int(row[1]), row[2], repr(float(row[3]))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "InterventionLog":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([int(r["t"]) for r in rows], dtype=int),
                   np.array([int(r["var"]) for r in rows], dtype=int),
                   np.array([r["kind"] for r in rows], dtype=object),
                   np.array([float(r["value"]) for r in rows]))


class _Episodes:
    """Callback handed to the generator's ``simulate``; mutates the state in place."""

    label = {"do_clamp": "clamped", "soft_noise": "softened", "random_forcing": "forced"}

    def __init__(self, scheme: InterventionScheme, sd: np.ndarray, start: int,
                 rng: np.random.Generator, lorenz: bool):
        k = sd.size
        self.scheme = scheme
        self.start = start
        self.order = scheme.episode_order(k)
        self.sd = sd
        self.lorenz = lorenz
        if scheme.kind == "do_clamp":
            signs = rng.choice([-1.0, 1.0], size=k)
            self.clamp = {v: signs[n] * scheme.scale * sd[v] for n, v in enumerate(self.order)}
        # one standard normal per episode step, drawn up front for determinism
        self.eps = rng.standard_normal(k * scheme.episode_len)
        self.rows: list[tuple[int, int, str, float]] = []

    def target(self, t: int) -> tuple[int, int] | None:
        offset = t - self.start
        if offset < 0 or offset >= len(self.order) * self.scheme.episode_len:
            return None
        return self.order[offset // self.scheme.episode_len], offset

    def apply(self, t: int, x: np.ndarray):
        hit = self.target(t)
        if hit is None:
            return None
        i, offset = hit
        kind, s = self.scheme.kind, self.scheme.scale * self.sd[i]
        if kind == "do_clamp":
            x[i] = self.clamp[i]
            self.rows.append((t, i, kind, float(x[i])))
            return i if self.lorenz else None
        if kind == "soft_noise":
            x[i] += s * self.eps[offset]
            self.rows.append((t, i, kind, float(s)))
            return None
        x[i] = s * self.eps[offset]
        self.rows.append((t, i, kind, float(x[i])))
        return None

    def log(self) -> InterventionLog:
        if not self.rows:
            return InterventionLog()
        t, v, k, val = zip(*self.rows)
        return InterventionLog(np.array(t, dtype=int), np.array(v, dtype=int),
                               np.array(k, dtype=object), np.array(val, dtype=float))


def intervention_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, _ROLE_TAG]))


def _prepared(spec: GeneratorSpec, n_total: int) -> GeneratorSpec:
    if spec.family not in STRUCTURAL_FAMILIES:
        raise ParameterError(f"family {spec.family!r} does not accept interventions")
    spec = spec.with_t(n_total)
    # the nonlinear family redraws unstable structures; pick the draw on the full horizon
    return stable_spec(spec) if spec.family == "causeme_nonlinear" else spec.validate()


def _run(spec: GeneratorSpec, n: int, episodes: _Episodes | None) -> tuple[np.ndarray, object]:
    process, noise_rng = build_process(spec)
    return process.simulate(n, noise_rng, episodes), process


def _simulate_pair(spec: GeneratorSpec, scheme: InterventionScheme, t_obs: int, seed: int):
    """Observational and intervened trajectories of length ``t_obs + K * episode_len``."""
    scheme.validate(spec.k)
    if t_obs < 2:
        raise ParameterError(f"t_obs must be >= 2, got {t_obs}")
    n_total = t_obs + spec.k * scheme.episode_len
    spec = _prepared(spec, n_total)
    plain, process = _run(spec, n_total, None)
    sd = plain[:t_obs].std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    episodes = _Episodes(scheme, sd, t_obs, intervention_rng(seed),
                         lorenz=isinstance(process, LorenzProcess))
    intervened, _ = _run(spec, n_total, episodes)
    return plain, intervened, episodes.log(), process


def simulate_with_interventions(spec: GeneratorSpec, scheme: InterventionScheme,
                                seed: int) -> tuple[Series, LaggedAdjacency, InterventionLog]:
    """``spec.t`` observational steps followed by one episode per variable.

    The returned series has ``spec.t + K * episode_len`` rows; the log indexes
    into it. ``seed`` drives the episode draws only; structure and innovations
    come from ``spec.seed``.
    """
    _, values, log, process = _simulate_pair(spec, scheme, spec.t, seed)
    return Series(values, dt=process.dt, intervention_log=log), process.adjacency, log


@dataclass
class ArmSet:
    obs: Series
    combined: Series
    obs_big: Series
    truth: LaggedAdjacency
    log: InterventionLog
    scheme: InterventionScheme

    def __post_init__(self):
        extra = self.truth.k * self.scheme.episode_len
        if not self.combined.t == self.obs_big.t == self.obs.t + extra:
            raise ParameterError("arm lengths violate the size-match contract")

    def arms(self) -> dict[str, Series]:
        return {"obs": self.obs, "combined": self.combined, "obs_big": self.obs_big}

    def manifest(self) -> dict:
        return {"scheme": {"kind": self.scheme.kind, "scale": self.scheme.scale,
                           "episode_len": self.scheme.episode_len,
                           "order": self.scheme.episode_order(self.truth.k)},
                "arms": {name: {"file": f"{name}.csv", "rows": s.t, "role": role}
                         for (name, s), role in zip(self.arms().items(),
                                                    ("observational", "observational + episodes",
                                                     "observational, size-matched"))},
                "log_file": "intervention_log.csv", "truth_file": "truth.csv"}

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, s in self.arms().items():
            s.to_csv(directory / f"{name}.csv")
        self.log.to_csv(directory / "intervention_log.csv")
        self.truth.to_csv(directory / "truth.csv")
        path = directory / "manifest.json"
        path.write_text(json.dumps(self.manifest(), indent=2) + "\n")
        return path


def build_arms(spec: GeneratorSpec, scheme: InterventionScheme, t_obs: int, seed: int) -> ArmSet:
    """Three arms from one process: ``obs`` (``t_obs`` rows), ``combined`` (``obs`` then
    the episodes) and ``obs_big`` (same length as ``combined``, no interventions)."""
    if t_obs < MIN_T_OBS:
        raise ParameterError(f"t_obs must be >= {MIN_T_OBS}, got {t_obs}")
    plain, intervened, log, process = _simulate_pair(spec, scheme, t_obs, seed)
    dt = process.dt
    return ArmSet(Series(plain[:t_obs].copy(), dt=dt),
                  Series(intervened, dt=dt, intervention_log=log),
                  Series(plain, dt=dt), process.adjacency, log, replace(scheme))
