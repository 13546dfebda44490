"""Experiment plans, config cells and seed derivation."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ..errors import FalsibenchError, PlanError
from ..intervene import KINDS, InterventionScheme
from ..synthgen import FAMILIES, GeneratorSpec

STAGES = ("f1", "f2", "f3", "f4", "f5", "survives")
ROLES = ("generator", "train", "intervention")
INTERVENTION_STAGES = ("f4", "f5")


@dataclass(frozen=True)
class Cell:
    """One configuration of the grid: a generator plus the model lag and, for
    the intervention stages, the episode scheme."""

    family: str
    k: int
    t: int
    max_lag: int = 1
    density: float = 0.1
    nonlinearity: float = 0.0
    forcing_f: float = 10.0
    model_max_lag: int = 1
    scheme: str | None = None
    scale: float = 2.0
    episode_len: int = 50

    def generator_spec(self, seed: int) -> GeneratorSpec:
        return GeneratorSpec(self.family, self.k, self.t, self.max_lag, self.density,
                             self.nonlinearity, self.forcing_f, seed)

    def intervention_scheme(self) -> InterventionScheme:
        if self.scheme is None:
            raise PlanError("cell has no intervention scheme")
        return InterventionScheme(self.scheme, self.scale, self.episode_len)

    @property
    def label(self) -> str:
        """``key=value`` segments joined by '/'; non-default fields only, always k and t."""
        parts = [self.family, f"k={self.k}", f"t={self.t}"]
        defaults = {f.name: f.default for f in fields(Cell) if f.name not in ("family", "k", "t")}
        for name, default in defaults.items():
            value = getattr(self, name)
            if value != default:
                parts.append(f"{name}={value:g}" if isinstance(value, float) else f"{name}={value}")
        return "/".join(parts)

    def validate(self) -> None:
        self.generator_spec(0).validate()
        if self.model_max_lag < 1:
            raise PlanError(f"model_max_lag must be >= 1 in {self.label}")
        if self.scheme is not None:
            if self.scheme not in KINDS:
                raise PlanError(f"unknown scheme {self.scheme!r}")
            self.intervention_scheme().validate(self.k)


def parse_cell_label(label: str) -> dict[str, str]:
    head, *rest = label.split("/")
    out = {"family": head}
    for part in rest:
        key, _, value = part.partition("=")
        out[key] = value
    return out


@dataclass(frozen=True)
class RealDataRef:
    manifest: str
    data_file: str | None = None


@dataclass
class ExperimentPlan:
    stage: str
    cells: list[Cell]
    methods: list[str]
    n_seeds: int = 3
    base_seed: int = 0
    output_dir: str | None = None
    with_mse: bool = False
    real_data: list[RealDataRef] = field(default_factory=list)

    def validate(self, registry=None) -> "ExperimentPlan":
        """Check every cell and method before anything runs; raises :class:`PlanError`."""
        if self.stage not in STAGES:
            raise PlanError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if not self.cells:
            raise PlanError("plan has no cells")
        if not self.methods:
            raise PlanError("plan has no methods")
        if self.n_seeds < 1:
            raise PlanError(f"n_seeds must be >= 1, got {self.n_seeds}")
        if len(set(self.methods)) != len(self.methods):
            raise PlanError("duplicate method names in plan")
        labels = [c.label for c in self.cells]
        if len(set(labels)) != len(labels):
            raise PlanError("duplicate cells in plan")
        for cell in self.cells:
            try:
                cell.validate()
            except FalsibenchError as exc:
                raise PlanError(f"invalid cell {cell.label}: {exc}") from exc
            if self.stage in INTERVENTION_STAGES and cell.scheme is None:
                raise PlanError(f"stage {self.stage} needs a scheme on cell {cell.label}")
            if self.stage not in INTERVENTION_STAGES and cell.scheme is not None:
                raise PlanError(f"stage {self.stage} does not take intervention schemes")
        if registry is not None:
            for name in self.methods:
                try:
                    registry.resolve(name)
                except FalsibenchError as exc:
                    raise PlanError(f"method {name!r}: {exc}") from exc
        return self

    def to_dict(self) -> dict[str, Any]:
        raw = asdict(self)
        raw["cells"] = [_cell_to_dict(c) for c in self.cells]
        return raw

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentPlan":
        try:
            cells = [Cell(**c) for c in raw["cells"]]
            real = [RealDataRef(**r) for r in raw.get("real_data", [])]
            known = {f.name for f in fields(cls)}
            extra = set(raw) - known
            if extra:
                raise PlanError(f"unknown plan keys {sorted(extra)}")
            return cls(**{**raw, "cells": cells, "real_data": real})
        except (KeyError, TypeError) as exc:
            raise PlanError(f"malformed plan: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentPlan":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PlanError(f"cannot read plan {path}: {exc}") from exc
        return cls.from_dict(raw)


def _cell_to_dict(cell: Cell) -> dict:
    defaults = Cell("x", 0, 0)
    return {f.name: getattr(cell, f.name) for f in fields(Cell)
            if f.name in ("family", "k", "t") or getattr(cell, f.name) != getattr(defaults, f.name)}


class SeedDerivation:
    """64-bit seeds from (stage, cell index, seed index, role) via keyed BLAKE2b."""

    def __init__(self, base_seed: int, stage: str):
        self.base_seed = int(base_seed)
        self.stage = stage

    def derive(self, cell_index: int, seed_index: int, role: str) -> int:
        if role not in ROLES:
            raise PlanError(f"unknown seed role {role!r}")
        msg = f"{self.stage}|{cell_index}|{seed_index}|{role}".encode()
        key = self.base_seed.to_bytes(8, "little", signed=True)
        digest = hashlib.blake2b(msg, digest_size=8, key=key).digest()
        # numpy seeds must be nonnegative; keep 63 bits
        return int.from_bytes(digest, "little") >> 1

    def check_collisions(self, n_cells: int, n_seeds: int) -> int:
        """Number of duplicated seeds over the plan's (cell, seed, role) space."""
        seen = [self.derive(c, s, r) for c, s, r in
                itertools.product(range(n_cells), range(n_seeds), ROLES)]
        return len(seen) - len(set(seen))


def _grid(**axes) -> list[dict]:
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*axes.values())]


F4_K = (10, 20, 30)
F4_T = (150, 300, 600, 1200)
SURVIVES_D = ("half", "k", "2k")
SURVIVES_LAMBDA = (1e-4, 1e-3, 1e-2)


def default_plan(stage: str, scale: str = "desk") -> ExperimentPlan:
    """Plans used by ``falsibench all``; ``scale='mini'`` shrinks every axis for smoke tests."""
    mini = scale == "mini"
    if scale not in ("desk", "mini"):
        raise PlanError(f"unknown scale {scale!r}")
    if stage == "f1":
        cells = [Cell("var_chain", 5, 400), Cell("var_random", 10, 300),
                 Cell("regime_switch", 3, 400, density=0.5), Cell("lorenz96", 5, 500)]
        if mini:
            cells = [replace(c, t=200) for c in cells[:2]]
        return ExperimentPlan("f1", cells, ["bottleneck", "lasso"], 2 if mini else 10)
    if stage == "f2":
        grid = _grid(k=(10, 20), t=(150, 300), density=(0.05, 0.1, 0.2), max_lag=(1, 2, 4, 8))
        if mini:
            grid = _grid(k=(6,), t=(150,), density=(0.2,), max_lag=(1, 2))
        cells = [Cell("var_random", g["k"], g["t"], g["max_lag"], g["density"],
                      model_max_lag=2 if mini else 8) for g in grid]
        return ExperimentPlan("f2", cells, ["bottleneck", "ols", "ridge", "lasso", "rrr"],
                              2 if mini else 3, with_mse=True)
    if stage == "f3":
        cells = [Cell("lorenz96", 10, 300 if mini else 1500)]
        return ExperimentPlan("f3", cells, ["granger", "lasso", "ridge", "pcmci_lite",
                                            "bottleneck:L=5"], 2 if mini else 5)
    if stage in ("f4", "f5"):
        ks, ts = ((6,), (150,)) if mini else (F4_K, F4_T if stage == "f4" else (300,))
        schemes = ("random_forcing", "do_clamp") if stage == "f4" else ("random_forcing",)
        episode = 20 if mini else 50
        cells = [Cell("var_random", k, t, scheme=s, episode_len=episode)
                 for s in schemes for k in ks for t in ts]
        methods = ["bottleneck:d=half"]
        if stage == "f5":
            methods += ["lasso", "granger", "pcmci_lite"]
        n = 3 if mini else (15 if stage == "f4" else 10)
        return ExperimentPlan(stage, cells, methods, n)
    if stage == "survives":
        alphas = (0.3, 0.0)
        cells = [Cell("causeme_nonlinear", 8 if mini else 20, 150 if mini else 300,
                      nonlinearity=a) for a in alphas]
        methods = [f"bottleneck:d={d}:lam={lam:g}" for d in SURVIVES_D for lam in SURVIVES_LAMBDA]
        methods += ["lasso", "rrr"]
        return ExperimentPlan("survives", cells, methods, 3 if mini else 10)
    raise PlanError(f"unknown stage {stage!r}")


def cell_k(label: str) -> int:
    return int(parse_cell_label(label)["k"])


def is_finite(x) -> bool:
    return x is not None and math.isfinite(x)
