"""Edge-provenance cards, real-data ingestion and ground-truth sensitivity audits.

A card labels one directed ground-truth edge as causal, definitional, proxy or
soft and assigns it to an exclusion group. The ground truth used for scoring is
the set of cards admitted by an inclusion policy, so the same scores can be
re-evaluated under several readings of "the truth".
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import LaggedAdjacency, ScoreMatrix, Series
from .errors import IngestionError, ParameterError, UndefinedAUROCError, UndefinedTruthError

logger = logging.getLogger(__name__)

CARD_CLASSES = ("causal", "definitional", "proxy", "soft")
TRANSFORMS = ("levels", "log_returns")
CARD_FIELDS = ("source", "target", "class", "group", "citation")
DEFAULT_REAL_MAX_LAG = 5


@dataclass(frozen=True)
class ProvenanceCard:
    source: str
    target: str
    edge_class: str
    group: str
    citation: str = ""

    def __post_init__(self):
        if self.edge_class not in CARD_CLASSES:
            raise ParameterError(f"card class {self.edge_class!r} not in {CARD_CLASSES}")
        if self.source == self.target:
            raise ParameterError(f"self-edge card {self.source}->{self.target}")


def read_cards(path: str | Path) -> list[ProvenanceCard]:
    """Card CSV with columns (source, target, class, group, citation); '#' lines are comments."""
    try:
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise IngestionError(f"cannot read card file {path}: {exc}") from exc
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not set(CARD_FIELDS) <= set(reader.fieldnames):
        raise IngestionError(f"{path}: card file needs columns {CARD_FIELDS}")
    cards = []
    for row in reader:
        try:
            cards.append(ProvenanceCard(row["source"].strip(), row["target"].strip(),
                                        row["class"].strip(), row["group"].strip(),
                                        (row["citation"] or "").strip()))
        except ParameterError as exc:
            raise IngestionError(f"{path}: {exc}") from exc
    return cards


@dataclass(frozen=True)
class InclusionPolicy:
    """Admit cards whose class is in ``classes`` and whose group is not in ``drop_groups``.

    Cards of an excluded class stay in the evaluation as negatives. Pairs of a
    dropped group are left out of the evaluation altogether (leave-one-group-out).
    """

    name: str
    classes: tuple[str, ...] = ("causal", "proxy", "soft")
    drop_groups: tuple[str, ...] = ()

    def admits(self, card: ProvenanceCard) -> bool:
        return card.edge_class in self.classes and card.group not in self.drop_groups


DEFAULT_POLICY = InclusionPolicy("default")
FULL_POLICY = InclusionPolicy("full", CARD_CLASSES)


@dataclass
class RealDataset:
    series: Series
    cards: list[ProvenanceCard]
    dataset_id: str
    expected_dims: tuple[int, int] | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        names = set(self.series.var_names)
        for c in self.cards:
            if c.source not in names or c.target not in names:
                raise IngestionError(
                    f"card {c.source}->{c.target} references a variable not in {sorted(names)}")

    def index(self, name: str) -> int:
        return self.series.var_names.index(name)

    def groups(self) -> list[str]:
        return sorted({c.group for c in self.cards})


def effective_truth(dataset: RealDataset, policy: InclusionPolicy = DEFAULT_POLICY) -> LaggedAdjacency:
    """Static adjacency whose positives are the admitted cards (source drives target)."""
    k = dataset.series.k
    edges = np.zeros((k, k, 1), dtype=bool)
    for c in dataset.cards:
        if policy.admits(c):
            edges[dataset.index(c.target), dataset.index(c.source), 0] = True
    truth = LaggedAdjacency(edges)
    n_pos = truth.n_edges()
    if n_pos == 0 or n_pos == k * (k - 1):
        raise UndefinedTruthError(f"policy {policy.name!r} leaves {n_pos} positives of {k * (k - 1)}")
    return truth


def excluded_pairs(dataset: RealDataset, policy: InclusionPolicy) -> np.ndarray | None:
    """(K, K) mask of (target, source) pairs carried by the policy's dropped groups."""
    if not policy.drop_groups:
        return None
    k = dataset.series.k
    out = np.zeros((k, k), dtype=bool)
    for c in dataset.cards:
        if c.group in policy.drop_groups:
            out[dataset.index(c.target), dataset.index(c.source)] = True
    return out


@dataclass
class Manifest:
    dataset_id: str
    data_file: Path
    date_column: str
    variables: tuple[str, ...]
    transform: str
    card_file: Path
    expected_dims: tuple[int, int] | None = None

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IngestionError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(raw, base=path.parent)

    @classmethod
    def from_dict(cls, raw: Mapping, base: str | Path = ".") -> "Manifest":
        base = Path(base)
        required = ("dataset_id", "date_column", "variables", "transform", "card_file")
        missing = [key for key in required if key not in raw]
        if missing:
            raise IngestionError(f"manifest missing keys {missing}")
        if raw["transform"] not in TRANSFORMS:
            raise IngestionError(f"transform must be one of {TRANSFORMS}, got {raw['transform']!r}")
        dims = raw.get("expected_dims")
        return cls(str(raw["dataset_id"]), base / raw.get("data_file", ""), str(raw["date_column"]),
                   tuple(raw["variables"]), raw["transform"], base / raw["card_file"],
                   tuple(dims) if dims else None)


def _parse_float(text: str) -> float | None:
    text = text.strip()
    if text == "" or text.lower() in ("na", "nan", "null"):
        return None
    value = float(text)
    return value if np.isfinite(value) else None


def load_csv_dataset(path: str | Path, manifest: Manifest | str | Path) -> RealDataset:
    """Read a downloaded CSV, drop incomplete rows and apply the manifest transform."""
    if not isinstance(manifest, Manifest):
        manifest = Manifest.load(manifest)
    if len(manifest.variables) < 2:
        raise IngestionError("a dataset needs at least 2 variables")
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            wanted = [manifest.date_column, *manifest.variables]
            absent = [c for c in wanted if c not in header]
            if absent:
                raise IngestionError(f"{path}: missing columns {absent}")
            rows, dropped = [], 0
            for n, row in enumerate(reader, start=2):
                try:
                    vals = [_parse_float(row[v] or "") for v in manifest.variables]
                except ValueError as exc:
                    raise IngestionError(f"{path}:{n}: unparseable value ({exc})") from exc
                if any(v is None for v in vals):
                    dropped += 1
                    continue
                rows.append(vals)
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if dropped:
        logger.info("%s: dropped %d incomplete rows", manifest.dataset_id, dropped)
    values = np.array(rows, dtype=float).reshape(-1, len(manifest.variables))
    if manifest.transform == "log_returns":
        if np.any(values <= 0):
            raise IngestionError(f"{path}: log returns need positive prices")
        values = np.diff(np.log(values), axis=0)
    if values.shape[0] < 2:
        raise IngestionError(f"{path}: fewer than 2 rows after alignment")
    series = Series(values, manifest.variables)
    if manifest.expected_dims and tuple(manifest.expected_dims) != (series.k, series.t):
        logger.warning("%s: expected (K, T)=%s, got (%d, %d)", manifest.dataset_id,
                       tuple(manifest.expected_dims), series.k, series.t)
    return RealDataset(series, read_cards(manifest.card_file), manifest.dataset_id,
                       manifest.expected_dims, dropped)


def audit_policies(dataset: RealDataset) -> list[InclusionPolicy]:
    """Full card set, default (no definitional), and full minus each group in turn."""
    policies = [FULL_POLICY, DEFAULT_POLICY]
    policies += [InclusionPolicy(f"minus_{g}", CARD_CLASSES, (g,)) for g in dataset.groups()]
    return policies


@dataclass
class AuditReport:
    methods: list[str]
    auroc: dict[str, dict[str, float]]  # policy -> method -> auroc
    ranks: dict[str, dict[str, int]]
    skipped: dict[str, str] = field(default_factory=dict)
    cards: list[ProvenanceCard] = field(default_factory=list)

    def rank_change(self, method: str, before: str, after: str) -> int:
        """Positive when the method drops (worse rank) going from ``before`` to ``after``."""
        return self.ranks[after][method] - self.ranks[before][method]

    def rows(self) -> list[dict]:
        out = []
        for policy, by_method in self.auroc.items():
            for m in self.methods:
                out.append({"policy": policy, "method": m, "auroc": by_method[m],
                            "rank": self.ranks[policy][m]})
        return out


def _competition_ranks(values: Mapping[str, float]) -> dict[str, int]:
    # 1 = best; tied methods share the better rank
    return {m: 1 + sum(v > values[m] for v in values.values()) for m in values}


def sensitivity_audit(dataset: RealDataset, scores_by_method: Mapping[str, ScoreMatrix],
                      policies: Sequence[InclusionPolicy] | None = None) -> AuditReport:
    """Re-score every method under every inclusion policy and rank them."""
    from .evalstats import auroc_flat_lag

    if len(scores_by_method) < 2:
        raise ParameterError("sensitivity audit needs at least 2 methods")
    policies = audit_policies(dataset) if policies is None else list(policies)
    methods = list(scores_by_method)
    auroc, ranks, skipped = {}, {}, {}
    for policy in policies:
        try:
            truth = effective_truth(dataset, policy)
        except UndefinedTruthError as exc:
            skipped[policy.name] = str(exc)
            continue
        exclude = excluded_pairs(dataset, policy)
        try:
            auroc[policy.name] = {m: auroc_flat_lag(s, truth, exclude=exclude)
                                  for m, s in scores_by_method.items()}
        except UndefinedAUROCError as exc:
            skipped[policy.name] = str(exc)
            continue
        ranks[policy.name] = _competition_ranks(auroc[policy.name])
    return AuditReport(methods, auroc, ranks, skipped, list(dataset.cards))
