import json
import logging

import numpy as np
import pytest

from falsibench.core import ScoreMatrix, Series
from falsibench.errors import IngestionError, ParameterError, UndefinedTruthError
from falsibench.provenance import (CARD_CLASSES, DEFAULT_POLICY, FULL_POLICY, InclusionPolicy,
                                   Manifest, ProvenanceCard, RealDataset, audit_policies,
                                   effective_truth, load_csv_dataset, read_cards, sensitivity_audit)

DATA = __import__("falsibench").__path__[0] + "/data"
CLIMATE = ["ENSO", "SOI", "PNA", "PDO", "NAO", "AMO"]


@pytest.fixture
def climate_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "climate.csv"
    lines = ["date," + ",".join(CLIMATE)]
    for n in range(40):
        vals = [f"{v:.4f}" for v in rng.standard_normal(6)]
        if n == 7:
            vals[3] = ""  # one missing PDO value
        lines.append(f"2000-{n:02d}," + ",".join(vals))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def climate(climate_csv):
    return load_csv_dataset(climate_csv, f"{DATA}/climate_manifest.json")


def test_shipped_cards_parse_with_citations():
    cards = read_cards(f"{DATA}/climate_cards.csv")
    assert len(cards) == 5
    assert all(c.citation and c.edge_class in CARD_CLASSES for c in cards)
    assert read_cards(f"{DATA}/finance_cards.csv") == []


def test_climate_policies(climate, caplog):
    assert climate.dropped_rows == 1 and climate.series.t == 39
    assert effective_truth(climate, DEFAULT_POLICY).n_edges() == 3
    assert effective_truth(climate, FULL_POLICY).n_edges() == 5
    truth = effective_truth(climate, DEFAULT_POLICY)
    # ENSO drives PNA: row is the target, column the source
    assert truth.edges[climate.index("PNA"), climate.index("ENSO"), 0]
    with pytest.raises(UndefinedTruthError):
        effective_truth(climate, InclusionPolicy("nothing", ("proxy",)))


def test_dims_mismatch_is_logged(climate_csv, caplog):
    with caplog.at_level(logging.WARNING):
        load_csv_dataset(climate_csv, f"{DATA}/climate_manifest.json")
    assert "expected (K, T)" in caplog.text


def test_log_returns(tmp_path):
    prices = np.array([[100.0, 10.0], [110.0, 9.0], [121.0, 9.9]])
    (tmp_path / "p.csv").write_text("date,A,B\n" + "".join(f"d{n},{a},{b}\n" for n, (a, b) in
                                                             enumerate(prices)))
    (tmp_path / "cards.csv").write_text("source,target,class,group,citation\nA,B,causal,g,x\n")
    m = Manifest.from_dict({"dataset_id": "p", "date_column": "date", "variables": ["A", "B"],
                            "transform": "log_returns", "card_file": "cards.csv"}, tmp_path)
    ds = load_csv_dataset(tmp_path / "p.csv", m)
    np.testing.assert_allclose(ds.series.values, np.diff(np.log(prices), axis=0))


def test_ingestion_errors(tmp_path, climate_csv):
    with pytest.raises(IngestionError):
        Manifest.from_dict({"dataset_id": "x"})
    bad = json.loads(open(f"{DATA}/climate_manifest.json").read())
    bad["card_file"] = f"{DATA}/climate_cards.csv"
    bad["variables"] = ["ENSO", "WHAT"]
    with pytest.raises(IngestionError):
        load_csv_dataset(climate_csv, Manifest.from_dict(bad))
    with pytest.raises(ParameterError):
        ProvenanceCard("A", "B", "vibes", "g", "c")


def test_card_must_name_known_variables():
    series = Series(np.zeros((5, 2)), ["A", "B"])
    with pytest.raises(IngestionError):
        RealDataset(series, [ProvenanceCard("A", "C", "causal", "g", "c")], "x")


def _scores_from(dataset, pairs):
    k = dataset.series.k
    raw = np.full((k, k, 1), 0.01)
    for rank, (src, dst) in enumerate(pairs):
        raw[dataset.index(dst), dataset.index(src), 0] = 1.0 - 0.1 * rank
    return ScoreMatrix.from_raw(raw)


def test_definitional_edges_flip_the_ranking(climate):
    # "echo" only finds the definitional ENSO<->SOI pair; "physics" finds the causal cards
    echo = _scores_from(climate, [("ENSO", "SOI"), ("SOI", "ENSO")])
    physics = _scores_from(climate, [("ENSO", "PNA"), ("ENSO", "PDO"), ("NAO", "AMO")])
    report = sensitivity_audit(climate, {"echo": echo, "physics": physics})
    assert report.auroc["default"]["physics"] == 1.0
    assert report.auroc["full"]["echo"] > report.auroc["default"]["echo"]
    assert report.rank_change("physics", "full", "default") <= 0
    assert {r["policy"] for r in report.rows()} == set(report.auroc)


def test_audit_policy_names(climate):
    names = [p.name for p in audit_policies(climate)]
    assert names == ["full", "default", "minus_atlantic", "minus_enso_soi", "minus_pacific"]


def test_three_disjoint_groups_perfect_scores():
    series = Series(np.zeros((10, 4)), ["A", "B", "C", "D"])
    cards = [ProvenanceCard(s, t, "causal", g, "synthetic")
             for s, t, g in (("A", "B", "g1"), ("B", "C", "g2"), ("C", "D", "g3"))]
    ds = RealDataset(series, cards, "three_groups")
    perfect = _scores_from(ds, [(c.source, c.target) for c in cards])
    noise = ScoreMatrix.from_raw(np.random.default_rng(1).random((4, 4, 1)))
    report = sensitivity_audit(ds, {"perfect": perfect, "noise": noise})
    logo = [p for p in report.auroc if p.startswith("minus_")]
    assert len(logo) == 3
    assert all(report.auroc[p]["perfect"] == 1.0 for p in report.auroc)
    # a left-out group is removed from the evaluation, not relabelled negative
    truth = effective_truth(ds, FULL_POLICY)
    from falsibench.evalstats import auroc_flat_lag

    assert auroc_flat_lag(perfect, effective_truth(ds, InclusionPolicy("x", CARD_CLASSES, ("g1",)))) < 1.0
    assert report.auroc["full"]["noise"] == auroc_flat_lag(noise, truth)


def test_undefined_policies_are_skipped(climate):
    perfect = _scores_from(climate, [(c.source, c.target) for c in climate.cards])
    report = sensitivity_audit(climate, {"a": perfect, "b": perfect},
                               [FULL_POLICY, InclusionPolicy("none", ())])
    assert "none" in report.skipped and "none" not in report.auroc
    assert report.ranks["full"] == {"a": 1, "b": 1}
    with pytest.raises(ParameterError):
        sensitivity_audit(climate, {"a": perfect})
