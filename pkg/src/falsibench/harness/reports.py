"""Stage reports: aligned text tables plus matching CSVs.

Analysis helpers (gap extraction, win rates, the surviving-configuration
summary) are public so tests and notebooks can use the same numbers the
tables print.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import IncompleteGridError, ParameterError
from ..evalstats import PairedTestResult, RunRecord, paired_test, win_rate_table
from .plan import parse_cell_label

REFERENCE = "bottleneck"
DEFAULT_BOTTLENECK = "bottleneck:d=k:lam=0.001"


def format_table(headers: Sequence[str], rows: Iterable[Sequence]) -> str:
    rows = [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(headers)]
    line = lambda cells: "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(headers), sep, *(line(r) for r in rows)]) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def write_table(out_dir: Path, name: str, headers, rows, notes: Sequence[str] = ()) -> list[Path]:
    rows = [list(r) for r in rows]
    csv_path, txt_path = out_dir / f"{name}.csv", out_dir / f"{name}.txt"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(headers)
        w.writerows(rows)
    text = format_table(headers, rows)
    if notes:
        text += "\n" + "\n".join(notes) + "\n"
    txt_path.write_text(text)
    return [csv_path, txt_path]


def check_complete(records: Sequence[RunRecord]) -> None:
    """Every (cell, method, arm) seen must have every seed seen for its cell."""
    if not records:
        raise ParameterError("empty ledger")
    seeds_by_cell = defaultdict(set)
    combos = set()
    present = set()
    for r in records:
        seeds_by_cell[r.cell].add(r.seed)
        combos.add((r.cell, r.method, r.arm))
        present.add((r.cell, r.seed, r.method, r.arm))
    missing = [(c, s, m, a) for c, m, a in sorted(combos) for s in sorted(seeds_by_cell[c])
               if (c, s, m, a) not in present]
    if missing:
        raise IncompleteGridError(missing)


def _by_key(records, arm=None):
    out = defaultdict(dict)
    for r in records:
        if arm is None or r.arm == arm:
            out[(r.cell, r.method)][(r.seed, r.arm)] = r
    return out


def arm_deltas(records: Sequence[RunRecord], cell: str, method: str, arm_a: str,
               arm_b: str) -> np.ndarray:
    """Per-seed AUROC(arm_a) - AUROC(arm_b), skipping seeds where either failed."""
    table = _by_key(records)[(cell, method)]
    seeds = sorted({s for s, _ in table})
    out = []
    for s in seeds:
        a, b = table.get((s, arm_a)), table.get((s, arm_b))
        if a is not None and b is not None and a.ok and b.ok:
            out.append(a.auroc - b.auroc)
    return np.array(out)


@dataclass
class GapRow:
    scheme: str
    k: int
    cell: str  # a cell label, or "K=<k>" for rows pooled over T
    method: str
    size_matched: PairedTestResult | None
    confounded: PairedTestResult | None


def _safe_test(deltas, label) -> PairedTestResult | None:
    return paired_test(deltas, label) if len(deltas) >= 3 else None


def _group_order(key: tuple) -> tuple:
    t = int(parse_cell_label(key[2])["t"]) if len(key) > 2 else 0
    return key[0], key[1], t


def gap_rows(records: Sequence[RunRecord], pooled: bool = False) -> list[GapRow]:
    """Size-matched (combined - obs_big) and confounded (combined - obs) gaps.

    ``pooled`` concatenates seeds across cells that share (scheme, K, method).
    """
    cells = sorted({r.cell for r in records})
    methods = sorted({r.method for r in records})
    groups: dict[tuple, list[str]] = defaultdict(list)
    for c in cells:
        info = parse_cell_label(c)
        key = (info.get("scheme", ""), int(info["k"]))
        groups[key if pooled else key + (c,)].append(c)
    rows = []
    for key in sorted(groups, key=_group_order):
        members = groups[key]
        for m in methods:
            sm = np.concatenate([arm_deltas(records, c, m, "combined", "obs_big") for c in members])
            cf = np.concatenate([arm_deltas(records, c, m, "combined", "obs") for c in members])
            label = f"K={key[1]}" if pooled else members[0]
            rows.append(GapRow(key[0], key[1], label, m, _safe_test(sm, f"{label} {m} size-matched"),
                               _safe_test(cf, f"{label} {m} confounded")))
    return rows


def _gap_text(res: PairedTestResult | None) -> str:
    if res is None:
        return "n/a"
    p = res.p_ttest if res.p_ttest is not None else res.p_sign
    return f"{res.mean_delta:+.3f} ({p:.1e}, {res.n})"


def _mean_sd(values) -> tuple[float, float, int]:
    v = np.array([x for x in values if x is not None and not math.isnan(x)])
    if v.size == 0:
        return float("nan"), float("nan"), 0
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0, int(v.size)


def _summary_rows(records):
    groups = defaultdict(list)
    fails = defaultdict(int)
    for r in records:
        groups[(r.cell, r.method, r.arm)].append(r.auroc if r.ok else float("nan"))
        fails[(r.cell, r.method, r.arm)] += not r.ok
    rows = []
    for key in sorted(groups):
        mean, sd, n = _mean_sd(groups[key])
        rows.append([*key, mean, sd, n, fails[key]])
    return rows


@dataclass
class SurvivesSummary:
    cell: str
    best_baseline: str
    best_baseline_auroc: float
    variant_auroc: dict[str, float]
    cells_won: int
    n_cells: int
    lasso_seed_wins: int
    n_seeds: int


def survives_summary(records: Sequence[RunRecord]) -> list[SurvivesSummary]:
    """Per data cell: bottleneck (d, lambda) variants vs the best tuned baseline."""
    out = []
    for cell in sorted({r.cell for r in records}):
        rec = [r for r in records if r.cell == cell]
        means = {}
        for m in sorted({r.method for r in rec}):
            means[m], _, _ = _mean_sd([r.auroc for r in rec if r.method == m and r.ok])
        variants = {m: v for m, v in means.items() if m.split(":")[0] == REFERENCE}
        baselines = {m: v for m, v in means.items() if m.split(":")[0] != REFERENCE}
        if not variants or not baselines:
            raise IncompleteGridError([(cell, "bottleneck variants and baselines")])
        best = max(sorted(baselines), key=lambda m: baselines[m])
        won = sum(v > baselines[best] for v in variants.values())
        per_seed = _by_key(rec)
        lasso = per_seed.get((cell, "lasso"), {})
        ref = per_seed.get((cell, DEFAULT_BOTTLENECK), {})
        seeds = sorted({s for s, _ in lasso} & {s for s, _ in ref})
        lasso_wins = sum(lasso[(s, "obs")].auroc >= ref[(s, "obs")].auroc for s in seeds
                         if lasso[(s, "obs")].ok and ref[(s, "obs")].ok)
        out.append(SurvivesSummary(cell, best, baselines[best], variants, won, len(variants),
                                   lasso_wins, len(seeds)))
    return out


def emit_reports(records: Sequence[RunRecord], stage: str, out_dir: str | Path,
                 audits: dict | None = None) -> list[Path]:
    """Write the stage's tables into ``out_dir``; validates the ledger first."""
    records = [r for r in records if r.stage == stage]
    check_complete(records)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = write_table(out_dir, f"{stage}_summary",
                        ["cell", "method", "arm", "mean_auroc", "sd_auroc", "n", "failures"],
                        _summary_rows(records))
    if stage == "f2":
        paths += _emit_f2(records, out_dir)
    elif stage == "f3":
        paths += _emit_f3(records, out_dir, audits or {})
    elif stage in ("f4", "f5"):
        paths += _emit_gaps(records, stage, out_dir)
    elif stage == "survives":
        paths += _emit_survives(records, out_dir)
    return paths


def _emit_f2(records, out_dir):
    obs = [r for r in records if r.arm == "obs"]
    table = win_rate_table(obs, REFERENCE)
    methods = sorted({r.method for r in obs})
    rows = []
    for m in methods:
        auc, _, _ = _mean_sd([r.auroc for r in obs if r.method == m and r.ok])
        mse, _, _ = _mean_sd([r.mse for r in obs if r.method == m and r.ok])
        rows.append([m, auc, mse])
    notes = []
    for metric in ("auroc", "mse"):
        s = table[metric]
        notes.append(f"Bottleneck {metric} win rate: {s.win_rate:.0%} ({s.wins}/{s.n_cells}); "
                     f"mean delta vs best competitor {s.mean_delta:+.4f}")
        tally = ", ".join(f"{m} ({n}/{s.n_cells})" for m, n in s.best_tally().items())
        notes.append(f"Best baseline by {metric}: {tally}")
    cells = [[c, table["auroc"].best_competitor[c], table["mse"].best_competitor[c]]
             for c in sorted(table["auroc"].best_competitor)]
    return (write_table(out_dir, "table1", ["method", "mean_auroc", "mean_mse"], rows, notes)
            + write_table(out_dir, "table1_cells", ["cell", "best_by_auroc", "best_by_mse"], cells))


def _emit_f3(records, out_dir, audits):
    rows = []
    for cell in sorted({r.cell for r in records}):
        for arm in sorted({r.arm for r in records if r.cell == cell}):
            for m in sorted({r.method for r in records}):
                mean, sd, n = _mean_sd([r.auroc for r in records
                                        if r.cell == cell and r.method == m and r.arm == arm and r.ok])
                if n:
                    rows.append([cell, arm, m, f"{mean:.3f} ± {sd:.3f}", n])
    paths = write_table(out_dir, "table2", ["dataset", "truth", "method", "auroc", "n"], rows)
    for dataset_id, report in audits.items():
        audit_rows = [[r["policy"], r["method"], r["auroc"], r["rank"]] for r in report.rows()]
        notes = [f"skipped {p}: {why}" for p, why in report.skipped.items()]
        if "full" in report.ranks and "default" in report.ranks:
            for m in report.methods:
                notes.append(f"{m}: rank {report.ranks['full'][m]} with definitional edges, "
                             f"{report.ranks['default'][m]} without")
        notes += [f"card {c.source}->{c.target} [{c.edge_class}, {c.group}]: {c.citation}"
                  for c in report.cards]
        paths += write_table(out_dir, f"table3_{dataset_id}", ["policy", "method", "auroc", "rank"],
                             audit_rows, notes)
    return paths


def _emit_gaps(records, stage, out_dir):
    headers = ["scheme", "K", "cell", "method", "size_matched gap (p, n)", "confounded gap (p, n)"]
    per_cell = [[g.scheme, g.k, g.cell, g.method, _gap_text(g.size_matched), _gap_text(g.confounded)]
                for g in gap_rows(records)]
    pooled = gap_rows(records, pooled=True)
    paths = write_table(out_dir, f"{stage}_gaps", headers, per_cell,
                        ["p: two-sided paired t-test (sign test when deltas are constant); "
                         "no multiple-comparison correction"])
    paths += write_table(out_dir, f"{stage}_gaps_by_k", headers,
                         [[g.scheme, g.k, g.cell, g.method, _gap_text(g.size_matched),
                           _gap_text(g.confounded)] for g in pooled])
    if stage == "f5":
        ks = sorted({g.k for g in pooled})
        for scheme in sorted({g.scheme for g in pooled}):
            methods = sorted({g.method for g in pooled if g.scheme == scheme})
            lookup = {(g.method, g.k): g for g in pooled if g.scheme == scheme}
            rows = [[m, *(_gap_text(lookup[(m, k)].size_matched) if (m, k) in lookup else "n/a"
                          for k in ks)] for m in methods]
            paths += write_table(out_dir, f"f5_{scheme}", ["method", *(f"K={k}" for k in ks)], rows,
                                 ["size-matched gain AUROC(combined) - AUROC(obs_big): gap (p, n)"])
    return paths


def _emit_survives(records, out_dir):
    paths = []
    for s in survives_summary(records):
        rows = [[m, v, "yes" if v > s.best_baseline_auroc else "no"]
                for m, v in sorted(s.variant_auroc.items())]
        notes = [f"best tuned baseline: {s.best_baseline} ({s.best_baseline_auroc:.4f})",
                 f"bottleneck beats it on {s.cells_won}/{s.n_cells} cells",
                 f"lasso >= default bottleneck on {s.lasso_seed_wins}/{s.n_seeds} seeds"]
        tag = "_".join(f"{k}{v}" for k, v in parse_cell_label(s.cell).items() if k != "family")
        paths += write_table(out_dir, f"survives_{tag}", ["variant", "mean_auroc", "beats_best"],
                             rows, notes)
    return paths
