"""Stage execution: every (cell, seed, method, arm) combination becomes one RunRecord."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..core import LaggedAdjacency, Series
from ..errors import FalsibenchError, PlanError
from ..evalstats import RunRecord, auroc_flat_lag, write_ledger
from ..intervene import build_arms
from ..provenance import (DEFAULT_POLICY, DEFAULT_REAL_MAX_LAG, FULL_POLICY, RealDataset,
                          effective_truth, load_csv_dataset, sensitivity_audit)
from ..synthgen import generate
from .plan import INTERVENTION_STAGES, ExperimentPlan, SeedDerivation
from .registry import MethodRegistry, default_registry

logger = logging.getLogger(__name__)

OUT_ENV = "FALSIBENCH_OUT"
DEFAULT_OUT = "falsibench_out"


def output_root(plan: ExperimentPlan | None = None) -> Path:
    if plan is not None and plan.output_dir:
        return Path(plan.output_dir)
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass
class StageResult:
    stage: str
    records: list[RunRecord]
    out_dir: Path | None = None
    warnings: list[str] = field(default_factory=list)
    audits: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[RunRecord]:
        return [r for r in self.records if not r.ok]

    @property
    def ok(self) -> bool:
        return not self.failures


def _error_flag(exc: Exception) -> str:
    return f"error={type(exc).__name__}: {exc}".replace("\n", " ")


def _score(method, series: Series, truth: LaggedAdjacency, max_lag: int, seed: int,
           stage: str, cell: str, seed_index: int, arm: str, with_mse: bool) -> RunRecord:
    start = time.perf_counter()
    try:
        out = method(series, max_lag, seed, truth=truth, with_mse=with_mse)
        auroc = auroc_flat_lag(out.scores, truth)
        flags = ";".join(dict.fromkeys(out.flags))
        return RunRecord(stage, cell, seed_index, method.name, arm, auroc, out.mse, flags,
                         time.perf_counter() - start)
    except FalsibenchError as exc:
        return RunRecord(stage, cell, seed_index, method.name, arm, flags=_error_flag(exc),
                         wall_time=time.perf_counter() - start)


def _failed(stage, cell, seed_index, methods, arms, exc) -> list[RunRecord]:
    return [RunRecord(stage, cell, seed_index, m.name, arm, flags=_error_flag(exc))
            for m in methods for arm in arms]


def _run_synthetic(plan: ExperimentPlan, methods, seeds: SeedDerivation) -> list[RunRecord]:
    records = []
    arms_of_stage = ("obs", "combined", "obs_big") if plan.stage in INTERVENTION_STAGES else ("obs",)
    for c_idx, cell in enumerate(plan.cells):
        for s_idx in range(plan.n_seeds):
            gen_seed = seeds.derive(c_idx, s_idx, "generator")
            train_seed = seeds.derive(c_idx, s_idx, "train")
            try:
                if plan.stage in INTERVENTION_STAGES:
                    arm_set = build_arms(cell.generator_spec(gen_seed), cell.intervention_scheme(),
                                         cell.t, seeds.derive(c_idx, s_idx, "intervention"))
                    arms, truth = arm_set.arms(), arm_set.truth
                else:
                    series, truth = generate(cell.generator_spec(gen_seed))
                    arms = {"obs": series}
            except FalsibenchError as exc:
                logger.warning("%s seed %d: generation failed: %s", cell.label, s_idx, exc)
                records += _failed(plan.stage, cell.label, s_idx, methods, arms_of_stage, exc)
                continue
            for method in methods:
                for arm, series in arms.items():
                    records.append(_score(method, series, truth, cell.model_max_lag, train_seed,
                                          plan.stage, cell.label, s_idx, arm, plan.with_mse))
    return records


def _run_real(plan: ExperimentPlan, methods, seeds: SeedDerivation, result: StageResult):
    base = len(plan.cells)
    for r_idx, ref in enumerate(plan.real_data):
        manifest_path = Path(ref.manifest)
        try:
            from ..provenance import Manifest

            manifest = Manifest.load(manifest_path)
            data_file = Path(ref.data_file) if ref.data_file else manifest.data_file
            if not data_file.is_file():
                raise FileNotFoundError(str(data_file))
            dataset = load_csv_dataset(data_file, manifest)
        except (FalsibenchError, FileNotFoundError) as exc:
            msg = f"real data {manifest_path} unavailable ({exc}); running synthetic cells only"
            logger.warning(msg)
            result.warnings.append(msg)
            continue
        _score_real(plan, dataset, methods, seeds, base + r_idx, result)


def _score_real(plan, dataset: RealDataset, methods, seeds, c_idx, result: StageResult):
    truths = {p.name: effective_truth(dataset, p) for p in (DEFAULT_POLICY, FULL_POLICY)}
    audit_scores = {}
    for s_idx in range(plan.n_seeds):
        train_seed = seeds.derive(c_idx, s_idx, "train")
        for method in methods:
            start = time.perf_counter()
            try:
                out = method(dataset.series, DEFAULT_REAL_MAX_LAG, train_seed)
            except FalsibenchError as exc:
                result.records += [RunRecord(plan.stage, dataset.dataset_id, s_idx, method.name,
                                             arm, flags=_error_flag(exc)) for arm in truths]
                continue
            elapsed = time.perf_counter() - start
            for arm, truth in truths.items():
                result.records.append(RunRecord(plan.stage, dataset.dataset_id, s_idx, method.name,
                                                arm, auroc_flat_lag(out.scores, truth), out.mse,
                                                ";".join(out.flags), elapsed))
            if s_idx == 0:
                audit_scores[method.name] = out.scores
    if len(audit_scores) >= 2:
        result.audits[dataset.dataset_id] = sensitivity_audit(dataset, audit_scores)


def run_stage(plan: ExperimentPlan, registry: MethodRegistry | None = None,
              write: bool = True, emit: bool = True) -> StageResult:
    """Validate, execute and (optionally) persist one stage.

    Validation happens before any directory is created. Cell failures are
    recorded in the ledger and never abort the stage.
    """
    registry = registry or default_registry()
    plan.validate(registry)
    seeds = SeedDerivation(plan.base_seed, plan.stage)
    n_cells = len(plan.cells) + len(plan.real_data)
    collisions = seeds.check_collisions(n_cells, plan.n_seeds)
    if collisions:
        raise PlanError(f"seed derivation produced {collisions} collisions")
    methods = [registry.resolve(m) for m in plan.methods]

    result = StageResult(plan.stage, [])
    result.records = _run_synthetic(plan, methods, seeds)
    if plan.real_data:
        if plan.stage != "f3":
            raise PlanError("real data is only scored in stage f3")
        _run_real(plan, methods, seeds, result)
    result.records.sort(key=RunRecord.sort_key)

    if write:
        out = output_root(plan) / plan.stage
        out.mkdir(parents=True, exist_ok=True)
        write_ledger(result.records, out / "ledger.csv")
        plan.save(out / "plan.json")
        result.out_dir = out
        if emit:
            from .reports import emit_reports

            emit_reports(result.records, plan.stage, out, audits=result.audits)
    return result
