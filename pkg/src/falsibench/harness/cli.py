"""Command-line entry point.

Exit codes: 0 success, 1 some cells failed, 2 invalid plan or input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import FalsibenchError, PlanError
from ..evalstats import read_ledger
from .plan import STAGES, ExperimentPlan, SeedDerivation, default_plan
from .registry import default_registry
from .stages import OUT_ENV, output_root, run_stage

logger = logging.getLogger("falsibench")

EXIT_OK, EXIT_CELL_FAILURES, EXIT_INVALID = 0, 1, 2


def _plan(args, stage: str) -> ExperimentPlan:
    plan = ExperimentPlan.load(args.plan) if getattr(args, "plan", None) else default_plan(stage, args.scale)
    if plan.stage != stage:
        raise PlanError(f"plan file is for stage {plan.stage!r}, not {stage!r}")
    if args.out:
        plan.output_dir = str(Path(args.out))
    if getattr(args, "seeds", None):
        plan.n_seeds = args.seeds
    if getattr(args, "real_manifest", None):
        from .plan import RealDataRef

        plan.real_data = [RealDataRef(m, d) for m, d in zip(args.real_manifest, args.real_data or
                                                            [None] * len(args.real_manifest))]
    return plan


def _run(stage: str, args, registry) -> int:
    plan = _plan(args, stage)
    result = run_stage(plan, registry)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    n_fail = len(result.failures)
    print(f"{stage}: {len(result.records)} records, {n_fail} failed -> {result.out_dir}")
    return EXIT_OK if n_fail == 0 else EXIT_CELL_FAILURES


def cmd_gen(args, registry) -> int:
    from ..intervene import build_arms
    from ..synthgen import generate

    plan = _plan(args, args.stage)
    plan.validate(registry)
    seeds = SeedDerivation(plan.base_seed, plan.stage)
    root = output_root(plan) / plan.stage / "data"
    for c_idx, cell in enumerate(plan.cells):
        for s_idx in range(plan.n_seeds):
            target = root / cell.label.replace("/", "_") / f"seed{s_idx}"
            gen_seed = seeds.derive(c_idx, s_idx, "generator")
            if cell.scheme is not None:
                arms = build_arms(cell.generator_spec(gen_seed), cell.intervention_scheme(), cell.t,
                                  seeds.derive(c_idx, s_idx, "intervention"))
                arms.save(target)
            else:
                target.mkdir(parents=True, exist_ok=True)
                series, truth = generate(cell.generator_spec(gen_seed))
                series.to_csv(target / "series.csv")
                truth.to_csv(target / "truth.csv")
    print(f"wrote {len(plan.cells) * plan.n_seeds} datasets under {root}")
    return EXIT_OK


def cmd_run(args, registry) -> int:
    return _run(args.stage, args, registry)


def cmd_report(args, registry) -> int:
    from .reports import emit_reports

    directory = Path(args.out) if args.out else output_root() / args.stage
    ledger = Path(args.ledger) if args.ledger else directory / "ledger.csv"
    if not ledger.is_file():
        print(f"error: no ledger at {ledger}", file=sys.stderr)
        return EXIT_INVALID
    paths = emit_reports(read_ledger(ledger), args.stage, directory)
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def cmd_audit(args, registry) -> int:
    from ..provenance import DEFAULT_REAL_MAX_LAG, Manifest, load_csv_dataset, sensitivity_audit
    from .reports import write_table

    manifest = Manifest.load(args.manifest)
    dataset = load_csv_dataset(args.data or manifest.data_file, manifest)
    scores = {}
    for name in args.methods:
        scores[name] = registry.resolve(name)(dataset.series, DEFAULT_REAL_MAX_LAG, 0).scores
    report = sensitivity_audit(dataset, scores)
    out = Path(args.out) if args.out else output_root() / "audit"
    out.mkdir(parents=True, exist_ok=True)
    rows = [[r["policy"], r["method"], r["auroc"], r["rank"]] for r in report.rows()]
    notes = [f"card {c.source}->{c.target} [{c.edge_class}, {c.group}]: {c.citation}"
             for c in report.cards]
    notes += [f"skipped {p}: {why}" for p, why in report.skipped.items()]
    for p in write_table(out, f"audit_{dataset.dataset_id}", ["policy", "method", "auroc", "rank"],
                         rows, notes):
        print(p)
    return EXIT_OK


def cmd_all(args, registry) -> int:
    status = EXIT_OK
    for stage in STAGES:
        status = max(status, _run(stage, args, registry))
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="falsibench",
                                     description="Falsification benchmark for weight-readout causal discovery.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, stage: bool = True):
        if stage:
            p.add_argument("stage", choices=STAGES)
        p.add_argument("--plan", help="JSON plan file (default: built-in plan)")
        p.add_argument("--scale", choices=("desk", "mini"), default="desk")
        p.add_argument("--seeds", type=int, help="override the number of seeds")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./falsibench_out)")

    p = sub.add_parser("gen", help="write the generated datasets of a plan")
    common(p)
    p.set_defaults(func=cmd_gen)
    p = sub.add_parser("run", help="run one stage and emit its reports")
    common(p)
    p.add_argument("--real-manifest", action="append", help="f3 only: real-data manifest")
    p.add_argument("--real-data", action="append", help="f3 only: CSV for the matching manifest")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("report", help="re-emit reports from an existing ledger")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--ledger")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    p = sub.add_parser("audit", help="ground-truth sensitivity audit on a real dataset")
    p.add_argument("manifest")
    p.add_argument("--data")
    p.add_argument("--methods", nargs="+", default=["granger", "lasso", "ridge", "bottleneck:L=5"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)
    p = sub.add_parser("all", help="run every stage with the built-in plans")
    p.add_argument("--scale", choices=("desk", "mini"), default="desk")
    p.add_argument("--out")
    p.set_defaults(func=cmd_all)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    registry = default_registry()
    try:
        return args.func(args, registry)
    except PlanError as exc:
        print(f"invalid plan: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FalsibenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
