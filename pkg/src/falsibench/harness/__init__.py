"""Experiment plans, method registry, stage runners and reports."""

from .plan import Cell, ExperimentPlan, SeedDerivation, default_plan
from .registry import MethodOutput, MethodRegistry, default_registry
from .reports import emit_reports
from .stages import StageResult, run_stage

__all__ = [
    "Cell", "ExperimentPlan", "MethodOutput", "MethodRegistry", "SeedDerivation", "StageResult",
    "default_plan", "default_registry", "emit_reports", "run_stage",
]
