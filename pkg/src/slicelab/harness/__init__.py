"""Experiment orchestration: evaluation suite, staged runs, CLI, reports."""
from .experiments import (
    CollectRecipe,
    ExperimentSpec,
    Manifest,
    StageRunner,
    baseline_rows,
    reward_variant_experiment,
    run_experiment,
    sla_transfer_experiment,
)
from .report import training_curve, write_report
from .suite import (
    EvalPoint,
    EvalResult,
    EvalSuite,
    ResultRow,
    even_split,
    returns_eval_fn,
    rows_from_csv,
    rows_to_csv,
)

__all__ = [
    "CollectRecipe",
    "EvalPoint",
    "EvalResult",
    "EvalSuite",
    "ExperimentSpec",
    "Manifest",
    "ResultRow",
    "StageRunner",
    "baseline_rows",
    "even_split",
    "returns_eval_fn",
    "reward_variant_experiment",
    "rows_from_csv",
    "rows_to_csv",
    "run_experiment",
    "sla_transfer_experiment",
    "training_curve",
    "write_report",
]
