from selection_lab.harness.models import ExperimentConfig, ExperimentResult, TrialBatch, load_config
from selection_lab.harness.report import compare_with_bound, emit_csv, parse_csv
from selection_lab.harness.runner import run_experiment

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "TrialBatch",
    "compare_with_bound",
    "emit_csv",
    "load_config",
    "parse_csv",
    "run_experiment",
]
