"""Experiment orchestration: configs, training runs, logs, reports, plots."""

from .config import TrainConfig, load_config, method_credit_spec, parse_config
from .plotting import aggregate_runs, discover_runs, plot_learning_curves
from .report import (
    credit_report_for_checkpoint,
    credit_report_for_run,
    deterministic_rollout,
    evaluate_checkpoint,
    evaluate_policy,
    evaluate_run,
    load_checkpoint_dir,
    load_run,
)
from .runlog import RunLog, RunRecord, read_runlog, runlog_columns
from .train import Learner, TrainResult, Trainer, collect_rollout, load_checkpoint, save_checkpoint, train

__all__ = [
    "TrainConfig",
    "load_config",
    "parse_config",
    "method_credit_spec",
    "RunLog",
    "RunRecord",
    "read_runlog",
    "runlog_columns",
    "Learner",
    "Trainer",
    "TrainResult",
    "train",
    "collect_rollout",
    "save_checkpoint",
    "load_checkpoint",
    "load_run",
    "load_checkpoint_dir",
    "deterministic_rollout",
    "evaluate_run",
    "evaluate_checkpoint",
    "evaluate_policy",
    "credit_report_for_run",
    "credit_report_for_checkpoint",
    "aggregate_runs",
    "discover_runs",
    "plot_learning_curves",
]
