"""Metrics, datasets, training drivers and the evaluation protocol."""
from maskmar.harness.config import METHODS, ExperimentConfig, load_config, parse_config
from maskmar.harness.dataset import Dataset, Placement, build_dataset
from maskmar.harness.experiment import (
    MetricRow,
    Report,
    evaluate_case,
    run_baseline,
    run_experiment,
    run_train_pc,
    run_train_sc,
)
from maskmar.harness.metrics import SSIMParams, rmse, ssim

__all__ = [
    "METHODS",
    "Dataset",
    "ExperimentConfig",
    "MetricRow",
    "Placement",
    "Report",
    "SSIMParams",
    "build_dataset",
    "evaluate_case",
    "load_config",
    "parse_config",
    "rmse",
    "run_baseline",
    "run_experiment",
    "run_train_pc",
    "run_train_sc",
    "ssim",
]
