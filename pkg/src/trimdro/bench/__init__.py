"""Experiment harness: bootstrap-tuned replications and robustness-parameter sweeps."""

from .config import ExperimentConfig, Instance, MethodSpec
from .runner import RECORD_COLUMNS, RunRecord, run_experiment, run_sweep
from .tuning import bootstrap_tune, out_of_sample

__all__ = ["ExperimentConfig", "Instance", "MethodSpec", "RECORD_COLUMNS", "RunRecord",
           "run_experiment", "run_sweep", "bootstrap_tune", "out_of_sample"]
