"""Experiment configuration, grid driver, reports and the command-line interface."""
from .config import ExperimentConfig
from .experiment import ResultRow, prepare_data, run_experiment
from .report import aggregate, write_report
