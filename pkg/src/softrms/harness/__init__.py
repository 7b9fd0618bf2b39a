"""Experiment runners, success-grid evaluation, export and the CLI."""

from .export import grid_document, parse_document, parse_trajectory_table, summary_document, trajectory_table
from .grid import SuccessGrid, eval_success_grid, region_mean
from .runners import (
    ExperimentResult,
    TableRow,
    mean_trajectory,
    quantiles,
    run_amplitude_sweep,
    run_dynamics_experiment,
    summarize,
    sweep_summary,
)

__all__ = [
    "ExperimentResult",
    "SuccessGrid",
    "TableRow",
    "eval_success_grid",
    "grid_document",
    "mean_trajectory",
    "parse_document",
    "parse_trajectory_table",
    "quantiles",
    "region_mean",
    "run_amplitude_sweep",
    "run_dynamics_experiment",
    "summarize",
    "summary_document",
    "sweep_summary",
    "trajectory_table",
]
