"""Manufactured-solution benchmark: forcing, error quantities, EOC tables."""
from .errors import ErrorReport, LevelErrors, eoc, error_quantities
from .experiment import ExperimentConfig, run_case, run_experiment, to_csv, to_markdown
from .manufactured import ManufacturedCase, forcing, pressure_mean

__all__ = [
    "ErrorReport",
    "LevelErrors",
    "eoc",
    "error_quantities",
    "ExperimentConfig",
    "run_case",
    "run_experiment",
    "to_csv",
    "to_markdown",
    "ManufacturedCase",
    "forcing",
    "pressure_mean",
]
