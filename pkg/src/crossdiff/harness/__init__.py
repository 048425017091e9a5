"""Configuration, experiment orchestration, reporting and the CLI."""

from .config import (DEFAULT_EPS_GRID, DEFAULT_N_GRID, EXPERIMENT_KINDS,
                     ExperimentSpec, parse_config, serialize_config)
from .experiments import Check, RunReport, run_experiment
from .report import read_manifest, write_report

__all__ = [
    "Check", "DEFAULT_EPS_GRID", "DEFAULT_N_GRID", "EXPERIMENT_KINDS",
    "ExperimentSpec", "RunReport", "parse_config", "read_manifest",
    "run_experiment", "serialize_config", "write_report",
]
