"""Experiment configuration, orchestration, artifacts and regression baselines."""

from .artifacts import ArtifactSet, plot_series
from .baseline import BaselineError, BaselineReport, compare_baseline
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, defaults, load_config
from .experiments import RUNNERS, SCHEMAS, build_backend, build_noise, run_experiment

__all__ = [
    "ArtifactSet", "plot_series", "BaselineError", "BaselineReport", "compare_baseline",
    "EXPERIMENTS", "ConfigError", "ExperimentConfig", "defaults", "load_config",
    "RUNNERS", "SCHEMAS", "build_backend", "build_noise", "run_experiment",
]
