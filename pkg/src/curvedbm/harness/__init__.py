"""Configuration, runners, reports and the command line."""

from .config import ConfigError, ExperimentConfig, build_curve, build_model, parse_curve
from .report import RunResult, render
from .runners import RUNNERS, run

__all__ = ["ConfigError", "ExperimentConfig", "build_curve", "build_model", "parse_curve",
           "RunResult", "render", "RUNNERS", "run"]
