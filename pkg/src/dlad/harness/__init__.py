"""Config-driven experiment orchestration and CLI."""

from .config import ExperimentConfig, parse_config, parse_config_text
from .metrics import MetricsRecord, emit_summary
from .runner import RunResult, run_experiment

__all__ = ["ExperimentConfig", "MetricsRecord", "RunResult", "emit_summary", "parse_config", "parse_config_text", "run_experiment"]
