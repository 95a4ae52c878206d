"""Python surface for the domain-generalization benchmark toolkit."""

import json as _json

from ._dgbench import (
    ConfigError,
    DataError,
    MetricError,
    RangeError,
    accuracy,
    aggregate,
    auroc,
    expand_beta_delta,
    fairness_report,
    format_mean_std,
    max_f1_threshold,
    mcc,
    subsample_probability,
)
from ._dgbench import config_hash as _config_hash
from ._dgbench import run_experiment as _run_experiment
from ._dgbench import validate_config as _validate_config


def config_hash(config):
    """Content hash of a config (dict or JSON string) after normalization."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _config_hash(config)


def validate_config(config):
    """Validate a config (dict or JSON string); returns the normalized dict."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _json.loads(_validate_config(config))


def run_experiment(config, records_path):
    """Run the search protocol for every configured algorithm.

    Results are appended to records_path (JSONL) and the call is resumable:
    completed cells are loaded instead of re-run.
    """
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _run_experiment(config, records_path)


__all__ = [
    "ConfigError",
    "DataError",
    "MetricError",
    "RangeError",
    "accuracy",
    "aggregate",
    "auroc",
    "config_hash",
    "expand_beta_delta",
    "fairness_report",
    "format_mean_std",
    "max_f1_threshold",
    "mcc",
    "run_experiment",
    "subsample_probability",
    "validate_config",
]
