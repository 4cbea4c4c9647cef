"""Failure detection and isolation for screw assembly time series."""

from ._core import (
    ArgumentError,
    ConfigError,
    DegenerateInputError,
    IngestionError,
    NumericError,
    class_weights,
    confusion,
    ingest,
    load_result,
    metrics,
    paired_ttest,
    parameter_count,
    run,
    simulate,
)

LABELS = ("mounted", "not_mounted", "jammed")

__all__ = [
    "ArgumentError",
    "ConfigError",
    "DegenerateInputError",
    "IngestionError",
    "LABELS",
    "NumericError",
    "class_weights",
    "confusion",
    "ingest",
    "load_result",
    "metrics",
    "paired_ttest",
    "parameter_count",
    "run",
    "simulate",
]
