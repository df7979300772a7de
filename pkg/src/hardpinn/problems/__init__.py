"""Benchmark problems, metrics and reference data."""

from .base import ProblemError, ProblemSpec
from .builtins import REGISTRY, battery_domain, builtin
from .metrics import compute_metrics, evaluate_metrics, field_metrics
from .reference import ReferenceError, ReferenceTable, load_reference

__all__ = [
    "ProblemError",
    "ProblemSpec",
    "REGISTRY",
    "battery_domain",
    "builtin",
    "compute_metrics",
    "evaluate_metrics",
    "field_metrics",
    "ReferenceError",
    "ReferenceTable",
    "load_reference",
]
