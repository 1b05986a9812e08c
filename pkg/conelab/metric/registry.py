"""Metric registry and initialization."""
from __future__ import annotations

from typing import Any, Dict

from ..const import ERROR_CODES
from . import MetricModel, MetricRegistry
from .zoo import BUILTIN_METRICS


def initialize_metrics() -> None:
    """Register all built-in metric models."""
    for model in BUILTIN_METRICS:
        MetricRegistry.register_metric(model)


def get_available_metrics() -> Dict[str, str]:
    """Map of metric id to description."""
    if not MetricRegistry.get_all_metrics():
        initialize_metrics()
    return {
        metric_id: model().description
        for metric_id, model in sorted(MetricRegistry.get_all_metrics().items())
    }


def get_metric(metric_id: str, **parameters: Any) -> MetricModel:
    """Instantiate a registered metric model with parameters."""
    if not MetricRegistry.get_all_metrics():
        initialize_metrics()
    model = MetricRegistry.get_metric(metric_id)
    if model is None:
        available = ", ".join(sorted(MetricRegistry.get_all_metrics()))
        raise KeyError(f"{ERROR_CODES['UNKNOWN_NAME']}: metric '{metric_id}'. Available: {available}")
    return model(**parameters)
