"""Criterion registry and initialization."""
from __future__ import annotations

from typing import Dict

from ..const import ERROR_CODES
from . import Criterion, CriterionRegistry
from .analysis import ANALYSIS_CRITERIA
from .dynamics import DYNAMICS_CRITERIA
from .geometry import GEOMETRY_CRITERIA


def initialize_checks() -> None:
    """Register all built-in criteria."""
    for criterion in (*GEOMETRY_CRITERIA, *DYNAMICS_CRITERIA, *ANALYSIS_CRITERIA):
        CriterionRegistry.register_criterion(criterion)


def get_available_checks() -> Dict[str, str]:
    """Map of criterion id to description."""
    if not CriterionRegistry.get_all_criteria():
        initialize_checks()
    return {
        criterion_id: criterion().description
        for criterion_id, criterion in sorted(CriterionRegistry.get_all_criteria().items())
    }


def get_check(criterion_id: str) -> Criterion:
    if not CriterionRegistry.get_all_criteria():
        initialize_checks()
    criterion = CriterionRegistry.get_criterion(criterion_id)
    if criterion is None:
        available = ", ".join(sorted(CriterionRegistry.get_all_criteria()))
        raise KeyError(f"{ERROR_CODES['UNKNOWN_NAME']}: check '{criterion_id}'. Available: {available}")
    return criterion()
