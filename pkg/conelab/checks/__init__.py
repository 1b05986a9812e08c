"""Named acceptance criteria evaluated against a finished run."""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
import logging
from typing import Any, Callable, Dict, Optional, Tuple, Type

from ..config import RunConfig
from ..coordinator import FiniteSpeedListener
from ..energy import ConeSpec
from ..fields import Grid
from ..geodesic import GeodesicField
from ..ledger import ConeLedger
from ..metric import MetricField
from ..norms import NormRecorder
from ..obstacles import Obstacle
from ..wave import InitialData

_LOGGER = logging.getLogger(__name__)


@dataclass
class RunContext:
    """Everything a criterion may look at; parts a scenario does not build stay None."""

    config: RunConfig
    grid: Grid
    metric: MetricField
    obstacle: Optional[Obstacle] = None
    geodesic: Optional[GeodesicField] = None
    cone: Optional[ConeSpec] = None
    data: Optional[InitialData] = None
    ledger: Optional[ConeLedger] = None
    norms: Optional[NormRecorder] = None
    finite_speed: Optional[FiniteSpeedListener] = None
    # builds and runs a companion configuration (coarser grid, scaled data)
    rerun: Optional[Callable[[RunConfig], "RunContext"]] = None
    # reports produced while checking (curvature, comparison, budget)
    artifacts: Dict[str, Any] = field(default_factory=dict)

    @property
    def epsilon_h(self) -> float:
        """Quadrature tolerance as an absolute energy."""
        return self.config.diagnostics["quadrature_tol"] * self.ledger.E0


@dataclass
class CheckResult:
    """Outcome of one criterion."""

    criterion: str
    passed: bool
    value: float = float("nan")
    threshold: float = float("nan")
    detail: str = ""

    def as_row(self) -> Tuple[str, bool, float, float, str]:
        return (self.criterion, self.passed, self.value, self.threshold, self.detail)


class Criterion(ABC):
    """Base class for acceptance criteria.

    ``requires`` names the RunContext attributes that must be present.
    """

    criterion_id: str = ""
    requires: Tuple[str, ...] = ()

    @property
    @abstractmethod
    def description(self) -> str:
        """One-line description for listings."""

    def validate_context(self, context: RunContext) -> Tuple[bool, Optional[str]]:
        """Returns (is_valid, error_message)."""
        missing = [name for name in self.requires if getattr(context, name) is None]
        if missing:
            return False, f"run provides no {', '.join(missing)}"
        return True, None

    @abstractmethod
    def evaluate(self, context: RunContext) -> CheckResult:
        """Compute the criterion on a validated context."""

    def result(self, passed: bool, value: float, threshold: float, detail: str = "") -> CheckResult:
        return CheckResult(self.criterion_id, bool(passed), float(value), float(threshold), detail)

    def __call__(self, context: RunContext) -> CheckResult:
        is_valid, error_msg = self.validate_context(context)
        if not is_valid:
            _LOGGER.warning("Criterion %s not applicable: %s", self.criterion_id, error_msg)
            return CheckResult(self.criterion_id, False, detail=error_msg)
        try:
            outcome = self.evaluate(context)
        except ValueError as err:
            _LOGGER.warning("Criterion %s could not be evaluated: %s", self.criterion_id, err)
            return CheckResult(self.criterion_id, False, detail=str(err))
        level = logging.INFO if outcome.passed else logging.WARNING
        _LOGGER.log(
            level, "Criterion %s %s (value %.4g, threshold %.4g)",
            self.criterion_id, "passed" if outcome.passed else "FAILED", outcome.value, outcome.threshold,
        )
        return outcome


class CriterionRegistry:
    """Registry for acceptance criteria."""

    _criteria: Dict[str, Type[Criterion]] = {}

    @classmethod
    def register_criterion(cls, criterion: Type[Criterion]) -> None:
        """Register a criterion class."""
        cls._criteria[criterion.criterion_id] = criterion

    @classmethod
    def get_criterion(cls, criterion_id: str) -> Optional[Type[Criterion]]:
        """Get a registered criterion class by ID."""
        return cls._criteria.get(criterion_id)

    @classmethod
    def get_all_criteria(cls) -> Dict[str, Type[Criterion]]:
        """Get all registered criteria."""
        return cls._criteria.copy()


__all__ = [
    "CheckResult",
    "Criterion",
    "CriterionRegistry",
    "RunContext",
]
