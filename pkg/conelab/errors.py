"""Exceptions raised by the laboratory."""
from __future__ import annotations

from typing import Optional

from .const import (
    ERROR_CODES,
    EXIT_ASSERTION_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ABORT,
)


class ConeLabError(Exception):
    """Base error; carries the process exit code the CLI should use."""

    exit_code = EXIT_ASSERTION_FAILED


class ConfigError(ConeLabError):
    """Configuration could not be parsed or validated."""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalAbort(ConeLabError):
    """The time stepper produced non-finite values."""

    exit_code = EXIT_NUMERICAL_ABORT

    def __init__(self, message: str, step: Optional[int] = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class CriterionFailed(ConeLabError):
    """A named acceptance criterion did not hold."""

    def __init__(self, criterion: str, detail: str = ""):
        super().__init__(f"{criterion}: {detail}" if detail else criterion)
        self.criterion = criterion


class GridMismatchError(ValueError):
    """Field shape does not match the grid."""

    def __init__(self, expected, got):
        super().__init__(f"{ERROR_CODES['GRID_MISMATCH']}: expected {expected}, got {got}")


class MaskedNodeError(ValueError):
    """A node outside the fluid domain was requested."""

    def __init__(self, node):
        super().__init__(f"{ERROR_CODES['MASKED_NODE']}: {tuple(node)}")
        self.node = tuple(node)


class NotPositiveDefiniteError(ValueError):
    """Coefficient matrix fails positive definiteness at a node."""

    def __init__(self, node, eigenvalue: float):
        super().__init__(
            f"{ERROR_CODES['NOT_POSITIVE_DEFINITE']} at node {tuple(node)} "
            f"(min eigenvalue {eigenvalue:.3e})"
        )
        self.node = tuple(node)


class EikonalNotConverged(RuntimeError):
    """Fast sweeping did not reach its fixed point."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"{ERROR_CODES['EIKONAL_NOT_CONVERGED']} after {iterations} iterations "
            f"(last change {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class BootstrapPreconditionError(ValueError):
    """The smallness condition of the continuity lemma does not hold."""


__all__ = [
    "BootstrapPreconditionError",
    "ConeLabError",
    "ConfigError",
    "CriterionFailed",
    "EikonalNotConverged",
    "GridMismatchError",
    "MaskedNodeError",
    "NotPositiveDefiniteError",
    "NumericalAbort",
]
