"""Coefficient matrices A(x), the Riemannian metric g = A^-1 and its model zoo."""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
import logging
from typing import Any, Dict, Optional, Sequence, Tuple, Type

import numpy as np
import voluptuous as vol

from ..const import ERROR_CODES
from ..errors import MaskedNodeError, NotPositiveDefiniteError
from ..fields import Grid, field_matrices, gradient_fd, matvec, node_matrices, quadratic_form

_LOGGER = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


class MetricModel(ABC):
    """Base class for metric models.

    A model is an analytic recipe for the coefficient matrix A(x). Parameters
    are validated against ``PARAMETER_SCHEMA`` when the model is created.
    """

    metric_id: str = ""
    PARAMETER_SCHEMA = vol.Schema({}, extra=vol.PREVENT_EXTRA)

    def __init__(self, **parameters: Any):
        try:
            self.parameters: Dict[str, Any] = self.PARAMETER_SCHEMA(dict(parameters))
        except vol.Invalid as err:
            raise ValueError(f"Invalid parameters for metric '{self.metric_id}': {err}") from err
        is_valid, error_msg = self.validate_parameters()
        if not is_valid:
            raise ValueError(f"Invalid parameters for metric '{self.metric_id}': {error_msg}")

    @property
    @abstractmethod
    def name(self) -> str:
        """Display name."""

    @property
    @abstractmethod
    def description(self) -> str:
        """One-line description for listings."""

    @property
    def is_flat(self) -> bool:
        """Whether the model is known to have zero curvature."""
        return False

    @abstractmethod
    def coefficients(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Evaluate A at the given coordinates; returns shape ``(3, 3, *x.shape)``."""

    def validate_parameters(self) -> Tuple[bool, Optional[str]]:
        """Cross-parameter checks. Returns (is_valid, error_message)."""
        return True, None

    def build(self, grid: Grid) -> "MetricField":
        """Sample the model on a grid."""
        A = self.coefficients(*grid.coordinates)
        field = MetricField.from_coefficients(grid, A, name=self.metric_id)
        _LOGGER.info(
            "Built metric '%s' on %s nodes: c1=%.6g c2=%.6g",
            self.metric_id, grid.shape, field.c1, field.c2,
        )
        return field

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.parameters})"


class MetricRegistry:
    """Registry for metric models."""

    _models: Dict[str, Type[MetricModel]] = {}

    @classmethod
    def register_metric(cls, model: Type[MetricModel]) -> None:
        """Register a metric model class."""
        cls._models[model.metric_id] = model

    @classmethod
    def get_metric(cls, metric_id: str) -> Optional[Type[MetricModel]]:
        """Get a registered metric model by ID."""
        return cls._models.get(metric_id)

    @classmethod
    def get_all_metrics(cls) -> Dict[str, Type[MetricModel]]:
        """Get all registered metric models."""
        return cls._models.copy()


@dataclass(frozen=True, eq=False)
class MetricField:
    """Node-sampled coefficient field with its inverse, determinant and bounds."""

    grid: Grid
    A: np.ndarray
    g: np.ndarray
    G: np.ndarray
    c1: float
    c2: float
    name: str = "custom"

    @classmethod
    def from_coefficients(cls, grid: Grid, A: np.ndarray, name: str = "custom") -> "MetricField":
        A = np.asarray(grid.check_matrix(np.broadcast_to(A, (3, 3, *grid.shape))), dtype=float)
        A = np.ascontiguousarray(A)
        # the metric is extended through the obstacle, so bounds cover every node
        c1, c2 = ellipticity_bounds(A, grid)
        stack = node_matrices(A)
        g = np.ascontiguousarray(field_matrices(np.linalg.inv(stack)))
        G = np.linalg.det(node_matrices(g))
        for arr in (A, g, G):
            arr.setflags(write=False)
        return cls(grid, A, g, G, c1, c2, name)

    @property
    def sqrt_G(self) -> np.ndarray:
        return np.sqrt(self.G)

    @cached_property
    def christoffel(self) -> np.ndarray:
        """Christoffel symbols of the second kind, shape ``(3, 3, 3, *grid)`` as [k, i, j]."""
        from .curvature import christoffel_symbols

        return christoffel_symbols(self.g, self.A, self.grid.spacing)

    def at(self, node: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """Return (A, g) at one node."""
        node = tuple(int(i) for i in node)
        return self.A[(slice(None), slice(None)) + node], self.g[(slice(None), slice(None)) + node]

    def identity_defect(self) -> float:
        """max |g A - I| over all nodes."""
        product = np.einsum("ij...,jk...->ik...", self.g, self.A)
        eye = np.eye(3).reshape(3, 3, 1, 1, 1)
        return float(np.max(np.abs(product - eye)))


def ellipticity_bounds(A: np.ndarray, grid: Grid, region: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """Minimum and maximum eigenvalue of A over the region (all nodes by default).

    Raises ValueError for non-symmetric input and NotPositiveDefiniteError with
    the offending node index when an eigenvalue is not positive.
    """
    A = grid.check_matrix(A)
    region = np.ones(grid.shape, dtype=bool) if region is None else grid.check_scalar(region).astype(bool)
    if not region.any():
        raise ValueError(ERROR_CODES["EMPTY_REGION"])
    stack = node_matrices(A)[region]
    scale = max(float(np.max(np.abs(stack))), 1.0)
    asym = float(np.max(np.abs(stack - np.swapaxes(stack, -1, -2))))
    if asym > SYMMETRY_TOL * scale:
        raise ValueError(f"{ERROR_CODES['NOT_SYMMETRIC']} (max asymmetry {asym:.3e})")
    eigenvalues = np.linalg.eigvalsh(stack)
    lowest = eigenvalues[:, 0]
    if np.any(lowest <= 0.0):
        flat = int(np.argmin(lowest))
        node = np.argwhere(region)[flat]
        raise NotPositiveDefiniteError(node, float(lowest[flat]))
    return float(lowest.min()), float(eigenvalues[:, -1].max())


def g_inner(M: MetricField, X: Sequence[float], Y: Sequence[float], node: Sequence[int]) -> float:
    """Inner product <A^-1 X, Y> of two tangent vectors at a fluid node."""
    node = tuple(int(i) for i in node)
    if not M.grid.mask[node]:
        raise MaskedNodeError(node)
    _, g = M.at(node)
    return float(np.asarray(X, dtype=float) @ g @ np.asarray(Y, dtype=float))


def g_gradient(w: np.ndarray, M: MetricField) -> Tuple[np.ndarray, np.ndarray]:
    """Riemannian gradient A grad w and its squared length a^ij w_i w_j."""
    dw = gradient_fd(w, M.grid)
    return matvec(M.A, dw), quadratic_form(M.A, dw)


__all__ = [
    "MetricField",
    "MetricModel",
    "MetricRegistry",
    "ellipticity_bounds",
    "g_gradient",
    "g_inner",
]
