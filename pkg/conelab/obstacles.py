"""Obstacle shapes given by signed-distance predicates.

``sdf`` is positive in the fluid domain, zero on the obstacle surface and
negative inside the obstacle. ``normal`` is the unit gradient of ``sdf``,
pointing from the obstacle into the fluid.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
import logging
from typing import Any, Dict, Optional, Type

import numpy as np
import voluptuous as vol

from .const import ERROR_CODES

_LOGGER = logging.getLogger(__name__)

OBSTACLE_NONE = "none"
DEFAULT_SPHERE_RADIUS = 0.15

_POINT = vol.All(vol.ExactSequence([vol.Coerce(float)] * 3), vol.Coerce(tuple))


class Obstacle(ABC):
    """Base class for obstacle shapes."""

    obstacle_id: str = ""
    PARAMETER_SCHEMA = vol.Schema({})

    def __init__(self, **parameters: Any):
        try:
            self.parameters: Dict[str, Any] = self.PARAMETER_SCHEMA(dict(parameters))
        except vol.Invalid as err:
            raise ValueError(f"Invalid parameters for obstacle '{self.obstacle_id}': {err}") from err

    @property
    @abstractmethod
    def description(self) -> str:
        """One-line description for listings."""

    @abstractmethod
    def sdf(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Signed distance, positive in the fluid."""

    @abstractmethod
    def normal(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Unit normal into the fluid, shape ``(3, *x.shape)``."""

    def project(self, points: np.ndarray) -> np.ndarray:
        """Closest surface points for an ``(n, 3)`` array of points."""
        x, y, z = points.T
        d = self.sdf(x, y, z)
        n = self.normal(x, y, z)
        return points - (d * n).T

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.parameters})"


class SphereObstacle(Obstacle):
    """Solid ball."""

    obstacle_id = "sphere"
    PARAMETER_SCHEMA = vol.Schema(
        {
            vol.Optional("center", default=(0.5, 0.0, 0.0)): _POINT,
            vol.Optional("radius", default=DEFAULT_SPHERE_RADIUS): vol.All(
                vol.Coerce(float), vol.Range(min=0.0, min_included=False)
            ),
        }
    )

    @property
    def description(self) -> str:
        return "Solid ball of given center and radius"

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.parameters["center"], dtype=float)

    @property
    def radius(self) -> float:
        return self.parameters["radius"]

    def _offset(self, x, y, z):
        c = self.center
        return np.stack([np.asarray(x) - c[0], np.asarray(y) - c[1], np.asarray(z) - c[2]])

    def sdf(self, x, y, z):
        return np.sqrt(np.sum(self._offset(x, y, z) ** 2, axis=0)) - self.radius

    def normal(self, x, y, z):
        offset = self._offset(x, y, z)
        length = np.sqrt(np.sum(offset**2, axis=0))
        return offset / np.where(length > 0.0, length, 1.0)


class HalfSpaceObstacle(Obstacle):
    """Everything on the far side of a plane; the fluid is where (x - p) . n > 0."""

    obstacle_id = "half_space"
    PARAMETER_SCHEMA = vol.Schema(
        {
            vol.Optional("point", default=(0.0, 0.0, 0.0)): _POINT,
            vol.Optional("normal", default=(0.0, 0.0, 1.0)): _POINT,
        }
    )

    def __init__(self, **parameters: Any):
        super().__init__(**parameters)
        n = np.asarray(self.parameters["normal"], dtype=float)
        if np.linalg.norm(n) == 0.0:
            raise ValueError("half_space normal must be nonzero")
        self._normal = n / np.linalg.norm(n)
        self._point = np.asarray(self.parameters["point"], dtype=float)

    @property
    def description(self) -> str:
        return "Half space bounded by a plane (flat obstacle face)"

    def sdf(self, x, y, z):
        p, n = self._point, self._normal
        return (np.asarray(x) - p[0]) * n[0] + (np.asarray(y) - p[1]) * n[1] + (np.asarray(z) - p[2]) * n[2]

    def normal(self, x, y, z):
        shape = np.shape(x)
        return np.stack([np.full(shape, c) for c in self._normal])


class ObstacleRegistry:
    """Registry for obstacle shapes."""

    _obstacles: Dict[str, Type[Obstacle]] = {}

    @classmethod
    def register_obstacle(cls, obstacle: Type[Obstacle]) -> None:
        """Register an obstacle class."""
        cls._obstacles[obstacle.obstacle_id] = obstacle

    @classmethod
    def get_obstacle(cls, obstacle_id: str) -> Optional[Type[Obstacle]]:
        """Get a registered obstacle class by ID."""
        return cls._obstacles.get(obstacle_id)

    @classmethod
    def get_all_obstacles(cls) -> Dict[str, Type[Obstacle]]:
        """Get all registered obstacle classes."""
        return cls._obstacles.copy()


def initialize_obstacles() -> None:
    """Register the built-in obstacle shapes."""
    for obstacle in (SphereObstacle, HalfSpaceObstacle):
        ObstacleRegistry.register_obstacle(obstacle)


def get_obstacle(obstacle_id: str, **parameters: Any) -> Optional[Obstacle]:
    """Instantiate an obstacle by name; ``none`` gives None."""
    if obstacle_id == OBSTACLE_NONE:
        return None
    if not ObstacleRegistry.get_all_obstacles():
        initialize_obstacles()
    obstacle = ObstacleRegistry.get_obstacle(obstacle_id)
    if obstacle is None:
        available = ", ".join([OBSTACLE_NONE, *sorted(ObstacleRegistry.get_all_obstacles())])
        raise KeyError(f"{ERROR_CODES['UNKNOWN_NAME']}: obstacle '{obstacle_id}'. Available: {available}")
    return obstacle(**parameters)
