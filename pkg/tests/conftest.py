"""Common fixtures for cone-energy laboratory tests."""
import numpy as np
import pytest

from conelab.fields import Grid
from conelab.geodesic import GeodesicField, exact_flat_distance
from conelab.metric.registry import get_metric
from conelab.obstacles import get_obstacle

ORIGIN = (0.0, 0.0, 0.0)


@pytest.fixture
def small_grid() -> Grid:
    """17^3 nodes on [-1, 1]^3."""
    return Grid.box(16, -1.0, 1.0)


@pytest.fixture
def medium_grid() -> Grid:
    """33^3 nodes on [-1, 1]^3."""
    return Grid.box(32, -1.0, 1.0)


@pytest.fixture
def sphere():
    return get_obstacle("sphere", center=(0.5, 0.0, 0.0), radius=0.15)


@pytest.fixture
def sphere_grid(sphere) -> Grid:
    return Grid.box(32, -1.0, 1.0, sphere)


@pytest.fixture
def flat_metric(medium_grid):
    return get_metric("identity").build(medium_grid)


@pytest.fixture
def wavy_metric(medium_grid):
    return get_metric("wavy").build(medium_grid)


@pytest.fixture
def flat_geodesic(flat_metric) -> GeodesicField:
    """Exact Euclidean distance from the origin with its derived fields."""
    rho = exact_flat_distance(flat_metric.grid, ORIGIN)
    return GeodesicField.from_distance(rho, flat_metric, ORIGIN)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def smooth_field():
    """Callable producing a smooth trigonometric field on any grid."""

    def make(grid: Grid, t: float = 0.0) -> np.ndarray:
        X, Y, Z = grid.coordinates
        return 0.3 * np.sin(1.3 * X + 0.4 * t) * np.cos(0.7 * Y) + 0.2 * np.sin(0.9 * Z - 1.1 * X + 0.8 * t)

    return make
