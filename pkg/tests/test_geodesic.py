"""Tests for the eikonal solver, the graph oracle and the derived geometry."""
import numpy as np
import pytest

from conelab.const import DISTANCE_MANIFOLD, DISTANCE_OBSTACLE_AVOIDING, ERROR_CODES
from conelab.errors import EikonalNotConverged
from conelab.geodesic import (
    comparison_check,
    dijkstra_distance,
    exact_flat_distance,
    frozen_distance,
    graph_offsets,
    polar_integral_estimates,
    small_rho_limits,
    solve_eikonal,
)
from conelab.metric.curvature import curvature
from conelab.metric.registry import get_metric

ORIGIN = (0.0, 0.0, 0.0)


class TestEikonal:
    """Test the fast-sweeping distance."""

    def test_flat_distance(self, flat_metric):
        iterations = []
        Gf = solve_eikonal(flat_metric, ORIGIN, monitor=lambda it, change: iterations.append(it))
        grid = flat_metric.grid
        exact = exact_flat_distance(grid, ORIGIN)
        assert np.max(np.abs(Gf.rho - exact)[Gf.valid]) <= 2.0 * grid.h_max
        assert Gf.rho[grid.nearest_node(ORIGIN)] <= grid.h_max
        assert Gf.mode == DISTANCE_MANIFOLD
        assert iterations and iterations[-1] == Gf.iterations
        fraction, _ = Gf.eikonal_summary()
        assert fraction == pytest.approx(1.0)

    def test_constant_anisotropic_matches_frozen_distance(self, medium_grid):
        M = get_metric("constant_diagonal", d1=2.0, d2=1.0, d3=0.5).build(medium_grid)
        x0 = (0.1, -0.05, 0.0)
        Gf = solve_eikonal(M, x0)
        T0, _ = frozen_distance(M, x0)
        assert np.max(np.abs(Gf.rho - T0)[Gf.valid]) <= 2.0 * medium_grid.h_max

    def test_residual_small_on_curved_metric(self, wavy_metric):
        Gf = solve_eikonal(wavy_metric, ORIGIN)
        assert Gf.valid.any()
        assert np.max(Gf.residual[Gf.valid]) <= 10.0 * wavy_metric.grid.h_max
        assert Gf.rho_max == pytest.approx(0.4)

    def test_source_outside_grid(self, flat_metric):
        with pytest.raises(ValueError) as err:
            solve_eikonal(flat_metric, (2.0, 0.0, 0.0))
        assert ERROR_CODES["SOURCE_OUTSIDE_GRID"] in str(err.value)

    def test_unknown_mode(self, flat_metric):
        with pytest.raises(ValueError):
            solve_eikonal(flat_metric, ORIGIN, mode="euclidean")

    def test_not_converged(self, wavy_metric):
        with pytest.raises(EikonalNotConverged):
            solve_eikonal(wavy_metric, ORIGIN, max_iterations=1)

    def test_obstacle_avoiding_is_longer(self, sphere_grid):
        M = get_metric("identity").build(sphere_grid)
        through = solve_eikonal(M, ORIGIN)
        around = solve_eikonal(M, ORIGIN, mode=DISTANCE_OBSTACLE_AVOIDING)
        both = around.valid & through.valid
        assert np.all(around.rho[both] >= through.rho[both] - 2.0 * sphere_grid.h_max)
        behind = sphere_grid.nearest_node((0.75, 0.0, 0.0))
        assert around.rho[behind] > through.rho[behind] + 0.02
        assert not np.any(around.valid & ~sphere_grid.mask)

    def test_source_inside_obstacle_rejected(self, sphere_grid):
        M = get_metric("identity").build(sphere_grid)
        with pytest.raises(ValueError):
            solve_eikonal(M, (0.5, 0.0, 0.0), mode=DISTANCE_OBSTACLE_AVOIDING)


class TestDijkstraOracle:
    """Test the lattice-graph distance."""

    def test_offsets(self):
        assert len(graph_offsets(1)) == 13
        assert len(graph_offsets(2)) == 49
        assert (2, 1, 0) in graph_offsets(2)
        assert (2, 2, 0) not in graph_offsets(2)

    def test_flat_overestimates_within_few_percent(self, flat_metric, flat_geodesic):
        rho = dijkstra_distance(flat_metric, ORIGIN, stencil_radius=2)
        nodes = flat_geodesic.valid
        exact = flat_geodesic.rho[nodes]
        assert np.all(rho[nodes] >= exact - 1e-12)
        assert np.max((rho[nodes] - exact) / exact) < 0.06

    def test_agrees_with_eikonal_on_curved_metric(self, wavy_metric):
        Gf = solve_eikonal(wavy_metric, ORIGIN)
        rho = dijkstra_distance(wavy_metric, ORIGIN, stencil_radius=2)
        nodes = Gf.valid
        assert np.max(np.abs(rho[nodes] - Gf.rho[nodes]) / Gf.rho[nodes]) < 0.1

    def test_source_outside_grid(self, flat_metric):
        with pytest.raises(ValueError):
            dijkstra_distance(flat_metric, (0.0, 3.0, 0.0))


class TestDerivedGeometry:
    """Test the fields derived from the distance."""

    def test_flat_derived_fields(self, flat_geodesic):
        nodes = flat_geodesic.valid
        np.testing.assert_allclose(flat_geodesic.div_rho_gradg[nodes], 3.0, atol=1e-8)
        np.testing.assert_allclose(flat_geodesic.lap_half_rho2[nodes], 3.0, atol=1e-8)
        lengths = np.linalg.norm(flat_geodesic.grad_g_rho[:, nodes], axis=0)
        np.testing.assert_allclose(lengths, 1.0, atol=1e-8)

    def test_small_rho_limits_flat(self, flat_geodesic):
        limits = small_rho_limits(flat_geodesic)
        assert limits.limit_div == pytest.approx(3.0, abs=1e-6)
        np.testing.assert_allclose(limits.hess_eigenvalues, 1.0, atol=1e-6)
        assert limits.bins >= 2

    def test_small_rho_limits_curved(self, medium_grid):
        M = get_metric("conformal").build(medium_grid)
        limits = small_rho_limits(solve_eikonal(M, ORIGIN))
        assert limits.limit_div == pytest.approx(3.0, abs=0.3)
        np.testing.assert_allclose(limits.hess_eigenvalues, 1.0, atol=0.2)


class TestComparison:
    """Test the Laplacian and Hessian comparison bounds."""

    def test_flat_with_zero_curvature(self, flat_geodesic):
        report = comparison_check(flat_geodesic, 0.0)
        assert report.passed
        assert report.worst_margin == pytest.approx(0.0, abs=1e-8)
        assert len(report.rows) == np.count_nonzero(flat_geodesic.valid)

    def test_curved_metric_within_bounds(self, medium_grid):
        M = get_metric("conformal").build(medium_grid)
        Gf = solve_eikonal(M, ORIGIN)
        a = curvature(M).bound
        report = comparison_check(Gf, a)
        assert report.curvature_bound == a
        assert report.passed

    def test_invalid_curvature_bound(self, flat_geodesic):
        with pytest.raises(ValueError):
            comparison_check(flat_geodesic, -0.1)
        with pytest.raises(ValueError):
            comparison_check(flat_geodesic, 4.0)


class TestPolarIntegrals:
    def test_growth_exponent_flat(self, flat_geodesic):
        estimates = polar_integral_estimates(flat_geodesic, [0.2, 0.3, 0.4])
        assert np.all(np.diff(estimates.I1) > 0.0)
        # |grad rho| = 1, so the mantle weight is sqrt(2)
        np.testing.assert_allclose(estimates.I2, np.sqrt(2.0) * estimates.I1, rtol=1e-8)
        assert estimates.exponent_I1 == pytest.approx(1.5, abs=0.3)

    def test_single_value_has_no_exponent(self, flat_geodesic):
        estimates = polar_integral_estimates(flat_geodesic, 0.3)
        assert np.isnan(estimates.exponent_I1)

    def test_beyond_rho_max(self, flat_geodesic):
        with pytest.raises(ValueError):
            polar_integral_estimates(flat_geodesic, 0.5)
