"""Tests for the grid container, stencils and reductions."""
import numpy as np
import pytest

from conelab.errors import GridMismatchError
from conelab.fields import (
    Grid,
    box_boundary_flux,
    compact_bump,
    compact_gradient_energy,
    divergence_fd,
    flux_divergence,
    gradient_fd,
    hessian_fd,
    integrate,
    pairwise_sum,
    read_grid_dump,
    smooth_transition,
    write_grid_dump,
)
from conelab.metric import MetricField
from conelab.metric.registry import get_metric
from conelab.obstacles import get_obstacle


class TestGrid:
    """Test grid construction and masks."""

    def test_box_shape_and_spacing(self, small_grid):
        assert small_grid.shape == (17, 17, 17)
        assert small_grid.spacing == pytest.approx((0.125, 0.125, 0.125))
        assert small_grid.upper == pytest.approx((1.0, 1.0, 1.0))
        assert not small_grid.has_obstacle

    def test_anisotropic_box(self):
        grid = Grid.box((8, 16, 4), (0.0, -1.0, 0.0), (1.0, 1.0, 2.0))
        assert grid.shape == (9, 17, 5)
        assert grid.h_min == pytest.approx(0.125)
        assert grid.h_max == pytest.approx(0.5)

    def test_invalid_sizes_rejected(self):
        with pytest.raises(ValueError):
            Grid.box(1, -1.0, 1.0)
        with pytest.raises(ValueError):
            Grid.box(8, 1.0, -1.0)

    def test_mask_shape_mismatch(self):
        with pytest.raises(GridMismatchError):
            Grid((4, 4, 4), (0.25, 0.25, 0.25), (0.0, 0.0, 0.0), np.ones((4, 4, 4), dtype=bool))

    def test_disconnected_domain_rejected(self):
        mask = np.ones((9, 9, 9), dtype=bool)
        mask[4, :, :] = False
        with pytest.raises(ValueError, match="connected"):
            Grid((8, 8, 8), (0.25, 0.25, 0.25), (-1.0, -1.0, -1.0), mask)

    def test_obstacle_masks(self, sphere_grid, sphere):
        X, Y, Z = sphere_grid.coordinates
        inside = sphere.sdf(X, Y, Z) <= 0.0
        assert np.array_equal(~sphere_grid.mask, inside)
        assert sphere_grid.boundary.any()
        # boundary nodes belong to the fluid and touch the obstacle
        assert not np.any(sphere_grid.boundary & ~sphere_grid.mask)
        assert np.all(sphere_grid.dirichlet[~sphere_grid.mask])
        assert np.all(sphere_grid.dirichlet[sphere_grid.edge])

    def test_interior_keeps_away_from_edges(self, small_grid):
        interior = small_grid.interior(2)
        assert not interior[:2].any() and not interior[-2:].any()
        assert interior[8, 8, 8]

    def test_nearest_node_and_contains(self, small_grid):
        assert small_grid.nearest_node((0.0, 0.0, 0.0)) == (8, 8, 8)
        assert small_grid.nearest_node((0.06, -0.06, 1.0)) == (8, 8, 16)
        assert not small_grid.contains((1.5, 0.0, 0.0))
        with pytest.raises(ValueError):
            small_grid.nearest_node((1.5, 0.0, 0.0))


class TestStencils:
    """Test finite differences."""

    def test_gradient_exact_on_quadratics(self, small_grid):
        X, Y, Z = small_grid.coordinates
        w = X**2 + 2.0 * X * Y - Z**2 + 3.0 * Z
        expected = np.stack([2.0 * X + 2.0 * Y, 2.0 * X, -2.0 * Z + 3.0])
        np.testing.assert_allclose(gradient_fd(w, small_grid), expected, atol=1e-12)

    def test_gradient_exact_on_quadratics_near_obstacle(self, sphere_grid):
        X, Y, Z = sphere_grid.coordinates
        w = X**2 - Y * Z
        expected = np.stack([2.0 * X, -Z, -Y])
        got = gradient_fd(w, sphere_grid)
        # nodes squeezed between masked nodes along an axis are set to zero
        mask = sphere_grid.interior(2)
        for k in range(3):
            np.testing.assert_allclose(got[k][mask], expected[k][mask], atol=1e-12)
        assert np.all(got[:, ~sphere_grid.mask] == 0.0)

    def test_divergence_of_linear_field(self, small_grid):
        X, Y, Z = small_grid.coordinates
        V = np.stack([2.0 * X + Y, -Y + Z, 4.0 * Z])
        np.testing.assert_allclose(divergence_fd(V, small_grid), 5.0, atol=1e-12)

    def test_hessian_symmetric(self, small_grid, smooth_field):
        H = hessian_fd(smooth_field(small_grid), small_grid)
        np.testing.assert_array_equal(H, np.swapaxes(H, 0, 1))

    def test_gradient_wrong_shape(self, small_grid):
        with pytest.raises(GridMismatchError):
            gradient_fd(np.zeros((5, 5, 5)), small_grid)


def assemble(grid, A):
    """Matrix of flux_divergence over the free (non-Dirichlet) nodes, one column per unit field."""
    free = np.flatnonzero(~grid.dirichlet)
    L = np.empty((free.size, free.size))
    for column, index in enumerate(free):
        e = np.zeros(grid.size)
        e[index] = 1.0
        L[:, column] = flux_divergence(e.reshape(grid.shape), A, grid).ravel()[free]
    return L


ANISOTROPIC = np.array([[1.2, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 0.9]])


class TestFluxOperator:
    """Test the compact operator used by the stepper."""

    @pytest.mark.parametrize("metric_id", ["identity", "wavy"])
    def test_symmetric_negative_definite(self, metric_id):
        grid = Grid.box(6, -1.0, 1.0)
        L = assemble(grid, get_metric(metric_id).build(grid).A)
        scale = np.abs(L).max()
        np.testing.assert_allclose(L, L.T, rtol=0.0, atol=1e-12 * scale)
        assert np.linalg.eigvalsh(0.5 * (L + L.T)).max() < 0.0

    def test_symmetric_around_obstacle(self):
        grid = Grid.box(10, -1.0, 1.0, get_obstacle("sphere", center=(0.4, 0.0, 0.0), radius=0.3))
        assert grid.has_obstacle
        L = assemble(grid, get_metric("wavy").build(grid).A)
        scale = np.abs(L).max()
        np.testing.assert_allclose(L, L.T, rtol=0.0, atol=1e-12 * scale)
        assert np.linalg.eigvalsh(0.5 * (L + L.T)).max() < 0.0

    def test_checkerboard_is_not_a_null_mode(self):
        grid = Grid.box(8, -1.0, 1.0)
        i, j, k = np.indices(grid.shape)
        u = np.where(grid.dirichlet, 0.0, (-1.0) ** (i + j + k))
        Lu = flux_divergence(u, get_metric("identity").build(grid).A, grid)
        inner = grid.interior(2)
        h = grid.h_max
        np.testing.assert_allclose(Lu[inner], -12.0 / h**2 * u[inner])

    def test_second_order_with_mixed_terms(self):
        errors = []
        for n in (8, 16, 32):
            grid = Grid.box(n, -1.0, 1.0)
            A = MetricField.from_coefficients(grid, ANISOTROPIC[:, :, None, None, None]).A
            X, Y, Z = (np.pi * c for c in grid.coordinates)
            u = np.sin(X) * np.sin(Y) * np.sin(Z)
            second = np.pi**2 * np.array(
                [
                    [-u, np.cos(X) * np.cos(Y) * np.sin(Z), np.cos(X) * np.sin(Y) * np.cos(Z)],
                    [np.cos(X) * np.cos(Y) * np.sin(Z), -u, np.sin(X) * np.cos(Y) * np.cos(Z)],
                    [np.cos(X) * np.sin(Y) * np.cos(Z), np.sin(X) * np.cos(Y) * np.cos(Z), -u],
                ]
            )
            exact = np.einsum("ab,ab...->...", ANISOTROPIC, second)
            inner = grid.interior(1)
            errors.append(np.max(np.abs(flux_divergence(u, A, grid) - exact)[inner]))
        assert errors[2] < errors[1] / 3.4
        assert errors[1] < errors[0] / 3.0

    def test_energy_pairs_with_operator(self, medium_grid, rng):
        A = get_metric("wavy").build(medium_grid).A
        u = np.where(medium_grid.dirichlet, 0.0, rng.normal(size=medium_grid.shape))
        stiffness = integrate(compact_gradient_energy(u, A, medium_grid), medium_grid)
        assert stiffness > 0.0
        assert stiffness == pytest.approx(-integrate(u * flux_divergence(u, A, medium_grid), medium_grid), rel=1e-10)

    def test_energy_density_of_linear_field(self, small_grid):
        A = MetricField.from_coefficients(small_grid, ANISOTROPIC[:, :, None, None, None]).A
        X, Y, Z = small_grid.coordinates
        u = X - 2.0 * Y + 0.5 * Z
        slope = np.array([1.0, -2.0, 0.5])
        density = compact_gradient_energy(u, A, small_grid)
        inner = small_grid.interior(1)
        np.testing.assert_allclose(density[inner], slope @ ANISOTROPIC @ slope)


class TestReductions:
    """Test quadrature and deterministic sums."""

    def test_pairwise_sum(self):
        assert pairwise_sum(np.arange(1.0, 11.0)) == 55.0
        assert pairwise_sum(np.array([])) == 0.0
        values = np.random.default_rng(0).normal(size=1001)
        assert pairwise_sum(values) == pytest.approx(np.sum(values), abs=1e-12)

    def test_integrate_constant(self, small_grid):
        assert integrate(np.ones(small_grid.shape), small_grid) == pytest.approx(
            small_grid.size * small_grid.cell_volume
        )

    def test_empty_region_integrates_to_zero(self, small_grid):
        region = np.zeros(small_grid.shape, dtype=bool)
        assert integrate(np.ones(small_grid.shape), small_grid, region) == 0.0

    def test_integrate_ignores_obstacle_nodes(self, sphere_grid):
        ones = np.ones(sphere_grid.shape)
        expected = np.count_nonzero(sphere_grid.mask) * sphere_grid.cell_volume
        assert integrate(ones, sphere_grid) == pytest.approx(expected)

    def test_integrate_is_order_independent(self, small_grid, rng):
        values = rng.normal(size=small_grid.shape)
        region = rng.uniform(size=small_grid.shape) > 0.5
        masked = np.where(region, values, 0.0)
        assert integrate(values, small_grid, region) == integrate(masked, small_grid)

    def test_gaussian_moment(self):
        grid = Grid.box(64, -1.0, 1.0)
        X, Y, Z = grid.coordinates
        sigma = 0.2
        w = np.exp(-(X**2 + Y**2 + Z**2) / (2.0 * sigma**2))
        assert integrate(w, grid) == pytest.approx((2.0 * np.pi) ** 1.5 * sigma**3, rel=5e-3)

    def test_additive_over_complementary_regions(self, small_grid, rng):
        # integer values and a power-of-two cell volume keep every partial sum exact
        assert small_grid.cell_volume == 2.0**-9
        w = rng.integers(-8, 9, size=small_grid.shape).astype(float)
        region = rng.uniform(size=small_grid.shape) > 0.3
        assert integrate(w, small_grid, region) + integrate(w, small_grid, ~region) == integrate(w, small_grid)

    def test_divergence_of_compact_field_integrates_to_zero(self, small_grid):
        X, Y, Z = small_grid.coordinates
        bump = compact_bump(np.sqrt(X**2 + Y**2 + Z**2), 0.5)
        V = np.stack([bump, 2.0 * bump * X, -bump * Z])
        assert abs(integrate(divergence_fd(V, small_grid), small_grid)) < 1e-12

    def test_divergence_theorem_on_the_box(self):
        errors = []
        for n in (16, 32):
            grid = Grid.box(n, -1.0, 1.0)
            X, Y, Z = grid.coordinates
            V = np.stack([X, Y**2, np.sin(Z)])
            flux = box_boundary_flux(V, grid)
            assert flux == pytest.approx(8.0 + 8.0 * np.sin(1.0), rel=1e-12)
            errors.append(abs(integrate(divergence_fd(V, grid), grid) - flux))
        assert errors[1] < 0.6 * errors[0]


class TestProfiles:
    def test_compact_bump(self):
        r = np.array([0.0, 0.5, 0.999, 1.0, 2.0])
        values = compact_bump(r, 1.0)
        assert values[0] == pytest.approx(1.0)
        assert 0.0 < values[1] < 1.0
        assert values[3] == 0.0 and values[4] == 0.0

    def test_smooth_transition(self):
        s = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
        values = smooth_transition(s)
        np.testing.assert_allclose(values, [0.0, 0.0, 0.5, 1.0, 1.0], atol=1e-15)


class TestGridDump:
    def test_dump_round_trip(self, small_grid, smooth_field, tmp_path):
        w = smooth_field(small_grid)
        path = write_grid_dump(tmp_path / "w.txt", small_grid, w)
        dims, spacing, origin, values = read_grid_dump(path)
        assert dims == small_grid.shape
        assert spacing == pytest.approx(small_grid.spacing)
        assert origin == pytest.approx(small_grid.origin)
        np.testing.assert_array_equal(values, w)

    def test_not_a_dump(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("hello\nworld\nagain\n")
        with pytest.raises(ValueError):
            read_grid_dump(path)
