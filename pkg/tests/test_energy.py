"""Tests for energies, mantle flux, the density identity and boundary diagnostics."""
import numpy as np
import pytest

from conelab.const import DISTANCE_OBSTACLE_AVOIDING
from conelab.energy import (
    ConeSpec,
    SliceFields,
    boundary_trace_bound,
    cone_energy,
    density_identity_residual,
    flux_cauchy_schwarz_margin,
    flux_direct,
    l6_cone_mass,
    mantle_slice_rate,
    tangency_check,
    total_energy,
)
from conelab.fields import Grid, integrate
from conelab.geodesic import GeodesicField, exact_flat_distance
from conelab.metric.registry import get_metric
from conelab.wave import WaveState, apply_operator

ORIGIN = (0.0, 0.0, 0.0)


def manufactured(grid, t):
    """u and u_t of a smooth travelling field."""
    X, Y, Z = grid.coordinates
    u = 0.3 * np.sin(1.3 * X + 0.4 * t) * np.cos(0.7 * Y) + 0.2 * np.sin(0.9 * Z - 1.1 * X + 0.8 * t)
    u_t = 0.12 * np.cos(1.3 * X + 0.4 * t) * np.cos(0.7 * Y) + 0.16 * np.cos(0.9 * Z - 1.1 * X + 0.8 * t)
    return u, u_t


def manufactured_history(grid, dt):
    history = []
    for index, t in enumerate((-dt, 0.0, dt)):
        u, u_t = manufactured(grid, t)
        u_prev, _ = manufactured(grid, t - dt)
        history.append(WaveState(u_prev, u, t, dt, index, u_t))
    return history


def still_slice(grid, flat_metric, t):
    """u = 0, u_t = 1: the energy density is 1/2 everywhere."""
    return SliceFields.from_arrays(t, np.zeros(grid.shape), np.ones(grid.shape), flat_metric)


class TestEnergies:
    """Test total and cone energies."""

    def test_zero_field(self, medium_grid, flat_metric):
        zero = np.zeros(medium_grid.shape)
        sf = SliceFields.from_arrays(0.0, zero, zero, flat_metric)
        assert total_energy(sf, flat_metric) == 0.0

    def test_state_without_velocity(self, medium_grid, flat_metric):
        zero = np.zeros(medium_grid.shape)
        with pytest.raises(ValueError):
            total_energy(WaveState(zero, zero, 0.0, 0.01), flat_metric)

    def test_constant_density(self, medium_grid, flat_metric, flat_geodesic):
        sf = still_slice(medium_grid, flat_metric, 0.0)
        assert total_energy(sf, flat_metric) == pytest.approx(0.5 * medium_grid.size * medium_grid.cell_volume)
        cone = ConeSpec(0.4, flat_geodesic)
        ball = 4.0 / 3.0 * np.pi * 0.4**3
        assert cone_energy(sf, cone) == pytest.approx(0.5 * ball, rel=0.05)

    def test_stiffness_pairs_with_stepper(self, medium_grid, flat_metric):
        X, Y, Z = medium_grid.coordinates
        u = 0.1 * np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z)
        u = np.where(medium_grid.dirichlet, 0.0, u)
        sf = SliceFields.from_arrays(0.0, u, np.zeros(medium_grid.shape), flat_metric)
        potential = integrate(u**6 / 6.0, medium_grid)
        paired = -0.5 * integrate(u * apply_operator(u, flat_metric), medium_grid) + potential
        assert total_energy(sf, flat_metric) == pytest.approx(paired, rel=1e-12)
        # 1/2 int |grad u|^2 of the standing mode
        assert total_energy(sf, flat_metric) == pytest.approx(0.015 * np.pi**2, rel=1e-2)

    def test_cone_sections(self, flat_geodesic):
        cone = ConeSpec(0.4, flat_geodesic)
        assert cone.radius(0.1) == pytest.approx(0.3)
        assert np.count_nonzero(cone.region(0.1)) > np.count_nonzero(cone.region(0.3))
        assert not cone.region(0.5).any()
        wide = cone.expanded(0.1)
        assert wide.radius(0.1) == pytest.approx(0.4)
        assert np.all(wide.region(0.1) >= cone.region(0.1))

    def test_l6_mass_of_constant(self, medium_grid, flat_metric, flat_geodesic):
        u = np.ones(medium_grid.shape)
        sf = SliceFields.from_arrays(0.0, u, np.zeros(medium_grid.shape), flat_metric)
        cone = ConeSpec(0.4, flat_geodesic)
        # u = 1: the mass is a sixth of the section volume
        assert l6_cone_mass(sf, cone) == pytest.approx(4.0 / 18.0 * np.pi * 0.4**3, rel=0.05)
        assert l6_cone_mass(SliceFields.from_arrays(0.5, u, u, flat_metric), cone) == 0.0

    def test_past_apex_is_empty(self, medium_grid, flat_metric, flat_geodesic):
        cone = ConeSpec(0.4, flat_geodesic)
        assert cone_energy(still_slice(medium_grid, flat_metric, 0.6), cone) == 0.0

    def test_negative_delta(self, flat_geodesic):
        with pytest.raises(ValueError):
            ConeSpec(0.4, flat_geodesic, delta=-0.1)


class TestFlux:
    """Test the mantle flux."""

    def test_empty_shell(self, medium_grid, flat_metric, flat_geodesic):
        cone = ConeSpec(10.0, flat_geodesic)
        assert mantle_slice_rate(still_slice(medium_grid, flat_metric, 0.0), cone) is None

    def test_direct_flux_matches_cone_loss(self, medium_grid, flat_metric, flat_geodesic):
        cone = ConeSpec(0.4, flat_geodesic)
        times = np.linspace(0.0, 0.2, 21)
        slices = [still_slice(medium_grid, flat_metric, t) for t in times]
        # rate = 1/2 |sphere of radius 0.4 - t|
        expected = 2.0 * np.pi * (0.4**3 - 0.2**3) / 3.0
        assert flux_direct(slices, cone) == pytest.approx(expected, rel=0.15)
        loss = cone_energy(slices[0], cone) - cone_energy(slices[-1], cone)
        assert loss == pytest.approx(expected, rel=0.15)

    def test_cauchy_schwarz_margin(self, medium_grid, flat_metric, flat_geodesic, rng):
        u = rng.normal(size=medium_grid.shape)
        u_t = rng.normal(size=medium_grid.shape)
        sf = SliceFields.from_arrays(0.0, u, u_t, flat_metric)
        assert flux_cauchy_schwarz_margin(sf, flat_geodesic) >= -1e-12


class TestDensityIdentity:
    """Test the local energy identity."""

    def test_algebraic_residual_converges(self):
        errors = []
        for n in (16, 32):
            grid = Grid.box(n, -1.0, 1.0)
            M = get_metric("wavy").build(grid)
            history = manufactured_history(grid, 0.5 * grid.h_max)
            residual = density_identity_residual(history, M, mode="algebraic")
            errors.append(np.max(np.abs(residual)))
        assert errors[1] < errors[0] / 3.0

    def test_needs_three_snapshots(self, small_grid):
        M = get_metric("identity").build(small_grid)
        history = manufactured_history(small_grid, 0.01)
        with pytest.raises(ValueError):
            density_identity_residual(history[:2], M)
        with pytest.raises(ValueError):
            density_identity_residual(history, M, mode="weak")


class TestBoundaryTrace:
    def test_trace_bound(self):
        norm, ratio = boundary_trace_bound([0.0, 1.0], [1.0, 1.0], 2.0)
        assert norm == pytest.approx(1.0)
        assert ratio == pytest.approx(0.5)

    def test_zero_trace(self):
        assert boundary_trace_bound([0.0, 1.0], [0.0, 0.0], 0.0) == (0.0, 0.0)

    def test_invalid_input(self):
        with pytest.raises(ValueError):
            boundary_trace_bound([0.0, 1.0], [1.0], 1.0)
        with pytest.raises(ValueError):
            boundary_trace_bound([0.0, 1.0], [1.0, 1.0], 0.0)


class TestTangency:
    """Test the boundary tangency fit near an apex on the sphere."""

    @pytest.fixture
    def apex_geodesic(self, sphere):
        grid = Grid.box(48, -1.0, 1.0, sphere)
        M = get_metric("identity").build(grid)
        x0 = (0.35, 0.0, 0.0)
        return GeodesicField.from_distance(exact_flat_distance(grid, x0), M, x0)

    def test_sphere_exponents(self, apex_geodesic):
        # on a sphere of radius r, grad rho . nu = rho / (2 r)
        report = tangency_check(apex_geodesic, radius=0.25)
        assert report.samples >= 5
        assert report.exponent_raw == pytest.approx(1.0, abs=0.15)
        assert report.exponent_weighted == pytest.approx(2.0, abs=0.15)
        assert report.constant == pytest.approx(1.0 / 0.3, rel=0.2)

    def test_needs_obstacle(self, flat_geodesic):
        with pytest.raises(ValueError):
            tangency_check(flat_geodesic)

    def test_apex_off_surface(self, sphere_grid):
        M = get_metric("identity").build(sphere_grid)
        Gf = GeodesicField.from_distance(exact_flat_distance(sphere_grid, ORIGIN), M, ORIGIN)
        with pytest.raises(ValueError):
            tangency_check(Gf)

    def test_needs_manifold_distance(self, apex_geodesic):
        Gf = GeodesicField.from_distance(
            apex_geodesic.rho, apex_geodesic.metric, apex_geodesic.x0, mode=DISTANCE_OBSTACLE_AVOIDING
        )
        with pytest.raises(ValueError):
            tangency_check(Gf)
