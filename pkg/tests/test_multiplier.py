"""Tests for the multiplier identity, its companions and the cone budget."""
import numpy as np
import pytest

from conelab.convergence import TrigonometricField
from conelab.coordinator import RunCoordinator
from conelab.energy import ConeSpec, SliceFields
from conelab.errors import MaskedNodeError
from conelab.fields import Grid, dot, gradient_fd, matvec
from conelab.geodesic import GeodesicField, frozen_distance
from conelab.ledger import ConeLedger
from conelab.metric.registry import get_metric
from conelab.multiplier import (
    budget_cauchy_schwarz_margin,
    central_region,
    cone_budget,
    covariant_identity_residual,
    hessian_substitution_residual,
    identity_residual,
    mantle_parameterization_residual,
    qpr_fields,
)
from conelab.wave import LeapfrogSolver, WaveState, cfl_dt, make_initial_data

X0 = (0.1, -0.05, 0.0)


def surrogate(grid, metric_id="wavy", **parameters):
    """Frozen-metric distance from X0: phi = rho^2 / 2 is a smooth quadratic."""
    M = get_metric(metric_id, **parameters).build(grid)
    rho, _ = frozen_distance(M, X0)
    return GeodesicField.from_distance(rho, M, X0)


def cone_times(h):
    return -1.0 + 0.5 * h * np.arange(-2, 3)


class TestQPR:
    """Test the multiplier fields at one time."""

    @pytest.mark.parametrize(
        "metric_id, parameters",
        [("identity", {}), ("constant_diagonal", {"d1": 2.0, "d2": 1.0, "d3": 0.5})],
    )
    def test_flat_remainder_is_sixth_power(self, medium_grid, metric_id, parameters):
        # div V = 3 and D^2(rho^2/2) = g, so R reduces to u^6 / 3
        Gf = surrogate(medium_grid, metric_id, **parameters)
        field = TrigonometricField(seed=5, amplitude=0.8)
        sf = SliceFields.from_arrays(-0.5, field(medium_grid), field(medium_grid, 0.3), Gf.metric)
        fields = qpr_fields(sf, Gf, -0.5)
        nodes = Gf.valid
        np.testing.assert_allclose(fields.R[nodes], sf.u[nodes] ** 6 / 3.0, atol=1e-8)
        np.testing.assert_allclose(fields.coef_ut[nodes], 0.0, atol=1e-8)
        np.testing.assert_allclose(fields.coef_grad[nodes], -1.0, atol=1e-8)
        assert np.all(fields.R[~nodes] == 0.0)

    def test_energy_part_of_Q(self, flat_geodesic, medium_grid):
        u = np.zeros(medium_grid.shape)
        sf = SliceFields.from_arrays(-0.5, u, np.ones(medium_grid.shape), flat_geodesic.metric)
        fields = qpr_fields(sf, flat_geodesic, -0.5)
        # u = 0, u_t = 1: Q is the energy density and t P = V / 2
        nodes = flat_geodesic.valid
        np.testing.assert_allclose(fields.Q[nodes], 0.5)
        np.testing.assert_allclose(fields.P[:, nodes], flat_geodesic.dphi[:, nodes] / (2.0 * -0.5), atol=1e-12)

    def test_apex_time_rejected(self, flat_geodesic, medium_grid):
        u = np.zeros(medium_grid.shape)
        sf = SliceFields.from_arrays(0.0, u, u, flat_geodesic.metric)
        with pytest.raises(ValueError):
            qpr_fields(sf, flat_geodesic, 0.0)

    def test_needs_velocity(self, flat_geodesic, medium_grid):
        u = np.zeros(medium_grid.shape)
        with pytest.raises(ValueError):
            qpr_fields(WaveState(u, u, -0.5, 0.01), flat_geodesic, -0.5)


class TestMultiplierIdentity:
    """Test the divergence identity for arbitrary smooth fields."""

    def test_residual_converges(self):
        field = TrigonometricField(seed=0)
        residuals = []
        for n in (16, 32):
            grid = Grid.box(n, -1.0, 1.0)
            Gf = surrogate(grid)
            times = cone_times(grid.h_max)
            result = identity_residual(field.history(grid, times), times, Gf)
            assert result.residual.shape == (3, *grid.shape)
            assert result.lhs_l2 > 0.0
            residuals.append(result.l2)
        assert residuals[1] < residuals[0] / 3.0

    def test_invalid_histories(self, medium_grid, flat_geodesic):
        field = TrigonometricField()
        times = np.array([-0.2, -0.1, 0.0])
        with pytest.raises(ValueError):
            identity_residual(field.history(medium_grid, times), times, flat_geodesic)
        times = np.array([-0.3, -0.2, -0.1])
        with pytest.raises(ValueError):
            identity_residual(field.history(medium_grid, times)[:2], times[:2], flat_geodesic)
        with pytest.raises(ValueError):
            identity_residual(field.history(medium_grid, times), times[:2], flat_geodesic)

    def test_central_region(self, medium_grid):
        region = central_region(medium_grid)
        X, _, _ = medium_grid.coordinates
        assert region[16, 16, 16]
        assert np.all(np.abs(X[region]) <= 0.5 + 1e-12)


class TestCompanionIdentities:
    """Test the covariant, Hessian and mantle identities."""

    def test_covariant_identity_converges(self):
        f_field, x_field = TrigonometricField(seed=1), TrigonometricField(seed=2)
        errors = []
        for n in (16, 32):
            grid = Grid.box(n, -1.0, 1.0)
            M = get_metric("wavy").build(grid)
            residual = covariant_identity_residual(f_field(grid), x_field.vector(grid), M)
            errors.append(np.sqrt(np.sum(residual**2) * grid.cell_volume))
        assert errors[1] < errors[0] / 3.0

    def test_covariant_identity_near_obstacle(self, sphere_grid):
        M = get_metric("identity").build(sphere_grid)
        region = np.zeros(sphere_grid.shape, dtype=bool)
        region[27, 16, 16] = True
        f = TrigonometricField()(sphere_grid)
        with pytest.raises(MaskedNodeError):
            covariant_identity_residual(f, TrigonometricField().vector(sphere_grid), M, region)

    def test_hessian_substitution_converges(self):
        field = TrigonometricField(seed=3)
        errors = []
        for n in (16, 32):
            grid = Grid.box(n, -1.0, 1.0)
            Gf = surrogate(grid)
            residual = hessian_substitution_residual(field(grid), Gf, central_region(grid), require_valid=False)
            errors.append(np.sqrt(np.sum(residual**2) * grid.cell_volume))
        assert errors[1] < errors[0] / 2.5

    def test_hessian_substitution_needs_valid_nodes(self, flat_geodesic, medium_grid):
        u = TrigonometricField()(medium_grid)
        with pytest.raises(ValueError):
            hessian_substitution_residual(u, flat_geodesic, medium_grid.interior(3))

    def test_static_mantle_parameterization(self, flat_geodesic, medium_grid):
        # u independent of t: v = u on the mantle and u_t = 0
        u = TrigonometricField(seed=4)(medium_grid)
        times = np.linspace(-0.5, 0.0, 9)
        history = np.stack([u] * len(times))
        residual = mantle_parameterization_residual(history, times, flat_geodesic)
        assert np.max(np.abs(residual)) < 1e-9

    def test_budget_cauchy_schwarz(self, flat_geodesic, medium_grid, rng):
        u = rng.normal(size=medium_grid.shape)
        u_t = rng.normal(size=medium_grid.shape)
        du = gradient_fd(u, medium_grid)
        W = matvec(flat_geodesic.metric.A, du)
        assert budget_cauchy_schwarz_margin(u_t, W, dot(W, du), flat_geodesic) >= -1e-12


class TestConeBudget:
    """Test the budget over a recorded run."""

    @pytest.fixture
    def ledger(self, flat_metric, flat_geodesic, medium_grid):
        data = make_initial_data(medium_grid, "bump", radius=0.3, amplitude=0.8)
        ledger = ConeLedger(ConeSpec(0.3, flat_geodesic))
        RunCoordinator(LeapfrogSolver(flat_metric), data, cfl_dt(flat_metric), 12, [ledger]).run()
        return ledger

    def test_budget_terms(self, ledger):
        report = cone_budget(ledger)
        assert len(report.rows) == len(ledger) - 1
        S = report.column("S")
        assert np.all(S < 0.0)
        assert np.all(np.diff(np.abs(S)) > 0.0)
        assert report.epsilon == pytest.approx(1e-2 * ledger.E0)
        assert report.constant >= 0.0
        np.testing.assert_allclose(report.column("s2_e0_term"), S**2 * np.cbrt(ledger.E0))

    def test_explicit_epsilon(self, ledger):
        assert cone_budget(ledger, epsilon=0.5).epsilon == 0.5

    def test_empty_ledger(self, flat_geodesic):
        with pytest.raises(ValueError):
            cone_budget(ConeLedger(ConeSpec(0.3, flat_geodesic)))
