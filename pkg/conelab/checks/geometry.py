"""Criteria on the distance field and its derived geometry."""
from __future__ import annotations

import numpy as np

from ..const import DISTANCE_MANIFOLD
from ..energy import tangency_check
from ..geodesic import comparison_check, dijkstra_distance, frozen_distance, small_rho_limits
from ..metric.curvature import curvature
from ..metric.registry import get_metric
from . import CheckResult, Criterion, RunContext

EIKONAL_ERROR_CELLS = 2.0
DIJKSTRA_RELATIVE_TOL = 0.03
SMALL_RHO_TOL = 0.05
TANGENCY_MIN_EXPONENT = 1.5


class EikonalFlatCriterion(Criterion):
    """max |rho - exact| <= 2 h on a constant metric."""

    criterion_id = "eikonal_flat"
    requires = ("geodesic",)

    @property
    def description(self) -> str:
        return "Eikonal distance matches the closed form of a constant metric within 2h"

    def evaluate(self, context: RunContext) -> CheckResult:
        choice = context.config.metric
        if not get_metric(choice.name, **choice.parameters).is_flat:
            raise ValueError(f"metric '{choice.name}' has no closed-form distance")
        Gf = context.geodesic
        if Gf.mode != DISTANCE_MANIFOLD:
            raise ValueError("closed form applies to the manifold distance only")
        exact, _ = frozen_distance(context.metric, Gf.x0)
        error = float(np.max(np.abs(Gf.rho - exact)[Gf.valid]))
        bound = EIKONAL_ERROR_CELLS * context.grid.h_max
        return self.result(error <= bound, error, bound)


class DijkstraAgreementCriterion(Criterion):
    """Relative difference to the graph shortest-path oracle on valid nodes."""

    criterion_id = "dijkstra_agreement"
    requires = ("geodesic",)

    @property
    def description(self) -> str:
        return "Eikonal distance agrees with the Dijkstra oracle within 3%"

    def evaluate(self, context: RunContext) -> CheckResult:
        Gf = context.geodesic
        oracle = dijkstra_distance(
            context.metric,
            Gf.x0,
            stencil_radius=context.config.geodesic["stencil_radius"],
            mode=Gf.mode,
        )
        nodes = Gf.valid & np.isfinite(oracle) & (oracle > 0.0)
        error = float(np.max(np.abs(Gf.rho[nodes] - oracle[nodes]) / oracle[nodes]))
        return self.result(error <= DIJKSTRA_RELATIVE_TOL, error, DIJKSTRA_RELATIVE_TOL)


class SmallRhoCriterion(Criterion):
    """Shell-extrapolated div(rho A grad rho) -> 3 and whitened Hessian -> identity."""

    criterion_id = "small_rho_limits"
    requires = ("geodesic",)

    @property
    def description(self) -> str:
        return "Small-distance limits: div(rho A grad rho) = 3 and D^2(rho^2/2) = g"

    def evaluate(self, context: RunContext) -> CheckResult:
        limits = small_rho_limits(context.geodesic)
        context.artifacts["small_rho"] = limits
        error = max(abs(limits.limit_div - 3.0), float(np.max(np.abs(limits.hess_eigenvalues - 1.0))))
        detail = "div=%.4f eig=%s" % (limits.limit_div, np.array2string(limits.hess_eigenvalues, precision=4))
        return self.result(error <= SMALL_RHO_TOL, error, SMALL_RHO_TOL, detail)


class ComparisonCriterion(Criterion):
    """Laplacian and Hessian comparison bounds with the measured curvature bound.

    Violations on the coarser companion grid are reported; only those that
    persist on the configured grid fail the criterion.
    """

    criterion_id = "comparison_bounds"
    requires = ("geodesic", "rerun")

    @property
    def description(self) -> str:
        return "Laplacian and Hessian comparison bounds hold beyond the h-band after one refinement"

    def evaluate(self, context: RunContext) -> CheckResult:
        config = context.config
        report = curvature(context.metric, seed=config.seed)
        context.artifacts["curvature"] = report
        band_constant = config.diagnostics["band_constant"]
        coarse = context.rerun(config.variant(coarsen=2, geometry_only=True))
        coarse_check = comparison_check(coarse.geodesic, report.bound, band_constant)
        comparison = comparison_check(context.geodesic, report.bound, band_constant)
        context.artifacts["comparison"] = comparison
        persistent = comparison.violations + comparison.hessian_violations
        detail = "a=%.4g, %d Laplacian and %d Hessian violations (coarse grid %d and %d)" % (
            report.bound,
            comparison.violations,
            comparison.hessian_violations,
            coarse_check.violations,
            coarse_check.hessian_violations,
        )
        return self.result(persistent == 0, persistent, 0, detail)


class TangencyCriterion(Criterion):
    """Fitted exponent of rho (grad_g rho . nu) near a boundary apex."""

    criterion_id = "tangency"
    requires = ("geodesic", "obstacle")

    @property
    def description(self) -> str:
        return "Boundary weight rho (grad_g rho . nu) vanishes like rho^p with p >= 1.5"

    def evaluate(self, context: RunContext) -> CheckResult:
        report = tangency_check(
            context.geodesic, context.obstacle, context.config.diagnostics["tangency_radius"]
        )
        context.artifacts["tangency"] = report
        detail = "raw p=%.3f, weighted p=%.3f over %d feet" % (
            report.exponent_raw, report.exponent_weighted, report.samples,
        )
        return self.result(
            report.exponent_weighted >= TANGENCY_MIN_EXPONENT,
            report.exponent_weighted,
            TANGENCY_MIN_EXPONENT,
            detail,
        )


GEOMETRY_CRITERIA = (
    EikonalFlatCriterion,
    DijkstraAgreementCriterion,
    SmallRhoCriterion,
    ComparisonCriterion,
    TangencyCriterion,
)
