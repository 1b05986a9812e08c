"""Criteria on the time series of a PDE run."""
from __future__ import annotations

import numpy as np

from ..multiplier import cone_budget
from . import CheckResult, Criterion, RunContext

DECAY_FRACTION = 0.1
TRACE_REFINEMENT_TOL = 0.2


class EnergyConservationCriterion(Criterion):
    criterion_id = "energy_conservation"
    requires = ("ledger",)

    @property
    def description(self) -> str:
        return "Relative drift of the total energy stays below the configured tolerance"

    def evaluate(self, context: RunContext) -> CheckResult:
        drift = context.ledger.energy_drift()
        tol = context.config.diagnostics["energy_drift_tol"]
        return self.result(drift <= tol, drift, tol)


class FiniteSpeedCriterion(Criterion):
    criterion_id = "finite_speed"
    requires = ("finite_speed",)

    @property
    def description(self) -> str:
        return "The solution vanishes outside the propagated support of the data"

    def evaluate(self, context: RunContext) -> CheckResult:
        listener = context.finite_speed
        violations = len(listener.monitor.violations)
        detail = f"{listener.checked} checks"
        if violations:
            detail += f", first violation at step {listener.monitor.violations[0]}"
        return self.result(violations == 0, violations, 0, detail)


class ConeMonotonicityCriterion(Criterion):
    """E(u, D(t)) nonincreasing and the direct flux nonnegative, both up to epsilon_h."""

    criterion_id = "cone_monotonicity"
    requires = ("ledger",)

    @property
    def description(self) -> str:
        return "Cone energy is nonincreasing and the mantle flux nonnegative"

    def evaluate(self, context: RunContext) -> CheckResult:
        ledger = context.ledger
        eps = context.epsilon_h
        increase = ledger.cone_increase()
        flux = ledger.column("flux_direct")
        deficit = float(max(-flux.min(), 0.0)) if len(flux) else 0.0
        worst = max(increase, deficit)
        detail = f"max increase {increase:.3e}, min flux {-deficit:.3e}"
        return self.result(worst <= eps, worst, eps, detail)


class FluxAgreementCriterion(Criterion):
    """|flux_direct - flux_from_identity| over [t_first, t] for every sampled t."""

    criterion_id = "flux_agreement"
    requires = ("ledger",)

    @property
    def description(self) -> str:
        return "Mantle flux by quadrature agrees with the energy-identity flux"

    def evaluate(self, context: RunContext) -> CheckResult:
        ledger = context.ledger
        gap = np.abs(ledger.column("flux_direct") - ledger.column("flux_identity"))
        relative = float(gap.max() / ledger.E0) if ledger.E0 > 0.0 else float(gap.max())
        tol = context.config.diagnostics["flux_agreement_tol"]
        detail = f"{ledger.empty_slices} empty mantle slices"
        return self.result(relative <= tol, relative, tol, detail)


class FluxDecayCriterion(Criterion):
    """Flux through the mantle over [s, t_last] shrinks as s approaches t_last."""

    criterion_id = "flux_decay"
    requires = ("ledger",)

    @property
    def description(self) -> str:
        return "Flux over [s, t] decreases monotonically to zero as s -> t"

    def evaluate(self, context: RunContext) -> CheckResult:
        ledger = context.ledger
        t_last = float(ledger.times[-1])
        series = np.asarray([ledger.flux_from_identity(s, t_last) for s in ledger.times])
        eps = context.epsilon_h
        rise = float(max(np.max(np.diff(series)), 0.0)) if len(series) > 1 else 0.0
        return self.result(rise <= eps and abs(series[-1]) <= eps, rise, eps, f"initial flux {series[0]:.4e}")


class NonconcentrationCriterion(Criterion):
    """L^6 mass in the shrinking cone ends below 10% of its starting value."""

    criterion_id = "nonconcentration"
    requires = ("ledger",)

    @property
    def description(self) -> str:
        return "L^6 mass in D(t) decays to at most 10% of its initial value"

    def evaluate(self, context: RunContext) -> CheckResult:
        mass = context.ledger.column("l6_mass")
        reference = mass[0] if mass[0] > 0.0 else float(mass.max())
        if reference <= 0.0:
            raise ValueError("L^6 mass vanishes on every slice")
        ratio = float(mass[-1] / reference)
        return self.result(ratio <= DECAY_FRACTION, ratio, DECAY_FRACTION)


class ConeBudgetCriterion(Criterion):
    criterion_id = "cone_budget"
    requires = ("ledger",)

    @property
    def description(self) -> str:
        return "L^6 mass in D(S) is bounded by the flux, bulk and boundary terms and tends to 0"

    def evaluate(self, context: RunContext) -> CheckResult:
        report = cone_budget(context.ledger, context.epsilon_h)
        context.artifacts["budget"] = report
        detail = f"C={report.constant:.4g}, {report.violations} violations, final/max={report.decay_ratio:.3g}"
        return self.result(report.passed, report.decay_ratio, DECAY_FRACTION, detail)


class BoundaryTraceCriterion(Criterion):
    """||d_nu u||^2 / E0 on the obstacle, compared with the same run on a grid twice as coarse."""

    criterion_id = "boundary_trace"
    requires = ("ledger", "obstacle", "rerun")

    @property
    def description(self) -> str:
        return "Normal-derivative trace over the initial energy is finite and stable within 20% under refinement"

    def evaluate(self, context: RunContext) -> CheckResult:
        ledger = context.ledger
        if not ledger.record_trace:
            raise ValueError("trace recording is disabled ([cone] record_trace)")
        norm, ratio = ledger.trace_bound()
        coarse_norm, coarse_ratio = context.rerun(context.config.variant(coarsen=2)).ledger.trace_bound()
        if not (np.isfinite(ratio) and np.isfinite(coarse_ratio)) or norm <= 0.0 or coarse_norm <= 0.0:
            raise ValueError(f"degenerate trace: ratio {ratio:.4g}, coarse ratio {coarse_ratio:.4g}")
        change = abs(ratio / coarse_ratio - 1.0)
        context.artifacts["trace"] = (ratio, coarse_ratio)
        detail = f"ratio {ratio:.4e}, coarse {coarse_ratio:.4e}, trace norm {norm:.4e}"
        return self.result(change <= TRACE_REFINEMENT_TOL, change, TRACE_REFINEMENT_TOL, detail)


DYNAMICS_CRITERIA = (
    EnergyConservationCriterion,
    FiniteSpeedCriterion,
    ConeMonotonicityCriterion,
    FluxAgreementCriterion,
    FluxDecayCriterion,
    NonconcentrationCriterion,
    ConeBudgetCriterion,
    BoundaryTraceCriterion,
)
