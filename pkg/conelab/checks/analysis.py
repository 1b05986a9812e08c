"""Criteria on mixed norms, the bootstrap lemma and refinement orders."""
from __future__ import annotations

from typing import Dict

import numpy as np

from ..convergence import refinement_study
from ..errors import BootstrapPreconditionError
from ..norms import (
    REGION_STRIP,
    bootstrap_check,
    bootstrap_property_suite,
    holder_bound,
    strichartz_ratio,
)
from . import CheckResult, Criterion, RunContext

BOOTSTRAP_TRIALS = 1000
STRICHARTZ_REFINEMENT_FACTOR = 2.0
STRICHARTZ_SCALING_TOL = 0.01
STRICHARTZ_DATA_SCALE = 2.0


class HolderContainmentCriterion(Criterion):
    """The (pair(q), q) norm lies under the interpolation of the (inf, 6) and (pair(q1), q1) norms."""

    criterion_id = "holder_containment"
    requires = ("norms",)

    @property
    def description(self) -> str:
        return "Mixed norms obey the Hölder interpolation bound between q = 6 and the largest q"

    def evaluate(self, context: RunContext) -> CheckResult:
        recorder = context.norms
        by_q = {spec.q: spec for spec in recorder.specs}
        above = sorted(q for q in by_q if q > 6.0)
        if 6.0 not in by_q or len(above) < 2:
            raise ValueError("needs q = 6 and two larger exponents in [norms] q")
        q1 = above[-1]
        worst = 0.0
        for q in above[:-1]:
            bound = holder_bound(recorder.norm(by_q[6.0]), recorder.norm(by_q[q1]), q, q1)
            value = recorder.norm(by_q[q])
            worst = max(worst, value / bound if bound > 0.0 else 0.0)
        return self.result(worst <= 1.0 + 1e-12, worst, 1.0)


class StrichartzRatioCriterion(Criterion):
    """Strip-norm ratio of a linear run, compared with a coarser grid and with scaled data."""

    criterion_id = "strichartz_ratio"
    requires = ("norms", "data", "rerun")

    @property
    def description(self) -> str:
        return "Strichartz ratio is stable within a factor 2 under refinement and within 1% under data scaling"

    @staticmethod
    def ratios(context: RunContext) -> Dict[float, float]:
        """Ratio per strip exponent q; zero data raises ValueError."""
        recorder = context.norms
        ratios = {}
        for spec in recorder.specs:
            if spec.region != REGION_STRIP:
                continue
            ratios[spec.q] = strichartz_ratio(recorder.norm(spec), context.data.f, context.data.g, context.grid)
        if not ratios:
            raise ValueError("no strip norms recorded")
        return ratios

    def evaluate(self, context: RunContext) -> CheckResult:
        config = context.config
        if config.run["nonlinear"]:
            raise ValueError("the Strichartz ratio needs a linear run ([run] nonlinear = false)")
        ratios = self.ratios(context)
        coarse = self.ratios(context.rerun(config.variant(coarsen=2)))
        scaled = self.ratios(context.rerun(config.variant(data_scale=STRICHARTZ_DATA_SCALE)))
        context.artifacts["strichartz"] = ratios
        context.artifacts["strichartz_coarse"] = coarse
        context.artifacts["strichartz_scaled"] = scaled

        values = np.asarray([ratios[q] for q in sorted(ratios)] + [coarse[q] for q in sorted(ratios)])
        if not (np.all(np.isfinite(values)) and np.all(values > 0.0)):
            raise ValueError("non-finite or vanishing Strichartz ratio")
        spread = max(max(ratios[q] / coarse[q], coarse[q] / ratios[q]) for q in ratios)
        scaling = max(abs(scaled[q] / ratios[q] - 1.0) for q in ratios)
        detail = ", ".join(
            f"q={q:g}: {ratios[q]:.4g} (coarse {coarse[q]:.4g})" for q in sorted(ratios)
        ) + f", scaling change {scaling:.2e}"
        passed = spread <= STRICHARTZ_REFINEMENT_FACTOR and scaling <= STRICHARTZ_SCALING_TOL
        return self.result(passed, spread, STRICHARTZ_REFINEMENT_FACTOR, detail)


class BootstrapCriterion(Criterion):
    """Property suite of the continuity lemma plus the excluded boundary case."""

    criterion_id = "bootstrap_lemma"

    @property
    def description(self) -> str:
        return "Continuity lemma holds on 1000 random hypotheses; the threshold eps is rejected"

    def evaluate(self, context: RunContext) -> CheckResult:
        verdicts = bootstrap_property_suite(BOOTSTRAP_TRIALS, context.config.seed)
        failed = sum(not v.passed for v in verdicts)
        try:
            bootstrap_check([0.0, 1.0], 1.0, 2.0, 0.25)
        except BootstrapPreconditionError:
            boundary_rejected = True
        else:
            boundary_rejected = False
        detail = f"{failed} failures, boundary eps {'rejected' if boundary_rejected else 'ACCEPTED'}"
        return self.result(failed == 0 and boundary_rejected, failed, 0, detail)


class RefinementCriterion(Criterion):
    """Observed order of one quantity over the configured dyadic levels."""

    quantity: str = ""

    @property
    def description(self) -> str:
        return f"Observed convergence order of the {self.quantity.replace('_', ' ')} residual"

    def evaluate(self, context: RunContext) -> CheckResult:
        rows = refinement_study(
            context.config,
            levels=context.config.diagnostics["refinement_levels"],
            quantities=[self.quantity],
        )
        context.artifacts.setdefault("convergence", []).extend(rows)
        final = rows[-1]
        detail = ", ".join(f"{row.error:.3e}" for row in rows)
        return self.result(final.passed, final.order, final.threshold, f"errors {detail}")


class MultiplierIdentityCriterion(RefinementCriterion):
    criterion_id = "multiplier_identity"
    quantity = "multiplier_identity"


class CovariantIdentityCriterion(RefinementCriterion):
    criterion_id = "covariant_identity"
    quantity = "covariant_identity"


class HessianSubstitutionCriterion(RefinementCriterion):
    criterion_id = "hessian_substitution"
    quantity = "hessian_substitution"


class MantleIdentityCriterion(RefinementCriterion):
    criterion_id = "mantle_identity"
    quantity = "mantle_identity"


class EnergyDriftRefinementCriterion(RefinementCriterion):
    """Drift of the stepper energy shrinks at least 3x per halving of h and dt."""

    criterion_id = "energy_drift_refinement"
    quantity = "energy_drift"


ANALYSIS_CRITERIA = (
    HolderContainmentCriterion,
    StrichartzRatioCriterion,
    BootstrapCriterion,
    MultiplierIdentityCriterion,
    CovariantIdentityCriterion,
    HessianSubstitutionCriterion,
    MantleIdentityCriterion,
    EnergyDriftRefinementCriterion,
)
