"""Build a run from a RunConfig, execute it and write every report."""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numba

from .checks import CheckResult, RunContext
from .checks.registry import get_check
from .config import RunConfig, config_from_sections
from .const import (
    BUDGET_COLUMNS,
    COMPARISON_COLUMNS,
    CONVERGENCE_COLUMNS,
    CURVATURE_COLUMNS,
    ERROR_CODES,
    EXIT_ASSERTION_FAILED,
    EXIT_PASS,
    LEDGER_COLUMNS,
    MANIFEST_COLUMNS,
    NORM_COLUMNS,
)
from .convergence import ConvergenceRow, refinement_study
from .coordinator import CheckpointWriter, FiniteSpeedListener, RunCoordinator
from .energy import ConeSpec
from .errors import ConfigError, CriterionFailed, EikonalNotConverged, NumericalAbort
from .fields import Grid
from .geodesic import GeodesicField, solve_eikonal
from .ledger import ConeLedger
from .metric import MetricField
from .metric.registry import get_metric
from .norms import MixedNormSpec, NormRecorder
from .obstacles import Obstacle, get_obstacle
from .reports import (
    BUDGET_FILE,
    CHECK_COLUMNS,
    CHECKS_FILE,
    COMPARISON_FILE,
    CONVERGENCE_FILE,
    CURVATURE_FILE,
    LEDGER_FILE,
    MANIFEST_FILE,
    NORMS_FILE,
    write_csv,
    write_geodesic_dump,
)
from .wave import LeapfrogSolver, cfl_dt, make_initial_data

_LOGGER = logging.getLogger(__name__)

SCENARIOS_FILE = Path(__file__).parent / "scenarios.json"
CHECKPOINT_DIR = "checkpoints"


def load_scenarios() -> Dict[str, Dict[str, Any]]:
    """Built-in scenario catalogue keyed by name."""
    with open(SCENARIOS_FILE, "r", encoding="utf-8") as handle:
        catalogue = json.load(handle)
    return catalogue.get("scenarios", {})


def list_scenarios() -> List[str]:
    return sorted(load_scenarios())


def _scenario(name: str) -> Dict[str, Any]:
    scenarios = load_scenarios()
    if name not in scenarios:
        available = ", ".join(sorted(scenarios))
        raise KeyError(f"{ERROR_CODES['UNKNOWN_NAME']}: scenario '{name}'. Available: {available}")
    return scenarios[name]


def describe_scenario(name: str) -> str:
    """Description plus the sections that differ from the defaults."""
    scenario = _scenario(name)
    lines = [name, "", scenario["description"], ""]
    for section, values in scenario["sections"].items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in values.items())
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def scenario_config(name: str) -> RunConfig:
    return config_from_sections(_scenario(name)["sections"])


def apply_threads(threads: Optional[int]) -> None:
    """Cap the numba worker pool; results do not depend on it."""
    if threads is None:
        return
    numba.set_num_threads(min(int(threads), numba.config.NUMBA_NUM_THREADS))
    _LOGGER.info("Using %d numba threads", numba.get_num_threads())


@dataclass
class ScenarioResult:
    """Outcome of one run: criteria, written files and run summary."""

    name: str
    config_hash: str
    checks: List[CheckResult]
    files: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.checks)

    @property
    def failed(self) -> List[CheckResult]:
        return [result for result in self.checks if not result.passed]

    @property
    def exit_code(self) -> int:
        return EXIT_PASS if self.passed else EXIT_ASSERTION_FAILED

    def raise_for_failure(self) -> None:
        if self.failed:
            first = self.failed[0]
            raise CriterionFailed(first.criterion, first.detail)


class ScenarioManager:
    """Owns the objects of one run and the order they are built in.

    Geometry (grid, metric, distance) is always built; the PDE run and its
    listeners only when ``[run] enabled`` is true.
    """

    def __init__(self, config: RunConfig, progress: bool = False):
        self.config = config
        self.progress = progress
        self.config_hash = config.config_hash()
        self.obstacle: Optional[Obstacle] = None
        self.grid: Optional[Grid] = None
        self.metric: Optional[MetricField] = None
        self.geodesic: Optional[GeodesicField] = None
        self.context: Optional[RunContext] = None
        self.summary: Dict[str, Any] = {}

    @property
    def output_dir(self) -> Path:
        return self.config.output_dir

    def build_geometry(self) -> None:
        config = self.config
        try:
            self.obstacle = get_obstacle(config.obstacle.name, **config.obstacle.parameters)
            self.grid = Grid.box(
                config.grid["n_cells"], config.grid["lower"], config.grid["upper"], self.obstacle
            )
            self.metric = get_metric(config.metric.name, **config.metric.parameters).build(self.grid)
        except (KeyError, ValueError) as err:
            raise ConfigError(str(err)) from err
        geodesic = config.geodesic
        try:
            self.geodesic = solve_eikonal(
                self.metric,
                config.cone["x0"],
                mode=geodesic["mode"],
                tol=geodesic["tol"],
                max_iterations=geodesic["max_iterations"],
                init_radius=geodesic["init_radius"],
                residual_factor=geodesic["residual_factor"],
                rho_max_fraction=geodesic["rho_max_fraction"],
            )
        except EikonalNotConverged as err:
            raise NumericalAbort(str(err)) from err
        except ValueError as err:
            raise ConfigError(str(err)) from err

    def _norm_specs(self, cone: ConeSpec) -> List[MixedNormSpec]:
        norms = self.config.norms
        exponents = sorted(set(norms["q"]) | {6.0})
        return [MixedNormSpec.strichartz(q, norms["region"], cone.delta) for q in exponents]

    def build_context(self) -> RunContext:
        config = self.config
        if self.geodesic is None:
            self.build_geometry()
        cone = ConeSpec(config.apex_time, self.geodesic, config.cone["delta"])
        context = RunContext(
            config=config,
            grid=self.grid,
            metric=self.metric,
            obstacle=self.obstacle,
            geodesic=self.geodesic,
            cone=cone,
            rerun=companion_context,
        )
        if not config.run["enabled"]:
            _LOGGER.info("Run '%s' has time stepping disabled; geometry only", config.name)
            self.context = context
            return context

        try:
            context.data = make_initial_data(self.grid, seed=config.seed, **config.data)
        except (KeyError, ValueError) as err:
            raise ConfigError(f"[data] {err}") from err
        diagnostics = config.diagnostics
        context.ledger = ConeLedger(cone, record_trace=config.cone["record_trace"], cadence=diagnostics["cadence"])
        context.norms = NormRecorder(self._norm_specs(cone), cone, cadence=diagnostics["cadence"])
        context.finite_speed = FiniteSpeedListener(
            context.data, self.metric, cadence=diagnostics["finite_speed_cadence"]
        )
        self.context = context
        return context

    def execute(self) -> Dict[str, Any]:
        """Time-step the configured window; no-op for geometry-only runs."""
        context = self.context or self.build_context()
        if context.data is None:
            return {}
        run = self.config.run
        span = run["t_end"] - run["t_start"]
        limit = cfl_dt(self.metric, self.grid, run["cfl_safety"])
        n_steps = max(int(math.ceil(span / limit)), 1)
        dt = span / n_steps
        listeners = [context.ledger, context.norms, context.finite_speed]
        cadence = self.config.output["checkpoint_cadence"]
        if cadence:
            listeners.append(CheckpointWriter(self.output_dir / CHECKPOINT_DIR, cadence))
        coordinator = RunCoordinator(
            LeapfrogSolver(self.metric, nonlinear=run["nonlinear"]),
            context.data,
            dt,
            n_steps,
            listeners=listeners,
            t_start=run["t_start"],
            progress=self.progress,
            name=self.config.name,
        )
        self.summary = coordinator.run()
        return self.summary

    def evaluate(self) -> List[CheckResult]:
        context = self.context or self.build_context()
        results = []
        for criterion_id in self.config.diagnostics["checks"]:
            _LOGGER.debug("Evaluating %s", criterion_id)
            results.append(get_check(criterion_id)(context))
        return results

    def write_reports(self, results: List[CheckResult]) -> List[Path]:
        context = self.context
        directory = self.output_dir
        digest = self.config_hash
        written = [write_geodesic_dump(directory, self.grid, self.geodesic.rho)]
        if context.ledger is not None:
            written.append(write_csv(directory / MANIFEST_FILE, MANIFEST_COLUMNS, context.ledger.manifest_rows(), digest))
            written.append(write_csv(directory / LEDGER_FILE, LEDGER_COLUMNS, context.ledger.rows(), digest))
        if context.norms is not None:
            written.append(write_csv(directory / NORMS_FILE, NORM_COLUMNS, context.norms.rows(), digest))
        artifacts = context.artifacts
        if "budget" in artifacts:
            written.append(write_csv(directory / BUDGET_FILE, BUDGET_COLUMNS, artifacts["budget"].rows, digest))
        if "comparison" in artifacts:
            written.append(
                write_csv(directory / COMPARISON_FILE, COMPARISON_COLUMNS, artifacts["comparison"].rows, digest)
            )
        if "curvature" in artifacts:
            written.append(
                write_csv(directory / CURVATURE_FILE, CURVATURE_COLUMNS, artifacts["curvature"].rows(), digest)
            )
        if "convergence" in artifacts:
            rows = [row.as_tuple() for row in artifacts["convergence"]]
            written.append(write_csv(directory / CONVERGENCE_FILE, CONVERGENCE_COLUMNS, rows, digest))
        written.append(write_csv(directory / CHECKS_FILE, CHECK_COLUMNS, [r.as_row() for r in results], digest))
        return written

    def run(self) -> ScenarioResult:
        """Geometry, time stepping, criteria and reports, in that order."""
        apply_threads(self.config.threads)
        _LOGGER.info("Scenario '%s' (config %s)", self.config.name, self.config_hash[:12])
        self.build_context()
        self.execute()
        results = self.evaluate()
        files = self.write_reports(results)
        result = ScenarioResult(self.config.name, self.config_hash, results, files, self.summary)
        if result.passed:
            _LOGGER.info("Scenario '%s': all %d criteria passed", self.config.name, len(results))
        else:
            _LOGGER.warning(
                "Scenario '%s': %d of %d criteria failed (%s)",
                self.config.name, len(result.failed), len(results),
                ", ".join(r.criterion for r in result.failed),
            )
        return result


def run_scenario(config: RunConfig, progress: bool = False) -> ScenarioResult:
    return ScenarioManager(config, progress).run()


def companion_context(config: RunConfig) -> RunContext:
    """Geometry and, when enabled, the time-stepped run of a companion configuration."""
    _LOGGER.info("Companion run '%s' on %s cells", config.name, config.grid["n_cells"])
    manager = ScenarioManager(config)
    try:
        manager.build_context()
    except ConfigError as err:
        raise ValueError(f"companion run: {err}") from err
    manager.execute()
    return manager.context


def run_convergence(config: RunConfig, levels: int, progress: bool = False) -> List[ConvergenceRow]:
    """Refinement study over every quantity; writes convergence.csv."""
    apply_threads(config.threads)
    rows = refinement_study(config, levels=levels, progress=progress)
    write_csv(
        config.output_dir / CONVERGENCE_FILE,
        CONVERGENCE_COLUMNS,
        [row.as_tuple() for row in rows],
        config.config_hash(),
    )
    return rows
