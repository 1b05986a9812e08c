"""Dyadic refinement studies and observed convergence orders."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from math import log
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .config import RunConfig
from .energy import total_energy
from .fields import Grid, divergence_fd, gradient_fd, integrate
from .geodesic import GeodesicField, frozen_distance, solve_eikonal
from .metric import MetricField
from .metric.registry import get_metric
from .multiplier import (
    central_region,
    covariant_identity_residual,
    hessian_substitution_residual,
    identity_residual,
    mantle_parameterization_residual,
)
from .wave import LeapfrogSolver, cfl_dt, make_initial_data, with_velocity

_LOGGER = logging.getLogger(__name__)

# minimum observed order per quantity
ORDER_THRESHOLDS: Dict[str, float] = {
    "gradient": 1.8,
    "divergence": 1.8,
    "eikonal": 1.0,
    "multiplier_identity": 1.8,
    "covariant_identity": 1.8,
    "hessian_substitution": 1.5,
    "mantle_identity": 1.5,
    "energy_drift": log(3.0) / log(2.0),
}

FLAT_FALLBACK = ("constant_diagonal", {"d1": 1.0, "d2": 1.5, "d3": 0.75})
CURVED_FALLBACK = ("wavy", {})
MANTLE_INNER_RADIUS = 0.1
MULTIPLIER_FIELDS = 5


def observed_orders(h: Sequence[float], errors: Sequence[float]) -> List[float]:
    """rate_k = log(e_{k-1} / e_k) / log(h_{k-1} / h_k); NaN where an error vanishes."""
    rates = [float("nan")]
    for k in range(1, len(h)):
        if errors[k] <= 0.0 or errors[k - 1] <= 0.0:
            rates.append(float("nan"))
            continue
        rates.append(log(errors[k - 1] / errors[k]) / log(h[k - 1] / h[k]))
    return rates


@dataclass(frozen=True)
class TrigonometricField:
    """Seeded sum of plane waves; smooth and not a solution of anything in particular."""

    seed: int = 0
    modes: int = 4
    amplitude: float = 0.3
    max_wavenumber: float = 2.0

    def _modes(self) -> Iterator[Tuple[float, np.ndarray, float, float]]:
        rng = np.random.default_rng(self.seed)
        for _ in range(self.modes):
            k = rng.uniform(-self.max_wavenumber, self.max_wavenumber, size=3)
            yield rng.uniform(-1.0, 1.0), k, rng.uniform(-2.0, 2.0), rng.uniform(0.0, 2.0 * np.pi)

    def __call__(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        X, Y, Z = grid.coordinates
        out = np.zeros(grid.shape)
        for a, k, omega, phase in self._modes():
            out += a * np.sin(k[0] * X + k[1] * Y + k[2] * Z + omega * t + phase)
        return self.amplitude * out / self.modes

    def vector(self, grid: Grid) -> np.ndarray:
        return np.stack([TrigonometricField(self.seed + 101 * (k + 1), self.modes, 1.0)(grid) for k in range(3)])

    def history(self, grid: Grid, times: Sequence[float]) -> np.ndarray:
        return np.stack([self(grid, t) for t in times])


@dataclass
class ConvergenceRow:
    quantity: str
    level: int
    h: float
    error: float
    order: float
    threshold: float
    passed: bool

    def as_tuple(self) -> Tuple:
        return (self.quantity, self.level, self.h, self.error, self.order, self.threshold, self.passed)


class RefinementProblem:
    """Grid family, metric and apex shared by every quantity of a study."""

    def __init__(self, config: RunConfig, levels: int, base: Optional[int] = None):
        if levels < 2:
            raise ValueError("A refinement study needs at least two levels")
        self.config = config
        self.levels = levels
        self.base = config.diagnostics["refinement_base"] if base is None else base
        self.x0 = config.cone["x0"]

    def grid(self, level: int) -> Grid:
        n = self.base * 2**level
        return Grid.box(n, self.config.grid["lower"], self.config.grid["upper"])

    def metric(self, grid: Grid, flat: bool = False) -> MetricField:
        name, parameters = self.config.metric.name, self.config.metric.parameters
        model = get_metric(name, **parameters)
        if flat and not model.is_flat:
            model = get_metric(FLAT_FALLBACK[0], **FLAT_FALLBACK[1])
        return model.build(grid)

    def metric_pair(self, grid: Grid) -> Tuple[MetricField, MetricField]:
        """A flat and a curved metric: the configured one plus a fallback for the other kind."""
        choice = self.config.metric
        if get_metric(choice.name, **choice.parameters).is_flat:
            return self.metric(grid), get_metric(CURVED_FALLBACK[0], **CURVED_FALLBACK[1]).build(grid)
        return self.metric(grid, flat=True), self.metric(grid)

    def surrogate(self, M: MetricField) -> GeodesicField:
        """Distance of the frozen metric g(x0); exact when the metric is constant."""
        rho, _ = frozen_distance(M, self.x0)
        return GeodesicField.from_distance(rho, M, self.x0)

    def field(self, offset: int = 0) -> TrigonometricField:
        return TrigonometricField(seed=self.config.seed + offset)


def _l2(residual: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(integrate(residual * residual, grid)))


def gradient_error(problem: RefinementProblem, level: int) -> float:
    grid = problem.grid(level)
    X, Y, Z = grid.coordinates
    w = np.sin(np.pi * X) * np.cos(0.5 * np.pi * Y) * np.exp(0.3 * Z)
    exact = np.stack(
        [
            np.pi * np.cos(np.pi * X) * np.cos(0.5 * np.pi * Y) * np.exp(0.3 * Z),
            -0.5 * np.pi * np.sin(np.pi * X) * np.sin(0.5 * np.pi * Y) * np.exp(0.3 * Z),
            0.3 * w,
        ]
    )
    return float(np.max(np.abs(gradient_fd(w, grid) - exact)))


def divergence_error(problem: RefinementProblem, level: int) -> float:
    grid = problem.grid(level)
    X, Y, Z = grid.coordinates
    V = np.stack([np.sin(X) * Y, np.cos(Y) * Z**2, np.sin(X * Z)])
    exact = np.cos(X) * Y - np.sin(Y) * Z**2 + X * np.cos(X * Z)
    return float(np.max(np.abs(divergence_fd(V, grid) - exact)))


def eikonal_error(problem: RefinementProblem, level: int) -> float:
    grid = problem.grid(level)
    M = problem.metric(grid, flat=True)
    geo = problem.config.geodesic
    Gf = solve_eikonal(M, problem.x0, tol=geo["tol"], max_iterations=geo["max_iterations"])
    exact, _ = frozen_distance(M, problem.x0)
    return float(np.max(np.abs(Gf.rho - exact)[Gf.valid]))


def _cone_times(h: float, levels: int = 5, center: float = -1.0) -> np.ndarray:
    return center + 0.5 * h * (np.arange(levels) - levels // 2)


def multiplier_identity_error(problem: RefinementProblem, level: int) -> float:
    """Largest residual over MULTIPLIER_FIELDS random fields on a flat and a curved metric."""
    grid = problem.grid(level)
    times = _cone_times(grid.h_max)
    nonlinear = problem.config.run["nonlinear"]
    worst = 0.0
    for M in problem.metric_pair(grid):
        Gf = problem.surrogate(M)
        for offset in range(MULTIPLIER_FIELDS):
            u = problem.field(offset).history(grid, times)
            worst = max(worst, identity_residual(u, times, Gf, nonlinear=nonlinear).l2)
    return worst


def covariant_identity_error(problem: RefinementProblem, level: int) -> float:
    grid = problem.grid(level)
    M = problem.metric(grid)
    f = problem.field(1)(grid)
    X = problem.field(2).vector(grid)
    return _l2(covariant_identity_residual(f, X, M), grid)


def hessian_substitution_error(problem: RefinementProblem, level: int) -> float:
    grid = problem.grid(level)
    Gf = problem.surrogate(problem.metric(grid))
    # phi is a smooth quadratic, so the identity needs no validity mask
    residual = hessian_substitution_residual(problem.field(3)(grid), Gf, central_region(grid), require_valid=False)
    return _l2(residual, grid)


def mantle_identity_error(problem: RefinementProblem, level: int) -> float:
    grid = problem.grid(level)
    Gf = problem.surrogate(problem.metric(grid, flat=True))
    h = grid.h_max
    count = int(np.ceil((1.05 * Gf.rho_max) / (0.5 * h))) + 1
    times = np.linspace(-1.05 * Gf.rho_max, -0.5 * h, max(count, 4))
    u = problem.field(4).history(grid, times)
    region = Gf.valid & (Gf.rho >= MANTLE_INNER_RADIUS)
    return _l2(mantle_parameterization_residual(u, times, Gf, region), grid)


def energy_drift_error(problem: RefinementProblem, level: int) -> float:
    """Relative energy drift of a linear flat-metric run over a fixed window."""
    grid = problem.grid(level)
    M = problem.metric(grid, flat=True)
    data = make_initial_data(grid, radius=0.4, amplitude=1.0, clearance=0.0)
    dt = cfl_dt(M, safety=problem.config.run["cfl_safety"])
    n_steps = max(int(round(0.5 / dt)), 2)
    solver = LeapfrogSolver(M, nonlinear=False)
    current = solver.start(data, dt)
    energies = []
    for following in solver.iterate(current, n_steps + 1):
        energies.append(total_energy(with_velocity(current, following), M))
        current = following
    energies = np.asarray(energies)
    return float(np.max(np.abs(energies - energies[0])) / energies[0])


QUANTITIES: Dict[str, Callable[[RefinementProblem, int], float]] = {
    "gradient": gradient_error,
    "divergence": divergence_error,
    "eikonal": eikonal_error,
    "multiplier_identity": multiplier_identity_error,
    "covariant_identity": covariant_identity_error,
    "hessian_substitution": hessian_substitution_error,
    "mantle_identity": mantle_identity_error,
    "energy_drift": energy_drift_error,
}


def refinement_study(
    config: RunConfig,
    levels: int = 3,
    quantities: Optional[Sequence[str]] = None,
    base: Optional[int] = None,
    progress: bool = False,
) -> List[ConvergenceRow]:
    """Errors on ``levels`` dyadic grids and the observed order between neighbours.

    A quantity passes when its finest observed order meets the threshold.
    """
    names = list(QUANTITIES) if quantities is None else list(quantities)
    unknown = [name for name in names if name not in QUANTITIES]
    if unknown:
        raise KeyError(f"Unknown convergence quantities: {', '.join(unknown)}")
    problem = RefinementProblem(config, levels, base)

    rows: List[ConvergenceRow] = []
    with tqdm(total=len(names) * levels, desc="convergence", disable=not progress, leave=False) as bar:
        for name in names:
            h, errors = [], []
            for level in range(levels):
                h.append(problem.grid(level).h_max)
                errors.append(QUANTITIES[name](problem, level))
                _LOGGER.debug("%s level %d: h=%.4g error=%.4e", name, level, h[-1], errors[-1])
                bar.update(1)
            orders = observed_orders(h, errors)
            threshold = ORDER_THRESHOLDS[name]
            passed = bool(orders[-1] >= threshold) or errors[-1] == 0.0
            for level in range(levels):
                rows.append(ConvergenceRow(name, level, h[level], errors[level], orders[level], threshold, passed))
            log_level = logging.INFO if passed else logging.WARNING
            _LOGGER.log(log_level, "Observed order for %s: %.3f (threshold %.2f)", name, orders[-1], threshold)
    return rows
