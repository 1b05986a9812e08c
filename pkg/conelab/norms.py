"""Mixed space-time Lebesgue norms, the Strichartz ratio and the bootstrap lemma utility."""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .const import ERROR_CODES
from .coordinator import RunListener, Snapshot
from .energy import ConeSpec
from .errors import BootstrapPreconditionError
from .fields import Grid, gradient_fd, integrate

_LOGGER = logging.getLogger(__name__)

REGION_STRIP = "strip"
REGION_CONE = "cone"
REGION_EXPANDED = "expanded_cone"
REGIONS = (REGION_STRIP, REGION_CONE, REGION_EXPANDED)


def strichartz_pair(q: float) -> float:
    """Time exponent p = 2q / (q - 6) paired with q >= 6 (p = inf at q = 6)."""
    if q < 6.0:
        raise ValueError(f"Space exponent q = {q:g} must be at least 6")
    if q == 6.0:
        return float("inf")
    return 2.0 * q / (q - 6.0)


@dataclass(frozen=True)
class MixedNormSpec:
    """L^p_t L^q_x over a strip, a cone or an expanded cone."""

    p: float
    q: float
    region: str = REGION_STRIP
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.p > 0.0:
            raise ValueError("Time exponent must be positive")
        if self.q < 1.0 or not np.isfinite(self.q):
            raise ValueError("Space exponent must lie in [1, inf)")
        if self.region not in REGIONS:
            raise ValueError(f"Unknown norm region '{self.region}'")

    @classmethod
    def strichartz(cls, q: float, region: str = REGION_STRIP, delta: float = 0.0) -> "MixedNormSpec":
        return cls(strichartz_pair(q), q, region, delta)

    def nodes(self, grid: Grid, t: float, cone: Optional[ConeSpec] = None) -> np.ndarray:
        if self.region == REGION_STRIP:
            return grid.mask
        if cone is None:
            raise ValueError(f"Region '{self.region}' needs a cone")
        if self.region == REGION_EXPANDED:
            return cone.expanded(self.delta).region(t)
        return cone.region(t)


def slice_lq(u: np.ndarray, grid: Grid, q: float, region: Optional[np.ndarray] = None) -> float:
    """(int_region |u|^q dx)^(1/q)."""
    return integrate(np.abs(u) ** q, grid, region) ** (1.0 / q)


def time_norm(times: Sequence[float], values: Sequence[float], p: float) -> float:
    """L^p in time of slice values: trapezoid for finite p, max for p = inf."""
    values = np.asarray(values, dtype=float)
    if not len(values):
        return 0.0
    if np.isinf(p):
        return float(np.max(values))
    if len(values) < 2:
        return 0.0
    return float(trapezoid(values**p, times) ** (1.0 / p))


def mixed_norm(
    levels: Iterable[np.ndarray],
    times: Sequence[float],
    spec: MixedNormSpec,
    grid: Grid,
    cone: Optional[ConeSpec] = None,
) -> float:
    """(int (int_{region(t)} |u|^q dx)^(p/q) dt)^(1/p) over the sampled levels."""
    times = np.asarray(times, dtype=float)
    slices = []
    populated = False
    for t, u in zip(times, levels):
        nodes = spec.nodes(grid, t, cone)
        populated = populated or bool(nodes.any())
        slices.append(slice_lq(u, grid, spec.q, nodes))
    if not populated:
        raise ValueError(f"{ERROR_CODES['EMPTY_REGION']}: mixed-norm region")
    return time_norm(times[: len(slices)], slices, spec.p)


def interpolation_exponent(q: float, q1: float) -> float:
    """theta with 1/q = (1 - theta)/6 + theta/q1."""
    if not 6.0 < q < q1:
        raise ValueError("Interpolation needs 6 < q < q1")
    return (1.0 / 6.0 - 1.0 / q) / (1.0 / 6.0 - 1.0 / q1)


def holder_bound(norm_inf_6: float, norm_q1: float, q: float, q1: float) -> float:
    """Upper bound for the (pair(q), q) norm from the (inf, 6) and (pair(q1), q1) norms."""
    theta = interpolation_exponent(q, q1)
    return norm_inf_6 ** (1.0 - theta) * norm_q1**theta


def hdot1_norm(f: np.ndarray, grid: Grid) -> float:
    """(int |grad f|^2 dx)^(1/2) with the Euclidean gradient."""
    df = gradient_fd(f, grid)
    return float(np.sqrt(integrate(np.sum(df * df, axis=0), grid)))


def l2_norm(f: np.ndarray, grid: Grid, region: Optional[np.ndarray] = None) -> float:
    return float(np.sqrt(integrate(f * f, grid, region)))


def strichartz_ratio(
    lhs_norm: float,
    f: np.ndarray,
    g: np.ndarray,
    grid: Grid,
    forcing_l1l2: float = 0.0,
) -> float:
    """Mixed norm of a linear solution over ||f||_H1dot + ||g||_L2 + ||F||_{L1 L2}."""
    data_norm = hdot1_norm(f, grid) + l2_norm(g, grid) + forcing_l1l2
    if data_norm == 0.0:
        raise ValueError("Strichartz ratio undefined for zero data and forcing (0/0)")
    return lhs_norm / data_norm


class NormRecorder(RunListener):
    """Slice L^q norms per snapshot for a set of specs, plus two cone monitors.

    The monitors are ||u_t||_{L^inf L^6} and ||u^5||_{L^1 L^2} over the cone.
    """

    def __init__(self, specs: Sequence[MixedNormSpec], cone: Optional[ConeSpec] = None, cadence: int = 1):
        self.specs = list(specs)
        self.cone = cone
        self.cadence = cadence
        self._times: List[float] = []
        self._slices: Dict[MixedNormSpec, List[float]] = {spec: [] for spec in self.specs}
        self._velocity: List[float] = []
        self._forcing: List[float] = []

    def on_snapshot(self, snapshot: Snapshot) -> None:
        state = snapshot.state
        grid = snapshot.metric.grid
        self._times.append(state.t)
        for spec in self.specs:
            nodes = spec.nodes(grid, state.t, self.cone)
            self._slices[spec].append(slice_lq(state.u_curr, grid, spec.q, nodes))
        region = grid.mask if self.cone is None else self.cone.region(state.t)
        self._velocity.append(slice_lq(state.u_t, grid, 6.0, region))
        self._forcing.append(l2_norm(state.u_curr**5, grid, region))

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._times)

    def slices(self, spec: MixedNormSpec) -> np.ndarray:
        return np.asarray(self._slices[spec])

    def norm(self, spec: MixedNormSpec) -> float:
        return time_norm(self.times, self.slices(spec), spec.p)

    def running_norm(self, spec: MixedNormSpec) -> np.ndarray:
        values = self.slices(spec)
        return np.asarray([time_norm(self._times[: n + 1], values[: n + 1], spec.p) for n in range(len(values))])

    def velocity_monitor(self) -> float:
        """||u_t||_{L^inf_t L^6_x} over the recorded window."""
        return time_norm(self.times, self._velocity, float("inf"))

    def forcing_norm(self) -> float:
        """||u^5||_{L^1_t L^2_x} over the recorded window."""
        return time_norm(self.times, self._forcing, 1.0)

    def rows(self) -> Iterator[Tuple[float, float, float, float]]:
        """CSV rows in ``NORM_COLUMNS`` order, one block per spec."""
        for spec in self.specs:
            running = self.running_norm(spec)
            for t, value, total in zip(self._times, self.slices(spec), running):
                yield (float(t), float(spec.q), float(value), float(total))


@dataclass
class BootstrapVerdict:
    """Outcome of the continuity argument on a sampled series."""

    passed: bool
    hypothesis_holds: bool
    max_y: float
    lower_root: float
    upper_root: float
    witness: Optional[Tuple[int, float]] = None
    reason: str = ""


def bootstrap_threshold(C0: float, gamma: float) -> float:
    """2^-gamma C0^(1 - gamma)."""
    return 2.0 ** (-gamma) * C0 ** (1.0 - gamma)


def bootstrap_check(
    y: Sequence[float],
    C0: float,
    gamma: float,
    eps: float,
    tol: float = 1e-12,
) -> BootstrapVerdict:
    """Check y <= C0 + eps y^gamma on the piecewise-linear series, then max y < 2 C0.

    The map y -> C0 + eps y^gamma - y has roots y1 < 2 C0 < y2; the
    hypothesis fails wherever the interpolated series enters (y1, y2).
    """
    if C0 <= 0.0:
        raise ValueError("C0 must be positive")
    if gamma <= 1.0:
        raise ValueError("gamma must exceed 1")
    threshold = bootstrap_threshold(C0, gamma)
    if eps >= threshold:
        raise BootstrapPreconditionError(
            f"{ERROR_CODES['BOOTSTRAP_PRECONDITION']}: eps = {eps:g} >= 2^-gamma C0^(1-gamma) = {threshold:g}"
        )
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    y = np.asarray(y, dtype=float)
    if not len(y):
        raise ValueError("Empty series")
    if y[0] != 0.0:
        raise ValueError("The series must start at y(a) = 0")

    def gap(v: float) -> float:
        return C0 + eps * v**gamma - v

    lower = brentq(gap, 0.0, 2.0 * C0)
    if eps == 0.0:
        upper = float("inf")
    else:
        top = 2.0 * C0
        while gap(top) <= 0.0:
            top *= 2.0
        upper = brentq(gap, 2.0 * C0, top)

    # sample values in the gap fail outright; a segment jumping over it fails in between
    hypothesis = y <= C0 + eps * np.abs(y) ** gamma + tol * max(C0, 1.0)
    lo = np.minimum(y[:-1], y[1:])
    hi = np.maximum(y[:-1], y[1:])
    crossing = np.concatenate([[False], (lo <= lower) & (hi >= upper)])
    bad = ~hypothesis | crossing
    max_y = float(np.max(y))
    if bad.any():
        index = int(np.argmax(bad))
        return BootstrapVerdict(
            False, False, max_y, lower, upper, (index, float(y[index])),
            "hypothesis fails on the interpolated series",
        )
    if max_y >= 2.0 * C0:
        index = int(np.argmax(y >= 2.0 * C0))
        return BootstrapVerdict(False, True, max_y, lower, upper, (index, float(y[index])), "max y >= 2 C0")
    return BootstrapVerdict(True, True, max_y, lower, upper, None, "")


HYPOTHESIS_SHAPES = ("uniform", "approach", "jumps")
APPROACH_GAP = 1e-9


def random_hypothesis(
    rng: np.random.Generator, shape: Optional[str] = None
) -> Tuple[np.ndarray, float, float, float]:
    """A piecewise-linear series satisfying the bootstrap hypothesis, with its (C0, gamma, eps).

    * ``uniform``: independent samples in [0, y1)
    * ``approach``: a ramp that ends within a relative 1e-9 of the lower root y1
    * ``jumps``: alternates between 0 and the top tenth of [0, y1]

    ``shape`` defaults to a random choice.
    """
    if shape is None:
        shape = HYPOTHESIS_SHAPES[int(rng.integers(len(HYPOTHESIS_SHAPES)))]
    if shape not in HYPOTHESIS_SHAPES:
        raise ValueError(f"Unknown hypothesis shape '{shape}'")
    C0 = rng.uniform(0.5, 2.0)
    gamma = rng.uniform(1.1, 3.0)
    eps = rng.uniform(0.0, 0.99) * bootstrap_threshold(C0, gamma)
    lower = bootstrap_check([0.0], C0, gamma, eps).lower_root
    n = int(rng.integers(5, 50))
    if shape == "uniform":
        y = rng.uniform(0.0, lower, size=n)
    elif shape == "approach":
        y = lower * (1.0 - np.maximum(0.5 ** np.arange(n, dtype=float), APPROACH_GAP))
        y[-1] = lower * (1.0 - APPROACH_GAP)
    else:
        y = np.where(np.arange(n) % 2 == 1, rng.uniform(0.9 * lower, lower, size=n), 0.0)
    y[0] = 0.0
    return y, C0, gamma, eps


def bootstrap_property_suite(trials: int = 1000, seed: int = 0) -> List[BootstrapVerdict]:
    """Verdicts on ``trials`` random series that satisfy the hypothesis."""
    rng = np.random.default_rng(seed)
    verdicts = []
    for _ in range(trials):
        y, C0, gamma, eps = random_hypothesis(rng)
        verdicts.append(bootstrap_check(y, C0, gamma, eps))
    failed = sum(not v.passed for v in verdicts)
    _LOGGER.info("Bootstrap property suite: %d of %d verdicts failed", failed, trials)
    return verdicts
