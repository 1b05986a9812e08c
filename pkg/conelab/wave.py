"""Leapfrog time stepping for u_tt - div(A grad u) + u^5 = F with Dirichlet obstacle data."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
import logging
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit, prange
from scipy import ndimage

from .const import (
    DATA_KIND_BUMP,
    DATA_KIND_FOCUSED,
    DATA_KIND_NONE,
    DATA_KIND_RANDOM,
    DATA_KINDS,
    DEFAULT_CFL_SAFETY,
    DEFAULT_DATA_CLEARANCE,
    DEFAULT_FINITE_SPEED_MARGIN,
    ERROR_CODES,
)
from .errors import NumericalAbort
from .fields import Grid, compact_bump, flux_divergence
from .metric import MetricField

_LOGGER = logging.getLogger(__name__)

Forcing = Callable[[float], np.ndarray]

# one leapfrog step reaches the 3x3x3 neighbourhood of a node
STENCIL_REACH = 1
TRACE_OFFSETS = (3.0, 5.0)  # cells from the surface
EXACT_ZERO_TOL = 1e-12
RELATIVE_ZERO_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class WaveState:
    """Two consecutive time levels; ``t`` is the time of ``u_curr``.

    ``u_t`` is filled in by :func:`with_velocity` once the next level exists.
    """

    u_prev: np.ndarray
    u_curr: np.ndarray
    t: float
    dt: float
    step: int = 0
    u_t: Optional[np.ndarray] = None

    @property
    def u(self) -> np.ndarray:
        return self.u_curr


@dataclass(frozen=True, eq=False)
class InitialData:
    """Cauchy data (f, g) with the radius of a ball containing their support."""

    f: np.ndarray
    g: np.ndarray
    support_radius: float
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    kind: str = DATA_KIND_BUMP

    @property
    def support(self) -> np.ndarray:
        return (self.f != 0.0) | (self.g != 0.0)

    def scaled(self, factor: float) -> "InitialData":
        return replace(self, f=factor * self.f, g=factor * self.g)


def cfl_dt(M: MetricField, grid: Optional[Grid] = None, safety: float = DEFAULT_CFL_SAFETY) -> float:
    """safety * h_min / sqrt(3 c2)."""
    grid = M.grid if grid is None else grid
    return safety * grid.h_min / np.sqrt(3.0 * M.c2)


def stability_limit(M: MetricField) -> float:
    return M.grid.h_min / np.sqrt(3.0 * M.c2)


def apply_operator(u: np.ndarray, M: MetricField) -> np.ndarray:
    """Compact flux-form div(A grad u), symmetric on fields pinned at the Dirichlet nodes."""
    return flux_divergence(u, M.A, M.grid)


@njit(parallel=True, cache=True)
def _leapfrog_update(u_prev, u_curr, rhs, pinned, dt2, nonlinear):
    n = u_curr.size
    out = np.empty(n)
    for i in prange(n):
        if pinned[i]:
            out[i] = 0.0
            continue
        value = rhs[i]
        if nonlinear:
            u = u_curr[i]
            value -= u * u * u * u * u
        out[i] = 2.0 * u_curr[i] - u_prev[i] + dt2 * value
    return out


def step(
    s: WaveState,
    M: MetricField,
    nonlinear: bool = True,
    F: Optional[np.ndarray] = None,
) -> WaveState:
    """One leapfrog step; Dirichlet nodes are zeroed after the update."""
    grid = M.grid
    if abs(s.dt) > stability_limit(M) * (1.0 + 1e-12):
        raise ValueError(
            f"{ERROR_CODES['CFL_VIOLATION']}: |dt| = {abs(s.dt):.4g} > {stability_limit(M):.4g}"
        )
    rhs = apply_operator(s.u_curr, M)
    if F is not None:
        rhs = rhs + grid.check_scalar(F)
    u_next = _leapfrog_update(
        np.ascontiguousarray(s.u_prev).ravel(),
        np.ascontiguousarray(s.u_curr).ravel(),
        np.ascontiguousarray(rhs).ravel(),
        np.ascontiguousarray(grid.dirichlet).ravel(),
        s.dt * s.dt,
        nonlinear,
    ).reshape(grid.shape)
    if not np.all(np.isfinite(u_next)):
        _LOGGER.error("Non-finite values at step %d (t=%.6g)", s.step + 1, s.t + s.dt)
        raise NumericalAbort(ERROR_CODES["NAN_DETECTED"], s.step + 1)
    return WaveState(s.u_curr, u_next, s.t + s.dt, s.dt, s.step + 1)


def initial_state(
    data: InitialData,
    M: MetricField,
    dt: float,
    nonlinear: bool = True,
    F0: Optional[np.ndarray] = None,
    t0: float = 0.0,
) -> WaveState:
    """State at t0 with a ghost level chosen so the first step is the Taylor start.

    u^1 = f + dt g + dt^2/2 (div(A grad f) - f^5 + F) is reproduced by setting
    u^-1 = f - dt g + dt^2/2 (div(A grad f) - f^5 + F).
    """
    grid = M.grid
    f = np.where(grid.dirichlet, 0.0, grid.check_scalar(data.f))
    g = np.where(grid.dirichlet, 0.0, grid.check_scalar(data.g))
    accel = apply_operator(f, M)
    if nonlinear:
        accel = accel - f**5
    if F0 is not None:
        accel = accel + F0
    ghost = f - dt * g + 0.5 * dt * dt * accel
    return WaveState(np.where(grid.dirichlet, 0.0, ghost), f, t0, dt, 0)


def with_velocity(s: WaveState, nxt: WaveState) -> WaveState:
    """Attach u_t = (u_next - u_prev) / (2 dt) at the time of ``s``."""
    if nxt.step != s.step + 1:
        raise ValueError(ERROR_CODES["INSUFFICIENT_HISTORY"])
    return replace(s, u_t=(nxt.u_curr - s.u_prev) / (2.0 * s.dt))


def reverse(s: WaveState) -> WaveState:
    """Swap the two levels and negate dt; stepping then runs backwards in time."""
    return WaveState(s.u_curr, s.u_prev, s.t - s.dt, -s.dt, s.step)


class LeapfrogSolver:
    """Stepper bound to a metric, a nonlinearity switch and an optional forcing F(t)."""

    def __init__(self, M: MetricField, nonlinear: bool = True, forcing: Optional[Forcing] = None):
        self.metric = M
        self.nonlinear = nonlinear
        self.forcing = forcing

    def _forcing_at(self, t: float) -> Optional[np.ndarray]:
        return None if self.forcing is None else self.forcing(t)

    def start(self, data: InitialData, dt: float, t0: float = 0.0) -> WaveState:
        if abs(dt) > stability_limit(self.metric) * (1.0 + 1e-12):
            raise ValueError(f"{ERROR_CODES['CFL_VIOLATION']}: dt = {dt:.4g}")
        return initial_state(data, self.metric, dt, self.nonlinear, self._forcing_at(t0), t0)

    def advance(self, s: WaveState) -> WaveState:
        return step(s, self.metric, self.nonlinear, self._forcing_at(s.t))

    def iterate(self, s: WaveState, n_steps: int) -> Iterator[WaveState]:
        """Yield the following ``n_steps`` states."""
        for _ in range(n_steps):
            s = self.advance(s)
            yield s

    def run(self, s: WaveState, n_steps: int) -> WaveState:
        """Advance ``n_steps`` and return the last state (``s`` itself for zero steps)."""
        last = deque(self.iterate(s, n_steps), maxlen=1)
        return last[0] if last else s


def _bump_derivative(s: np.ndarray) -> np.ndarray:
    """d/ds of compact_bump(|s|, 1)."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    denom = np.where(inside, 1.0 - s * s, 1.0)
    return np.where(inside, compact_bump(np.abs(s), 1.0) * (-2.0 * s / denom**2), 0.0)


def make_initial_data(
    grid: Grid,
    kind: str = DATA_KIND_BUMP,
    center: Sequence[float] = (0.0, 0.0, 0.0),
    radius: float = 0.3,
    amplitude: float = 1.0,
    velocity_amplitude: float = 0.0,
    shell_radius: Optional[float] = None,
    count: int = 4,
    seed: int = 0,
    clearance: float = DEFAULT_DATA_CLEARANCE,
) -> InitialData:
    """Build one of the data families and check Dirichlet clearance.

    * ``bump``: f = amplitude * bump, g = velocity_amplitude * bump
    * ``focused``: incoming shell u = phi(r + t) / r at t = 0, centred on
      ``center`` with shell radius ``shell_radius`` and width ``radius``
    * ``random_smooth``: seeded sum of ``count`` bumps inside the ball of ``radius``
    """
    if kind not in DATA_KINDS:
        raise KeyError(f"{ERROR_CODES['UNKNOWN_NAME']}: data kind '{kind}'")
    X, Y, Z = grid.coordinates
    c = np.asarray(center, dtype=float)
    r = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)

    if kind == DATA_KIND_NONE:
        f = np.zeros(grid.shape)
        g = np.zeros(grid.shape)
        support_radius = 0.0
    elif kind == DATA_KIND_BUMP:
        profile = compact_bump(r, radius)
        f = amplitude * profile
        g = velocity_amplitude * profile
        support_radius = radius
    elif kind == DATA_KIND_FOCUSED:
        r0 = 2.0 * radius if shell_radius is None else shell_radius
        if r0 <= radius:
            raise ValueError("Focused shell must not contain the centre")
        s = (r - r0) / radius
        psi = amplitude * compact_bump(np.abs(s), 1.0)
        dpsi = amplitude * _bump_derivative(s) / radius
        f = psi
        g = dpsi + psi / np.where(r > 0.0, r, 1.0)
        support_radius = r0 + radius
    else:
        rng = np.random.default_rng(seed)
        f = np.zeros(grid.shape)
        g = np.zeros(grid.shape)
        for _ in range(count):
            width = radius * rng.uniform(0.3, 0.5)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            offset = c + direction * rng.uniform(0.0, radius - width)
            rb = np.sqrt((X - offset[0]) ** 2 + (Y - offset[1]) ** 2 + (Z - offset[2]) ** 2)
            profile = compact_bump(rb, width)
            f += amplitude * rng.uniform(-1.0, 1.0) * profile
            g += velocity_amplitude * rng.uniform(-1.0, 1.0) * profile
        support_radius = radius

    data = InitialData(f, g, support_radius, tuple(float(v) for v in c), kind)
    is_valid, error_msg = validate_clearance(grid, data, clearance)
    if not is_valid:
        raise ValueError(error_msg)
    _LOGGER.debug("Initial data '%s' with support radius %.4g", kind, support_radius)
    return data


def validate_clearance(grid: Grid, data: InitialData, clearance: float = DEFAULT_DATA_CLEARANCE) -> Tuple[bool, Optional[str]]:
    """Data must vanish within ``clearance`` cells of every Dirichlet node."""
    distance = ndimage.distance_transform_edt(~grid.dirichlet, sampling=grid.spacing)
    near = distance < clearance * grid.h_max
    if np.any(data.support & near):
        node = tuple(int(i) for i in np.argwhere(data.support & near)[0])
        return False, f"Initial data does not vanish within {clearance:g} cells of the boundary (node {node})"
    return True, None


def _surface_frame(grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary nodes with their signed distances and unit normals."""
    if not grid.has_obstacle or grid.obstacle is None:
        raise ValueError(ERROR_CODES["NO_OBSTACLE"])
    nodes = np.argwhere(grid.boundary)
    points = grid.node_position(nodes).reshape(-1, 3)
    x, y, z = points.T
    sdf = np.asarray(grid.obstacle.sdf(x, y, z), dtype=float)
    normal = np.asarray(grid.obstacle.normal(x, y, z), dtype=float).T
    return nodes, points - sdf[:, None] * normal, normal


def sample(grid: Grid, w: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a scalar field at ``(n, 3)`` physical points."""
    coords = ((points - np.asarray(grid.origin)) / np.asarray(grid.spacing)).T
    return ndimage.map_coordinates(w, coords, order=1, mode="nearest")


def boundary_normal_trace(s: WaveState, grid: Grid, u: Optional[np.ndarray] = None) -> np.ndarray:
    """Exterior-normal derivative of u at the surface foot point of every boundary node.

    u is sampled along the normal at 3h and 5h from the surface and the
    quadratic through (0, 0) and both samples is differentiated at 0.
    Returns one value per boundary node in ``np.argwhere(grid.boundary)`` order.
    """
    nodes, feet, normal = _surface_frame(grid)
    u = s.u_curr if u is None else u
    h = grid.h_max
    d1, d2 = TRACE_OFFSETS[0] * h, TRACE_OFFSETS[1] * h
    u1 = sample(grid, u, feet + d1 * normal)
    u2 = sample(grid, u, feet + d2 * normal)
    return (u1 * d2 * d2 - u2 * d1 * d1) / (d1 * d2 * (d2 - d1))


def boundary_area_weights(grid: Grid) -> np.ndarray:
    """Surface area carried by each boundary node: cell volume / max_k(h_k |n_k|)."""
    _, _, normal = _surface_frame(grid)
    thickness = np.max(np.abs(normal) * np.asarray(grid.spacing), axis=1)
    return grid.cell_volume / thickness


class FiniteSpeedMonitor:
    """Checks that the solution stays inside the cone of the initial support.

    The stencil has a numerical domain of dependence of one node per step in
    the chessboard metric, which is wider than the physical cone. Two bounds
    are checked:

    * exact zeros (``EXACT_ZERO_TOL``) beyond the stencil reach
    * beyond the physical cone ``sqrt(c2) |t - t0| + margin h``, a relative
      leak ``max|u| / peak`` of at most ``RELATIVE_ZERO_TOL``

    The leak is the dispersive precursor of the scheme and shrinks under
    refinement; ``max_leak`` keeps the largest value seen.
    """

    def __init__(self, data: InitialData, M: MetricField, margin: float = DEFAULT_FINITE_SPEED_MARGIN):
        grid = M.grid
        support = data.support
        self._grid = grid
        self._speed = float(np.sqrt(M.c2))
        self._margin = margin * grid.h_max
        self._t0: Optional[float] = None
        if support.any():
            self._chess = ndimage.distance_transform_cdt(~support, metric="chessboard")
            self._euclid = ndimage.distance_transform_edt(~support, sampling=grid.spacing)
        else:
            self._chess = None
            self._euclid = None
        self.violations: List[int] = []
        self.max_leak = 0.0

    def leak(self, s: WaveState) -> float:
        """max |u| beyond the physical cone relative to max |u|."""
        if self._t0 is None:
            self._t0 = s.t - s.step * s.dt
        u = s.u_curr
        peak = float(np.max(np.abs(u)))
        if self._euclid is None or peak == 0.0:
            return 0.0
        radius = self._speed * abs(s.t - self._t0) + self._margin
        outside_cone = self._euclid > radius
        if not outside_cone.any():
            return 0.0
        return float(np.max(np.abs(u[outside_cone]))) / peak

    def check(self, s: WaveState) -> bool:
        if self._t0 is None:
            self._t0 = s.t - s.step * s.dt
        u = s.u_curr
        if self._chess is None:
            ok = bool(np.max(np.abs(u)) <= EXACT_ZERO_TOL)
        else:
            reach = STENCIL_REACH * (s.step + 1)
            outside_stencil = self._chess > reach
            exact_ok = not outside_stencil.any() or float(np.max(np.abs(u[outside_stencil]))) <= EXACT_ZERO_TOL
            leak = self.leak(s)
            self.max_leak = max(self.max_leak, leak)
            ok = exact_ok and leak <= RELATIVE_ZERO_TOL
        if not ok:
            _LOGGER.warning("Finite-speed check failed at step %d (t=%.6g)", s.step, s.t)
            self.violations.append(s.step)
        return ok
