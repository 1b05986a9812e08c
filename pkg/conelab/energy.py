"""Energy functionals on time slices: total and cone energies, mantle flux, traces."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .const import (
    DEFAULT_TANGENCY_RADIUS,
    DISTANCE_MANIFOLD,
    ERROR_CODES,
)
from .fields import Grid, compact_gradient_energy, divergence_fd, dot, gradient_fd, integrate, matvec
from .geodesic import GeodesicField
from .metric import MetricField
from .wave import WaveState, apply_operator, boundary_area_weights, boundary_normal_trace, sample

_LOGGER = logging.getLogger(__name__)

DENSITY_IDENTITY_DEPTH = 2
MIN_TANGENCY_SAMPLES = 5


@dataclass(frozen=True, eq=False)
class SliceFields:
    """Derived fields of one snapshot, computed once and shared by all diagnostics."""

    t: float
    u: np.ndarray
    u_t: np.ndarray
    du: np.ndarray
    W: np.ndarray  # A grad u
    grad_sq_g: np.ndarray  # a^ij u_i u_j
    density: np.ndarray  # 1/2 (u_t^2 + |grad u|_g^2 + u^6 / 3)

    @classmethod
    def from_state(cls, s: WaveState, M: MetricField) -> "SliceFields":
        if s.u_t is None:
            raise ValueError(f"{ERROR_CODES['INSUFFICIENT_HISTORY']}: state at t={s.t:.6g} has no u_t")
        return cls.from_arrays(s.t, s.u_curr, s.u_t, M)

    @classmethod
    def from_arrays(cls, t: float, u: np.ndarray, u_t: np.ndarray, M: MetricField) -> "SliceFields":
        du = gradient_fd(u, M.grid)
        W = matvec(M.A, du)
        grad_sq_g = dot(W, du)
        density = 0.5 * (u_t * u_t + grad_sq_g + u**6 / 3.0)
        return cls(t, u, u_t, du, W, grad_sq_g, density)


def _fields(s: WaveState | SliceFields, M: MetricField) -> SliceFields:
    return s if isinstance(s, SliceFields) else SliceFields.from_state(s, M)


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Backward cone with apex (t0, x0); delta > 0 gives the expanded cone."""

    t0: float
    geodesic: GeodesicField
    delta: float = 0.0

    def __post_init__(self) -> None:
        if self.delta < 0.0:
            raise ValueError("Cone expansion delta must be nonnegative")

    @property
    def x0(self) -> Tuple[float, float, float]:
        return self.geodesic.x0

    @property
    def metric(self) -> MetricField:
        return self.geodesic.metric

    @property
    def grid(self) -> Grid:
        return self.geodesic.grid

    def radius(self, t: float) -> float:
        return self.delta + self.t0 - t

    def region(self, t: float) -> np.ndarray:
        """D(t) = {x in the fluid : rho(x, x0) <= delta + t0 - t}."""
        return self.grid.mask & (self.geodesic.rho <= self.radius(t))

    def shell(self, t: float, width: float) -> np.ndarray:
        """Nodes within width/2 of the mantle at time t."""
        return self.grid.mask & (np.abs(self.geodesic.rho - self.radius(t)) <= 0.5 * width)

    def expanded(self, delta: float) -> "ConeSpec":
        return ConeSpec(self.t0, self.geodesic, delta)


def total_energy(s: WaveState | SliceFields, M: MetricField) -> float:
    """1/2 int (u_t^2 + a^ij u_i u_j + u^6 / 3) over the fluid domain.

    The gradient term is the stiffness of the stepper's operator
    (:func:`~conelab.fields.compact_gradient_energy`), so for states pinned at
    the Dirichlet nodes the energy is the one leapfrog nearly conserves.
    """
    sf = _fields(s, M)
    stiffness = compact_gradient_energy(sf.u, M.A, M.grid)
    return integrate(0.5 * (sf.u_t * sf.u_t + stiffness + sf.u**6 / 3.0), M.grid)


def cone_energy(s: WaveState | SliceFields, cone: ConeSpec) -> float:
    """Energy inside D(t); an empty section gives 0."""
    sf = _fields(s, cone.metric)
    return integrate(sf.density, cone.grid, cone.region(sf.t))


def l6_cone_mass(s: WaveState | SliceFields, cone: ConeSpec) -> float:
    """int_{D(t)} u^6 / 6."""
    sf = _fields(s, cone.metric)
    return integrate(sf.u**6 / 6.0, cone.grid, cone.region(sf.t))


def flux_density(sf: SliceFields, Gf: GeodesicField) -> np.ndarray:
    """Energy current through the level sets of rho: e - u_t (A grad u) . grad rho."""
    return sf.density - sf.u_t * dot(sf.W, Gf.grad_rho)


def mantle_slice_rate(
    s: WaveState | SliceFields, cone: ConeSpec, width: Optional[float] = None
) -> Optional[float]:
    """Rate of energy loss through the mantle at one time slice.

    Co-area quadrature over the shell of nodes within width/2 of
    rho = delta + t0 - t, weighted by cell volume / width. Returns None
    when the shell holds no nodes.
    """
    sf = _fields(s, cone.metric)
    grid = cone.grid
    width = grid.h_max if width is None else width
    shell = cone.shell(sf.t, width)
    if not shell.any():
        return None
    return integrate(flux_density(sf, cone.geodesic), grid, shell) / width


def flux_direct(
    states: Iterable[WaveState | SliceFields], cone: ConeSpec, width: Optional[float] = None
) -> float:
    """Mantle flux between the first and last slice: trapezoid in time of the slice rates."""
    times: List[float] = []
    rates: List[float] = []
    for s in states:
        sf = _fields(s, cone.metric)
        rate = mantle_slice_rate(sf, cone, width)
        if rate is None:
            _LOGGER.warning("Empty mantle shell at t=%.6g; slice skipped", sf.t)
            continue
        times.append(sf.t)
        rates.append(rate)
    if len(times) < 2:
        return 0.0
    return float(trapezoid(rates, times))


def flux_from_identity(ledger, s: float, t: float) -> float:
    """E(u, D(s)) - E(u, D(t)) from a recorded cone-energy series."""
    if t < s:
        raise ValueError("flux_from_identity needs s <= t")
    return ledger.value("E_cone", s) - ledger.value("E_cone", t)


def flux_cauchy_schwarz_margin(sf: SliceFields, Gf: GeodesicField, region: Optional[np.ndarray] = None) -> float:
    """min over valid nodes of 1/2 u_t^2 + 1/2 |grad u|_g^2 - |u_t a^ij u_i rho_j|.

    Nonnegative whenever |grad rho|_g = 1, which makes the flux integrand
    pointwise nonnegative.
    """
    nodes = Gf.valid if region is None else (Gf.valid & region)
    if not nodes.any():
        return 0.0
    margin = 0.5 * (sf.u_t**2 + sf.grad_sq_g) - np.abs(sf.u_t * dot(sf.W, Gf.grad_rho))
    return float(margin[nodes].min())


def density_identity_residual(
    history: Sequence[WaveState],
    M: MetricField,
    mode: str = "solution",
    nonlinear: bool = True,
    F: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Centred evaluation of d/dt e - div(u_t A grad u) at the middle of three snapshots.

    ``solution`` mode returns the left side minus u_t F, which vanishes for
    solutions. ``algebraic`` mode subtracts u_t times the equation residual
    and vanishes for any smooth u. Nodes closer than two cells to the mask
    or the box are set to zero.
    """
    if len(history) != 3 or any(s.u_t is None for s in history):
        raise ValueError(f"{ERROR_CODES['INSUFFICIENT_HISTORY']}: need three snapshots with u_t")
    if mode not in ("solution", "algebraic"):
        raise ValueError(f"Unknown residual mode '{mode}'")
    s0, s1, s2 = history
    grid = M.grid
    dt = s1.t - s0.t
    if not np.isclose(s2.t - s1.t, dt):
        raise ValueError("Snapshots must be equally spaced in time")

    def energy_density(s: WaveState) -> np.ndarray:
        sf = SliceFields.from_state(s, M)
        sixth = sf.u**6 / 3.0 if nonlinear else 0.0
        return 0.5 * (sf.u_t**2 + sf.grad_sq_g + sixth)

    de_dt = (energy_density(s2) - energy_density(s0)) / (2.0 * dt)
    mid = SliceFields.from_state(s1, M)
    current = mid.u_t * mid.W
    lhs = de_dt - divergence_fd(current, grid)
    forcing = 0.0 if F is None else F
    if mode == "solution":
        residual = lhs - mid.u_t * forcing
    else:
        u_tt = (s2.u_curr - 2.0 * s1.u_curr + s0.u_curr) / (dt * dt)
        pde = u_tt - apply_operator(s1.u_curr, M) + (s1.u_curr**5 if nonlinear else 0.0) - forcing
        residual = lhs - mid.u_t * pde
    return np.where(grid.interior(DENSITY_IDENTITY_DEPTH), residual, 0.0)


def trace_slice(s: WaveState, grid: Grid, weights: Optional[np.ndarray] = None) -> float:
    """int over the obstacle surface of (d_nu u)^2 at one time."""
    trace = boundary_normal_trace(s, grid)
    weights = boundary_area_weights(grid) if weights is None else weights
    return float(np.sum(weights * trace * trace))


def boundary_trace_bound(times: Sequence[float], slices: Sequence[float], E0: float) -> Tuple[float, float]:
    """(||d_nu u||_{L2((0,T) x boundary)}, norm^2 / E0)."""
    if len(times) != len(slices):
        raise ValueError("times and slices differ in length")
    norm = float(np.sqrt(max(trapezoid(slices, times), 0.0))) if len(times) > 1 else 0.0
    if norm == 0.0:
        return 0.0, 0.0
    if E0 <= 0.0:
        raise ValueError("Initial energy must be positive for the trace ratio")
    return norm, norm * norm / E0


@dataclass
class TangencyReport:
    """Boundary samples of grad_g rho . nu near a boundary apex."""

    rho: np.ndarray
    raw: np.ndarray
    weighted: np.ndarray
    exponent_raw: float
    exponent_weighted: float
    constant: float
    feet: np.ndarray = field(repr=False)

    @property
    def max_raw(self) -> float:
        return float(np.max(self.raw))

    @property
    def samples(self) -> int:
        return len(self.rho)


def _power_fit(x: np.ndarray, y: np.ndarray, floor: float) -> Tuple[float, float]:
    """Slope and prefactor of y ~ C x^p over the samples with y above ``floor``."""
    keep = y > floor
    if keep.sum() < 2:
        return float("inf"), 0.0
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(np.exp(intercept))


def tangency_check(
    Gf: GeodesicField,
    obstacle=None,
    radius: float = DEFAULT_TANGENCY_RADIUS,
) -> TangencyReport:
    """Fit |grad_g rho . nu| ~ C rho^p on the obstacle surface near a boundary apex.

    Samples are taken at the surface foot points of boundary nodes with
    3h <= rho <= radius. The weighted quantity rho * (grad_g rho . nu) is
    fitted as well.
    """
    grid = Gf.grid
    obstacle = grid.obstacle if obstacle is None else obstacle
    if obstacle is None or not grid.has_obstacle:
        raise ValueError(ERROR_CODES["NO_OBSTACLE"])
    if Gf.mode != DISTANCE_MANIFOLD:
        raise ValueError("Tangency samples need the distance extended through the obstacle")
    x0 = np.asarray(Gf.x0, dtype=float)
    h = grid.h_max
    if abs(float(obstacle.sdf(*x0))) > h:
        raise ValueError(f"Apex {tuple(x0)} is not on the obstacle surface (|sdf| > h)")

    nodes = np.argwhere(grid.boundary)
    points = grid.node_position(nodes).reshape(-1, 3)
    x, y, z = points.T
    sdf = np.asarray(obstacle.sdf(x, y, z), dtype=float)
    normal = np.asarray(obstacle.normal(x, y, z), dtype=float).T
    feet = points - sdf[:, None] * normal
    fx, fy, fz = feet.T
    nu = np.asarray(obstacle.normal(fx, fy, fz), dtype=float).T

    # plain central differences: rho is smooth through the obstacle in manifold mode
    phi = 0.5 * Gf.rho**2
    dphi = np.stack(np.gradient(phi, *grid.spacing, edge_order=2))
    grad_g_phi = matvec(Gf.metric.A, dphi)
    rho_feet = sample(grid, Gf.rho, feet)
    keep = (rho_feet >= 3.0 * h) & (rho_feet <= radius)
    if keep.sum() < MIN_TANGENCY_SAMPLES:
        raise ValueError(f"Only {int(keep.sum())} boundary samples with 3h <= rho <= {radius:g}")
    feet, nu, rho_feet = feet[keep], nu[keep], rho_feet[keep]
    components = np.stack([sample(grid, grad_g_phi[k], feet) for k in range(3)], axis=1)
    raw = np.abs(np.sum(components * nu, axis=1)) / rho_feet
    weighted = rho_feet * raw

    floor = 1e-12
    exponent_raw, _ = _power_fit(rho_feet, raw, floor)
    exponent_weighted, constant = _power_fit(rho_feet, weighted, floor)
    _LOGGER.info(
        "Tangency fit over %d samples: raw exponent %.3f, weighted exponent %.3f",
        len(rho_feet), exponent_raw, exponent_weighted,
    )
    return TangencyReport(rho_feet, raw, weighted, exponent_raw, exponent_weighted, constant, feet)
