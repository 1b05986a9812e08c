"""Riemannian distance from a point and the geometry derived from it.

The distance solves a^ij rho_i rho_j = 1 with rho(x0) = 0. It is computed in
factored form rho = T0 * tau, where T0 is the distance of the metric frozen
at x0, by Lax-Friedrichs fast sweeping on tau. Everything of second order is
obtained by differencing phi = rho^2 / 2, which is smooth at the source.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
import logging
from math import gcd
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .const import (
    DEFAULT_BAND_CONSTANT,
    DEFAULT_EIKONAL_INIT_RADIUS,
    DEFAULT_EIKONAL_MAX_ITERATIONS,
    DEFAULT_EIKONAL_TOL,
    DEFAULT_RESIDUAL_FACTOR,
    DEFAULT_RHO_MAX_FRACTION,
    DEFAULT_SMALL_RHO_SHELL,
    DISTANCE_MANIFOLD,
    DISTANCE_MODES,
    DISTANCE_OBSTACLE_AVOIDING,
    ERROR_CODES,
)
from .errors import EikonalNotConverged
from .fields import (
    Grid,
    divergence_fd,
    gradient_fd,
    hessian_fd,
    integrate,
    matvec,
    node_matrices,
    quadratic_form,
)
from .metric import MetricField

_LOGGER = logging.getLogger(__name__)

_ORDERINGS = tuple(product((1, -1), repeat=3))


@njit(cache=True)
def _sweep(tau, T0, dT0, A, frozen, active, reflect, hx, hy, hz, sx, sy, sz):
    """One Gauss-Seidel pass in a fixed ordering; returns the total decrease."""
    nx, ny, nz = tau.shape
    change = 0.0
    for ii in range(1, nx - 1):
        i = ii if sx > 0 else nx - 1 - ii
        for jj in range(1, ny - 1):
            j = jj if sy > 0 else ny - 1 - jj
            for kk in range(1, nz - 1):
                k = kk if sz > 0 else nz - 1 - kk
                if frozen[i, j, k] or not active[i, j, k]:
                    continue
                c = tau[i, j, k]
                xp = tau[i + 1, j, k]
                xm = tau[i - 1, j, k]
                yp = tau[i, j + 1, k]
                ym = tau[i, j - 1, k]
                zp = tau[i, j, k + 1]
                zm = tau[i, j, k - 1]
                if reflect:
                    if not active[i + 1, j, k]:
                        xp = c
                    if not active[i - 1, j, k]:
                        xm = c
                    if not active[i, j + 1, k]:
                        yp = c
                    if not active[i, j - 1, k]:
                        ym = c
                    if not active[i, j, k + 1]:
                        zp = c
                    if not active[i, j, k - 1]:
                        zm = c
                t0 = T0[i, j, k]
                p0 = c * dT0[0, i, j, k] + t0 * (xp - xm) / (2.0 * hx)
                p1 = c * dT0[1, i, j, k] + t0 * (yp - ym) / (2.0 * hy)
                p2 = c * dT0[2, i, j, k] + t0 * (zp - zm) / (2.0 * hz)
                a00 = A[0, 0, i, j, k]
                a11 = A[1, 1, i, j, k]
                a22 = A[2, 2, i, j, k]
                a01 = A[0, 1, i, j, k]
                a02 = A[0, 2, i, j, k]
                a12 = A[1, 2, i, j, k]
                quad = (
                    a00 * p0 * p0 + a11 * p1 * p1 + a22 * p2 * p2
                    + 2.0 * (a01 * p0 * p1 + a02 * p0 * p2 + a12 * p1 * p2)
                )
                ham = np.sqrt(max(quad, 0.0))
                # artificial viscosity bounds |dH/dp_k| <= T0 sqrt(a_kk)
                s0 = t0 * np.sqrt(a00)
                s1 = t0 * np.sqrt(a11)
                s2 = t0 * np.sqrt(a22)
                denom = s0 / hx + s1 / hy + s2 / hz
                if denom <= 0.0:
                    continue
                new = (
                    1.0 - ham
                    + s0 * (xp + xm) / (2.0 * hx)
                    + s1 * (yp + ym) / (2.0 * hy)
                    + s2 * (zp + zm) / (2.0 * hz)
                ) / denom
                if new < c:
                    change += c - new
                    tau[i, j, k] = new
    return change


@njit(cache=True)
def _extrapolate_edges(tau, frozen):
    """Second-order extrapolation onto the box faces, never increasing a value."""
    nx, ny, nz = tau.shape
    for j in range(ny):
        for k in range(nz):
            if not frozen[0, j, k]:
                tau[0, j, k] = min(max(2.0 * tau[1, j, k] - tau[2, j, k], tau[2, j, k]), tau[0, j, k])
            if not frozen[nx - 1, j, k]:
                tau[nx - 1, j, k] = min(
                    max(2.0 * tau[nx - 2, j, k] - tau[nx - 3, j, k], tau[nx - 3, j, k]), tau[nx - 1, j, k]
                )
    for i in range(nx):
        for k in range(nz):
            if not frozen[i, 0, k]:
                tau[i, 0, k] = min(max(2.0 * tau[i, 1, k] - tau[i, 2, k], tau[i, 2, k]), tau[i, 0, k])
            if not frozen[i, ny - 1, k]:
                tau[i, ny - 1, k] = min(
                    max(2.0 * tau[i, ny - 2, k] - tau[i, ny - 3, k], tau[i, ny - 3, k]), tau[i, ny - 1, k]
                )
    for i in range(nx):
        for j in range(ny):
            if not frozen[i, j, 0]:
                tau[i, j, 0] = min(max(2.0 * tau[i, j, 1] - tau[i, j, 2], tau[i, j, 2]), tau[i, j, 0])
            if not frozen[i, j, nz - 1]:
                tau[i, j, nz - 1] = min(
                    max(2.0 * tau[i, j, nz - 2] - tau[i, j, nz - 3], tau[i, j, nz - 3]), tau[i, j, nz - 1]
                )


def _metric_at(M: MetricField, x0: Sequence[float]) -> np.ndarray:
    """Trilinear interpolation of g at a point."""
    grid = M.grid
    coords = ((np.asarray(x0, dtype=float) - grid.origin) / grid.spacing).reshape(3, 1)
    g0 = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            g0[a, b] = ndimage.map_coordinates(M.g[a, b], coords, order=1, mode="nearest")[0]
    return 0.5 * (g0 + g0.T)


def frozen_distance(M: MetricField, x0: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Distance of the constant metric g(x0) and its Euclidean gradient."""
    grid = M.grid
    g0 = _metric_at(M, x0)
    offset = np.stack([grid.coordinates[k] - x0[k] for k in range(3)])
    lowered = np.einsum("ij,j...->i...", g0, offset)
    T0 = np.sqrt(np.maximum(np.einsum("i...,i...->...", offset, lowered), 0.0))
    dT0 = lowered / np.where(T0 > 0.0, T0, 1.0)
    return T0, dT0


@dataclass(frozen=True, eq=False)
class GeodesicField:
    """Distance from x0 with the derived first- and second-order fields."""

    x0: Tuple[float, float, float]
    metric: MetricField
    rho: np.ndarray
    dphi: np.ndarray
    grad_rho: np.ndarray
    grad_g_rho: np.ndarray
    lap_half_rho2: np.ndarray
    hess_half_rho2: np.ndarray
    div_rho_gradg: np.ndarray
    residual: np.ndarray
    valid: np.ndarray
    rho_max: float
    mode: str = DISTANCE_MANIFOLD
    iterations: int = 0

    @property
    def grid(self) -> Grid:
        return self.metric.grid

    @classmethod
    def from_distance(
        cls,
        rho: np.ndarray,
        M: MetricField,
        x0: Sequence[float],
        residual_factor: float = DEFAULT_RESIDUAL_FACTOR,
        rho_max_fraction: float = DEFAULT_RHO_MAX_FRACTION,
        mode: str = DISTANCE_MANIFOLD,
        iterations: int = 0,
    ) -> "GeodesicField":
        """Derive every field from a distance array (solver output, closed form or oracle)."""
        grid = M.grid
        rho = np.asarray(grid.check_scalar(rho), dtype=float)
        phi = 0.5 * rho * rho
        dphi = gradient_fd(phi, grid)
        safe = np.where(rho > 0.0, rho, np.inf)
        grad_rho = dphi / safe
        grad_g_rho = matvec(M.A, grad_rho)

        hess = hessian_fd(phi, grid) - np.einsum("kij...,k...->ij...", M.christoffel, dphi)
        hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
        V = matvec(M.A, dphi)
        div_rho_gradg = divergence_fd(V, grid)
        sqrt_G = M.sqrt_G
        lap = divergence_fd(sqrt_G * V, grid) / sqrt_G

        residual = np.abs(quadratic_form(M.A, grad_rho) - 1.0)
        rho_max = rho_max_fraction * grid.distance_to_edge(x0)
        valid = (
            grid.mask
            & (residual <= residual_factor * grid.h_max)
            & (rho <= rho_max)
            & (rho >= 2.0 * grid.h_max)
        )
        return cls(
            x0=tuple(float(c) for c in x0),
            metric=M,
            rho=rho,
            dphi=dphi,
            grad_rho=grad_rho,
            grad_g_rho=grad_g_rho,
            lap_half_rho2=lap,
            hess_half_rho2=hess,
            div_rho_gradg=div_rho_gradg,
            residual=residual,
            valid=valid,
            rho_max=rho_max,
            mode=mode,
            iterations=iterations,
        )

    def eikonal_summary(self, residual_factor: float = DEFAULT_RESIDUAL_FACTOR) -> Tuple[float, float]:
        """(fraction of valid nodes within tolerance, max residual over the checked shell)."""
        grid = self.grid
        shell = grid.mask & (self.rho <= self.rho_max) & (self.rho >= 2.0 * grid.h_max)
        if not shell.any():
            return 0.0, float("nan")
        within = self.residual[shell] <= residual_factor * grid.h_max
        return float(np.mean(within)), float(np.max(self.residual[shell]))


def solve_eikonal(
    M: MetricField,
    x0: Sequence[float],
    mode: str = DISTANCE_MANIFOLD,
    tol: float = DEFAULT_EIKONAL_TOL,
    max_iterations: int = DEFAULT_EIKONAL_MAX_ITERATIONS,
    init_radius: float = DEFAULT_EIKONAL_INIT_RADIUS,
    residual_factor: float = DEFAULT_RESIDUAL_FACTOR,
    rho_max_fraction: float = DEFAULT_RHO_MAX_FRACTION,
    monitor: Optional[Callable[[int, float], None]] = None,
) -> GeodesicField:
    """Distance from x0 by Lax-Friedrichs fast sweeping (8 orderings per iteration).

    Nodes within ``init_radius`` cells of the source keep the frozen-metric
    distance. In ``manifold`` mode the metric is used through the obstacle;
    in ``obstacle_avoiding`` mode masked nodes are walls.
    """
    grid = M.grid
    if mode not in DISTANCE_MODES:
        raise ValueError(f"Unknown distance mode '{mode}'")
    if not grid.contains(x0):
        raise ValueError(f"{ERROR_CODES['SOURCE_OUTSIDE_GRID']}: {tuple(x0)}")
    avoid = mode == DISTANCE_OBSTACLE_AVOIDING
    if avoid and grid.has_obstacle and grid.obstacle is not None:
        if float(grid.obstacle.sdf(*np.asarray(x0, dtype=float))) < -grid.h_max:
            raise ValueError(f"Source {tuple(x0)} lies inside the obstacle")

    T0, dT0 = frozen_distance(M, x0)
    frozen = T0 <= init_radius * grid.h_max
    frozen[grid.nearest_node(x0)] = True
    active = grid.mask.copy() if avoid else np.ones(grid.shape, dtype=bool)
    active |= frozen

    # tau = rho / T0 lies in [sqrt(c1/c2), sqrt(c2/c1)] without walls
    ceiling = 2.0 * np.sqrt(M.c2 / M.c1) + 1.0
    if avoid and grid.has_obstacle:
        ceiling *= 10.0
    tau = np.full(grid.shape, ceiling)
    tau[frozen] = 1.0

    A = np.ascontiguousarray(M.A)
    dT0 = np.ascontiguousarray(dT0)
    hx, hy, hz = grid.spacing
    updatable = max(int(np.count_nonzero(active & ~frozen)), 1)
    mean_change = float("inf")
    for iteration in range(1, max_iterations + 1):
        change = 0.0
        for sx, sy, sz in _ORDERINGS:
            change += _sweep(tau, T0, dT0, A, frozen, active, avoid, hx, hy, hz, sx, sy, sz)
            _extrapolate_edges(tau, frozen)
        mean_change = change / updatable
        _LOGGER.debug("Eikonal iteration %d: mean change %.3e", iteration, mean_change)
        if monitor is not None:
            monitor(iteration, mean_change)
        if mean_change < tol:
            break
    else:
        raise EikonalNotConverged(max_iterations, mean_change)

    rho = T0 * tau
    if avoid:
        rho = np.where(active, rho, np.inf)
    geodesic = GeodesicField.from_distance(
        np.where(np.isfinite(rho), rho, 0.0) if avoid else rho,
        M,
        x0,
        residual_factor=residual_factor,
        rho_max_fraction=rho_max_fraction,
        mode=mode,
        iterations=iteration,
    )
    if avoid:
        object.__setattr__(geodesic, "valid", geodesic.valid & active)
    fraction, worst = geodesic.eikonal_summary(residual_factor)
    _LOGGER.info(
        "Eikonal converged in %d iterations (%s): %.1f%% of shell within tolerance, max residual %.3g",
        iteration, mode, 100.0 * fraction, worst,
    )
    if fraction < 0.99:
        _LOGGER.warning("Eikonal residual above tolerance on %.1f%% of nodes", 100.0 * (1.0 - fraction))
    return geodesic


def exact_flat_distance(grid: Grid, x0: Sequence[float], scale: float = 1.0) -> np.ndarray:
    """|x - x0| / scale, the distance of A = scale^2 I."""
    X, Y, Z = grid.coordinates
    return np.sqrt((X - x0[0]) ** 2 + (Y - x0[1]) ** 2 + (Z - x0[2]) ** 2) / scale


def graph_offsets(stencil_radius: int) -> List[Tuple[int, int, int]]:
    """Half of the primitive lattice offsets within the stencil radius."""
    offsets = []
    for offset in product(range(-stencil_radius, stencil_radius + 1), repeat=3):
        if offset <= (0, 0, 0):
            continue
        if gcd(gcd(abs(offset[0]), abs(offset[1])), abs(offset[2])) != 1:
            continue
        offsets.append(offset)
    return offsets


def dijkstra_distance(
    M: MetricField,
    x0: Sequence[float],
    stencil_radius: int = 1,
    init_radius: float = DEFAULT_EIKONAL_INIT_RADIUS,
    mode: str = DISTANCE_MANIFOLD,
) -> np.ndarray:
    """Shortest-path distance on the lattice graph with g-length edges.

    ``stencil_radius=1`` is the 26-neighbour graph. A virtual source node is
    joined to the nodes near x0 by their frozen-metric distance.
    """
    grid = M.grid
    if not grid.contains(x0):
        raise ValueError(f"{ERROR_CODES['SOURCE_OUTSIDE_GRID']}: {tuple(x0)}")
    shape = grid.shape
    n = grid.size
    index = np.arange(n).reshape(shape)
    usable = grid.mask if mode == DISTANCE_OBSTACLE_AVOIDING else np.ones(shape, dtype=bool)
    h = np.asarray(grid.spacing)

    rows, cols, weights = [], [], []
    for offset in graph_offsets(stencil_radius):
        src = tuple(slice(max(0, -o), s - max(0, o)) for o, s in zip(offset, shape))
        dst = tuple(slice(max(0, o), s - max(0, -o)) for o, s in zip(offset, shape))
        keep = usable[src] & usable[dst]
        step = np.asarray(offset, dtype=float) * h
        g_mean = 0.5 * (M.g[(slice(None), slice(None)) + src] + M.g[(slice(None), slice(None)) + dst])
        length = np.sqrt(np.einsum("i,ij...,j->...", step, g_mean, step))
        rows.append(index[src][keep])
        cols.append(index[dst][keep])
        weights.append(length[keep])

    T0, _ = frozen_distance(M, x0)
    seeds = (T0 <= init_radius * grid.h_max) & usable
    seeds[grid.nearest_node(x0)] = True
    rows.append(np.full(int(seeds.sum()), n))
    cols.append(index[seeds])
    # zero weights would be dropped by the sparse format
    weights.append(np.maximum(T0[seeds], 1e-300))

    graph = coo_matrix(
        (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))), shape=(n + 1, n + 1)
    ).tocsr()
    distances = dijkstra(graph, directed=False, indices=n)
    _LOGGER.info("Dijkstra oracle on %d nodes, stencil radius %d", n, stencil_radius)
    return distances[:n].reshape(shape)


def _s_cot(s: np.ndarray) -> np.ndarray:
    """s cot s, equal to 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        value = s / np.tan(np.where(small, 1.0, s))
    return np.where(small, 1.0 - s * s / 3.0, value)


def _s_coth(s: np.ndarray) -> np.ndarray:
    """s coth s, equal to 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        value = s / np.tanh(np.where(small, 1.0, s))
    return np.where(small, 1.0 + s * s / 3.0, value)


def whitened_hessian(Gf: GeodesicField, nodes: np.ndarray) -> np.ndarray:
    """L^-1 H L^-T at the selected nodes, with g = L L^T; shape ``(n, 3, 3)``.

    Its eigenvalues are the generalized eigenvalues of D^2(rho^2/2) against g.
    """
    H = node_matrices(Gf.hess_half_rho2)[nodes]
    g = node_matrices(Gf.metric.g)[nodes]
    L = np.linalg.cholesky(g)
    left = np.linalg.solve(L, H)
    W = np.linalg.solve(L, np.swapaxes(left, -1, -2))
    return 0.5 * (W + np.swapaxes(W, -1, -2))


@dataclass
class ComparisonReport:
    """Outcome of the Laplacian and Hessian comparison bounds."""

    curvature_bound: float
    band: float
    rows: List[Tuple[str, float, float, float, float]] = field(repr=False)
    violations: int
    worst_margin: float
    hessian_violations: int
    hessian_worst_margin: float

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.hessian_violations == 0


def comparison_check(
    Gf: GeodesicField,
    a: float,
    band_constant: float = DEFAULT_BAND_CONSTANT,
    region: Optional[np.ndarray] = None,
) -> ComparisonReport:
    """Check 1 + 2 a rho cot(a rho) <= lap <= 1 + 2 a rho coth(a rho) and the Hessian envelope.

    Violations are counted only beyond the band ``band_constant * h``.
    """
    grid = Gf.grid
    if a < 0.0:
        raise ValueError("Curvature bound must be nonnegative")
    if a * Gf.rho_max >= 0.5 * np.pi:
        raise ValueError(f"a * rho_max = {a * Gf.rho_max:.4g} must stay below pi/2")
    nodes = Gf.valid if region is None else (Gf.valid & grid.check_scalar(region).astype(bool))
    if not nodes.any():
        raise ValueError(ERROR_CODES["EMPTY_REGION"])
    band = band_constant * grid.h_max

    s = a * Gf.rho[nodes]
    lower_h, upper_h = _s_cot(s), _s_coth(s)
    lower, upper = 1.0 + 2.0 * lower_h, 1.0 + 2.0 * upper_h
    lap = Gf.lap_half_rho2[nodes]
    margin = np.minimum(lap - lower, upper - lap)

    eig = np.linalg.eigvalsh(whitened_hessian(Gf, nodes))
    hess_margin = np.minimum(eig[:, 0] - lower_h, upper_h - eig[:, -1])

    labels = ["%d:%d:%d" % tuple(ix) for ix in np.argwhere(nodes)]
    rows = list(zip(labels, lower.tolist(), lap.tolist(), upper.tolist(), margin.tolist()))
    report = ComparisonReport(
        curvature_bound=a,
        band=band,
        rows=rows,
        violations=int(np.count_nonzero(margin < -band)),
        worst_margin=float(margin.min()),
        hessian_violations=int(np.count_nonzero(hess_margin < -band)),
        hessian_worst_margin=float(hess_margin.min()),
    )
    _LOGGER.info(
        "Comparison check a=%.4g over %d nodes: %d Laplacian and %d Hessian violations beyond band %.3g",
        a, len(rows), report.violations, report.hessian_violations, band,
    )
    return report


@dataclass
class SmallRhoLimits:
    """Extrapolated values of div(rho A grad rho) and of the whitened Hessian at rho = 0."""

    limit_div: float
    limit_hess: np.ndarray
    hess_eigenvalues: np.ndarray
    bins: int


def _intercept(r2: np.ndarray, values: np.ndarray) -> float:
    if len(r2) < 2:
        return float(values[0])
    return float(np.polyfit(r2, values, 1)[1])


def small_rho_limits(
    Gf: GeodesicField,
    shell: Tuple[float, float] = DEFAULT_SMALL_RHO_SHELL,
    bins: int = 8,
) -> SmallRhoLimits:
    """Shell averages over shell[0] h <= rho <= shell[1] h, extrapolated linearly in rho^2."""
    grid = Gf.grid
    h = grid.h_max
    nodes = Gf.valid & (Gf.rho >= shell[0] * h) & (Gf.rho <= shell[1] * h)
    if not nodes.any():
        raise ValueError(f"{ERROR_CODES['EMPTY_REGION']}: small-rho shell")
    rho = Gf.rho[nodes]
    div = Gf.div_rho_gradg[nodes]
    W = whitened_hessian(Gf, nodes)

    edges = np.linspace(shell[0] * h, shell[1] * h, bins + 1)
    which = np.clip(np.digitize(rho, edges) - 1, 0, bins - 1)
    r2, div_means, hess_means = [], [], []
    for b in range(bins):
        sel = which == b
        if not sel.any():
            continue
        r2.append(np.mean(rho[sel] ** 2))
        div_means.append(np.mean(div[sel]))
        hess_means.append(W[sel].mean(axis=0))
    r2 = np.asarray(r2)
    div_means = np.asarray(div_means)
    hess_means = np.asarray(hess_means)

    limit_div = _intercept(r2, div_means)
    limit_hess = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            limit_hess[a, b] = _intercept(r2, hess_means[:, a, b])
    limit_hess = 0.5 * (limit_hess + limit_hess.T)
    eigenvalues = np.linalg.eigvalsh(limit_hess)
    _LOGGER.info(
        "Small-rho limits from %d shells: div -> %.4f, Hessian eigenvalues -> %s",
        len(r2), limit_div, np.array2string(eigenvalues, precision=4),
    )
    return SmallRhoLimits(limit_div, limit_hess, eigenvalues, len(r2))


@dataclass
class PolarIntegrals:
    """Singular integrals over metric balls and their fitted growth exponents."""

    S: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    exponent_I1: float
    exponent_I2: float


def polar_integral_estimates(Gf: GeodesicField, S_values: Sequence[float] | float) -> PolarIntegrals:
    """I1 = int_{rho <= |S|} rho^-3/2 dx and the mantle version I2 with weight sqrt(1 + |grad rho|^2).

    The source node itself (rho = 0) is left out.
    """
    grid = Gf.grid
    S_values = np.atleast_1d(np.abs(np.asarray(S_values, dtype=float)))
    if np.any(S_values > Gf.rho_max * (1.0 + 1e-12)):
        raise ValueError(f"|S| must not exceed rho_max = {Gf.rho_max:.4g}")
    positive = Gf.rho > 0.0
    with np.errstate(divide="ignore"):
        kernel = np.where(positive, Gf.rho, 1.0) ** -1.5
    stretch = np.sqrt(1.0 + np.einsum("i...,i...->...", Gf.grad_rho, Gf.grad_rho))

    I1, I2 = [], []
    for S in S_values:
        region = grid.mask & positive & (Gf.rho <= S)
        if not region.any():
            raise ValueError(f"{ERROR_CODES['EMPTY_REGION']}: no nodes with rho <= {S:.4g}")
        I1.append(integrate(kernel, grid, region))
        I2.append(integrate(kernel * stretch, grid, region))
    I1, I2 = np.asarray(I1), np.asarray(I2)

    if len(S_values) >= 2:
        exponent_I1 = float(np.polyfit(np.log(S_values), np.log(I1), 1)[0])
        exponent_I2 = float(np.polyfit(np.log(S_values), np.log(I2), 1)[0])
    else:
        exponent_I1 = exponent_I2 = float("nan")
    return PolarIntegrals(S_values, I1, I2, exponent_I1, exponent_I2)
