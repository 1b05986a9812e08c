"""Morawetz multiplier fields, their divergence identity and the cone budget.

Time ``t`` here is cone time: the apex sits at t = 0 and the run lies at
t < 0. With phi = rho^2 / 2, V = A grad phi = rho A grad rho and
X u = V . grad u, the multiplier t u_t + X u + u satisfies

    (t u_t + X u + u) (u_tt - div(A grad u) + u^5)
        = d/dt (t Q + u_t u) - div(t P) + R

for any smooth u and any smooth phi.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import binary_dilation

from .const import BUDGET_COLUMNS, DEFAULT_QUADRATURE_TOL, ERROR_CODES
from .errors import MaskedNodeError
from .fields import (
    Grid,
    divergence_fd,
    dot,
    gradient_fd,
    integrate,
    matvec,
    quadratic_form,
)
from .geodesic import GeodesicField
from .metric import MetricField

_LOGGER = logging.getLogger(__name__)

IDENTITY_DEPTH = 3
CENTRAL_INSET = 0.25


@dataclass(frozen=True, eq=False)
class MultiplierFields:
    """Q, P, R at one cone time, with the four parts of R kept separately."""

    t: float
    Q: np.ndarray
    P: np.ndarray
    R: np.ndarray
    coef_ut: np.ndarray  # 1/2 div V - 3/2
    hessian_term: np.ndarray  # D^2(rho^2 / 2)(A grad u, A grad u)
    coef_grad: np.ndarray  # 1/2 - 1/2 div V
    coef_u6: np.ndarray  # 5/6 - div V / 6
    valid: np.ndarray


def _multiplier_parts(
    t: float,
    u: np.ndarray,
    u_t: np.ndarray,
    Gf: GeodesicField,
    nonlinear: bool = True,
) -> dict:
    """Node-wise ingredients shared by qpr_fields and identity_residual."""
    M = Gf.metric
    grid = M.grid
    du = gradient_fd(u, grid)
    W = matvec(M.A, du)
    grad_sq = dot(W, du)
    V = matvec(M.A, Gf.dphi)
    Xu = dot(Gf.dphi, W)
    div_V = Gf.div_rho_gradg
    u6 = u**6 if nonlinear else np.zeros_like(u)
    hess_term = quadratic_form(Gf.hess_half_rho2, W)
    coef_ut = 0.5 * div_V - 1.5
    coef_grad = 0.5 - 0.5 * div_V
    coef_u6 = 5.0 / 6.0 - div_V / 6.0
    R = coef_ut * u_t**2 + hess_term + coef_grad * grad_sq + coef_u6 * u6
    half_density = 0.5 * (u_t**2 + grad_sq + u6 / 3.0)
    lagrangian = 0.5 * (u_t**2 - grad_sq - u6 / 3.0)
    multiplier = t * u_t + Xu + u
    tQ = t * half_density + u_t * Xu
    tP = V * lagrangian + W * multiplier
    return {
        "du": du,
        "W": W,
        "Xu": Xu,
        "multiplier": multiplier,
        "tQ": tQ,
        "tP": tP,
        "R": R,
        "coef_ut": coef_ut,
        "coef_grad": coef_grad,
        "coef_u6": coef_u6,
        "hess_term": hess_term,
    }


def qpr_fields(s, Gf: GeodesicField, t: float, nonlinear: bool = True) -> MultiplierFields:
    """Q, P, R of the multiplier identity at cone time t != 0.

    ``s`` is anything carrying ``u`` and ``u_t`` arrays (a state with its
    velocity attached, or slice fields). Values outside the geodesic
    validity mask are set to zero.
    """
    if t == 0.0:
        raise ValueError("Multiplier fields are undefined at the apex time t = 0")
    if getattr(s, "u_t", None) is None:
        raise ValueError(f"{ERROR_CODES['INSUFFICIENT_HISTORY']}: u_t is required")
    parts = _multiplier_parts(t, s.u, s.u_t, Gf, nonlinear)
    valid = Gf.valid

    def keep(values: np.ndarray) -> np.ndarray:
        return np.where(valid, values, 0.0)

    return MultiplierFields(
        t=t,
        Q=keep(parts["tQ"] / t),
        P=np.where(valid, parts["tP"] / t, 0.0),
        R=keep(parts["R"]),
        coef_ut=keep(parts["coef_ut"]),
        hessian_term=keep(parts["hess_term"]),
        coef_grad=keep(parts["coef_grad"]),
        coef_u6=keep(parts["coef_u6"]),
        valid=valid,
    )


def central_region(grid: Grid, inset: float = CENTRAL_INSET, depth: int = IDENTITY_DEPTH) -> np.ndarray:
    """Nodes of the box shrunk by ``inset`` of its extent on every side."""
    lower = np.asarray(grid.origin)
    extent = np.asarray(grid.upper) - lower
    lo, hi = lower + inset * extent, lower + (1.0 - inset) * extent
    X, Y, Z = grid.coordinates
    box = (
        (X >= lo[0]) & (X <= hi[0])
        & (Y >= lo[1]) & (Y <= hi[1])
        & (Z >= lo[2]) & (Z <= hi[2])
    )
    return box & grid.interior(depth)


def _check_region(grid: Grid, region: Optional[np.ndarray], depth: int = 2) -> np.ndarray:
    if region is None:
        return grid.interior(IDENTITY_DEPTH)
    region = grid.check_scalar(region).astype(bool)
    if grid.has_obstacle:
        near = binary_dilation(region, iterations=depth) & ~grid.mask
        if near.any():
            raise MaskedNodeError(np.argwhere(near)[0])
    return region


@dataclass
class IdentityResidual:
    """Residual of the multiplier identity on interior time levels."""

    residual: np.ndarray  # (levels, *grid)
    times: np.ndarray
    l2: float
    lhs_l2: float
    region: np.ndarray = field(repr=False)


def identity_residual(
    u: np.ndarray,
    times: Sequence[float],
    Gf: GeodesicField,
    nonlinear: bool = True,
    region: Optional[np.ndarray] = None,
) -> IdentityResidual:
    """RHS - LHS of the multiplier identity for space-time samples ``u[n]`` at cone ``times[n]``.

    u need not solve the equation. Time derivatives are second-order
    ``np.gradient`` differences; the residual is reported on levels
    1 .. n-2 over ``region`` (default: the central sub-box).
    """
    M = Gf.metric
    grid = M.grid
    u = np.asarray(u, dtype=float)
    times = np.asarray(times, dtype=float)
    if u.ndim != 4 or u.shape[0] < 3 or u.shape[1:] != grid.shape:
        raise ValueError(f"{ERROR_CODES['INSUFFICIENT_HISTORY']}: need u of shape (>=3, *grid.shape)")
    if len(times) != u.shape[0]:
        raise ValueError("times and u levels differ in length")
    if np.any(times == 0.0):
        raise ValueError("Cone times must avoid the apex t = 0")
    region = central_region(grid) if region is None else (_check_region(grid, region) & grid.mask)

    u_t = np.gradient(u, times, axis=0, edge_order=2)
    u_tt = np.gradient(u_t, times, axis=0, edge_order=2)

    levels = len(times)
    G = np.empty_like(u)
    lhs = np.empty_like(u)
    rhs_space = np.empty_like(u)
    for n in range(levels):
        parts = _multiplier_parts(times[n], u[n], u_t[n], Gf, nonlinear)
        G[n] = parts["tQ"] + u_t[n] * u[n]
        pde = u_tt[n] - divergence_fd(parts["W"], grid)
        if nonlinear:
            pde = pde + u[n] ** 5
        lhs[n] = parts["multiplier"] * pde
        rhs_space[n] = -divergence_fd(parts["tP"], grid) + parts["R"]
    dG = np.gradient(G, times, axis=0, edge_order=2)
    residual = (dG + rhs_space - lhs)[1:-1]
    residual = np.where(region, residual, 0.0)

    dt = float(np.mean(np.abs(np.diff(times))))
    l2 = float(np.sqrt(sum(integrate(r * r, grid, region) for r in residual) * dt))
    lhs_l2 = float(np.sqrt(sum(integrate(v * v, grid, region) for v in lhs[1:-1]) * dt))
    _LOGGER.debug("Multiplier identity residual %.3e (lhs %.3e) over %d levels", l2, lhs_l2, levels - 2)
    return IdentityResidual(residual, times[1:-1], l2, lhs_l2, region)


def covariant_identity_residual(
    f: np.ndarray, X: np.ndarray, M: MetricField, region: Optional[np.ndarray] = None
) -> np.ndarray:
    """<grad_g f, grad_g (X f)>_g - <nabla_{grad_g f} X, grad_g f>_g - X(|grad_g f|_g^2 / 2).

    The covariant derivative uses the metric's Christoffel symbols.
    """
    grid = M.grid
    region = _check_region(grid, region)
    df = gradient_fd(f, grid)
    W = matvec(M.A, df)
    Xf = dot(grid.check_vector(X), df)
    term1 = dot(W, gradient_fd(Xf, grid))
    dX = np.stack([gradient_fd(X[k], grid) for k in range(3)])  # dX[k, i] = d_i X^k
    covariant = dX + np.einsum("kij...,j...->ki...", M.christoffel, X)
    term2 = np.einsum("k...,i...,ki...->...", df, W, covariant)
    term3 = dot(X, gradient_fd(0.5 * dot(W, df), grid))
    return np.where(region, term1 - term2 - term3, 0.0)


def hessian_substitution_residual(
    u: np.ndarray,
    Gf: GeodesicField,
    region: Optional[np.ndarray] = None,
    require_valid: bool = True,
) -> np.ndarray:
    """<grad_g u, grad_g(X u)>_g - D^2(rho^2/2)(grad_g u, grad_g u) - V(|grad_g u|_g^2 / 2)."""
    M = Gf.metric
    grid = M.grid
    region = Gf.valid & grid.interior(IDENTITY_DEPTH) if region is None else _check_region(grid, region)
    if require_valid and np.any(region & ~Gf.valid):
        node = np.argwhere(region & ~Gf.valid)[0]
        raise ValueError(f"Region includes node {tuple(node)} outside the geodesic validity mask")
    du = gradient_fd(u, grid)
    W = matvec(M.A, du)
    V = matvec(M.A, Gf.dphi)
    lhs = dot(W, gradient_fd(dot(Gf.dphi, W), grid))
    rhs = quadratic_form(Gf.hess_half_rho2, W) + dot(V, gradient_fd(0.5 * dot(W, du), grid))
    return np.where(region, lhs - rhs, 0.0)


def budget_cauchy_schwarz_margin(u_t: np.ndarray, W: np.ndarray, grad_sq: np.ndarray, Gf: GeodesicField) -> float:
    """min of 1/2 u_t^2 + 1/2 |grad rho|_g^2 |grad u|_g^2 - |u_t a^ij rho_j u_i| on valid nodes."""
    if not Gf.valid.any():
        return 0.0
    rho_sq = quadratic_form(Gf.metric.A, Gf.grad_rho)
    margin = 0.5 * u_t**2 + 0.5 * rho_sq * grad_sq - np.abs(u_t * dot(W, Gf.grad_rho))
    return float(margin[Gf.valid].min())


def _spline_at(spline: CubicSpline, tau: np.ndarray, nu: int = 0) -> np.ndarray:
    """Evaluate a node-wise spline (values of shape (nt, N)) at one time per node."""
    knots = spline.x
    k = np.clip(np.searchsorted(knots, tau) - 1, 0, len(knots) - 2)
    s = tau - knots[k]
    nodes = np.arange(tau.size)
    coeff = spline.c[:, k, nodes]  # (4, N), highest power first
    if nu == 0:
        return ((coeff[0] * s + coeff[1]) * s + coeff[2]) * s + coeff[3]
    return (3.0 * coeff[0] * s + 2.0 * coeff[1]) * s + coeff[2]


def mantle_parameterization_residual(
    u: np.ndarray,
    times: Sequence[float],
    Gf: GeodesicField,
    region: Optional[np.ndarray] = None,
) -> np.ndarray:
    """a^ij rho_j v_i - (-u_t + a^ij rho_j u_i) at (-rho(y), y), with v(y) = u(-rho(y), y).

    ``u`` holds space-time samples at cone ``times``; each node is
    interpolated in time by a cubic spline.
    """
    M = Gf.metric
    grid = M.grid
    times = np.asarray(times, dtype=float)
    u = np.asarray(u, dtype=float)
    tau = -Gf.rho
    covered = (tau >= times.min()) & (tau <= times.max())
    region = Gf.valid & grid.interior(IDENTITY_DEPTH) if region is None else _check_region(grid, region)
    region = region & covered

    flat_tau = tau.ravel()
    spline = CubicSpline(times, u.reshape(len(times), -1), axis=0)
    v = _spline_at(spline, flat_tau).reshape(grid.shape)
    u_t = _spline_at(spline, flat_tau, nu=1).reshape(grid.shape)
    du_levels = np.stack([gradient_fd(level, grid) for level in u])  # (nt, 3, *grid)
    du = np.stack(
        [
            _spline_at(CubicSpline(times, du_levels[:, k].reshape(len(times), -1), axis=0), flat_tau)
            for k in range(3)
        ]
    ).reshape(3, *grid.shape)

    lhs = dot(Gf.grad_g_rho, gradient_fd(v, grid))
    rhs = -u_t + dot(Gf.grad_g_rho, du)
    return np.where(region, lhs - rhs, 0.0)


@dataclass
class BudgetReport:
    """Terms of the cone budget against |S| with one fitted constant."""

    rows: List[Tuple[float, ...]]
    constant: float
    epsilon: float
    violations: int
    decay_ratio: float

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.decay_ratio <= 0.1

    def column(self, name: str) -> np.ndarray:
        index = BUDGET_COLUMNS.index(name)
        return np.asarray([row[index] for row in self.rows])


def cone_budget(ledger, epsilon: Optional[float] = None) -> BudgetReport:
    """Evaluate every term bounding int_{D(S)} u^6 / 6 for each recorded S < 0.

    Fluxes and the bulk integral run from S to the last recorded time. The
    constant is the largest lhs/rhs ratio over the larger-|S| half of the
    samples; every sample must then satisfy lhs <= C rhs + epsilon.
    """
    if not len(ledger):
        raise ValueError(ERROR_CODES["INSUFFICIENT_HISTORY"])
    times = ledger.times
    t_last = float(times[-1])
    t0 = ledger.cone.t0
    E0 = ledger.E0
    epsilon = DEFAULT_QUADRATURE_TOL * E0 if epsilon is None else epsilon

    rows = []
    for t in times[:-1]:
        S = float(t - t0)
        if S >= 0.0:
            continue
        size = abs(S)
        lhs = ledger.value("l6_mass", t)
        flux = max(ledger.flux_from_identity(t, t_last), 0.0)
        rows.append(
            (
                S,
                lhs,
                size * flux,
                (size + S * S) * np.cbrt(flux),
                S * S * np.cbrt(E0),
                ledger.bulk_integral(t, t_last) / size,
                S * S * E0,
            )
        )
    if not rows:
        raise ValueError("No samples before the apex")
    rows.sort(key=lambda row: abs(row[0]))

    lhs = np.asarray([row[1] for row in rows])
    rhs = np.asarray([sum(row[2:]) for row in rows])
    sizes = np.abs([row[0] for row in rows])
    far = sizes >= np.median(sizes)
    ratios = np.where(rhs > 0.0, lhs / np.where(rhs > 0.0, rhs, 1.0), 0.0)
    constant = float(np.max(ratios[far])) if far.any() else 0.0
    violations = int(np.count_nonzero(lhs > constant * rhs + epsilon))
    peak = float(lhs.max())
    decay_ratio = float(lhs[0] / peak) if peak > 0.0 else 0.0
    _LOGGER.info(
        "Cone budget over %d samples: C=%.4g, %d violations, final/max=%.3g",
        len(rows), constant, violations, decay_ratio,
    )
    return BudgetReport(rows, constant, epsilon, violations, decay_ratio)
