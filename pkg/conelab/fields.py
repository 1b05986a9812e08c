"""Cartesian grid container, finite-difference stencils and reductions.

Fields are plain numpy arrays laid out on the grid's node lattice:

* scalar fields have shape ``grid.shape``
* vector fields have shape ``(3, *grid.shape)``
* matrix fields have shape ``(3, 3, *grid.shape)``

All reductions go through :func:`pairwise_sum`, a fixed-topology tree over
every node of the grid in x-fastest order, so results do not depend on the
number of threads or on how the region is shaped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import logging
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import GridMismatchError

_LOGGER = logging.getLogger(__name__)

ScalarField = np.ndarray
VectorField = np.ndarray
MatrixField = np.ndarray

_NEIGHBOR_OFFSETS = (
    (1, 0, 0), (-1, 0, 0),
    (0, 1, 0), (0, -1, 0),
    (0, 0, 1), (0, 0, -1),
)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform node lattice with a staircase obstacle mask.

    ``mask`` is True on nodes of the fluid domain. ``boundary`` marks nodes of
    the domain with at least one masked 6-neighbour; together with the outer
    box faces (``edge``) they carry the homogeneous Dirichlet condition.
    """

    n_cells: Tuple[int, int, int]
    spacing: Tuple[float, float, float]
    origin: Tuple[float, float, float]
    mask: np.ndarray
    obstacle: Any = field(default=None, repr=False)

    def __post_init__(self) -> None:
        n_cells = tuple(int(n) for n in self.n_cells)
        spacing = tuple(float(h) for h in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(n_cells) != 3 or any(n < 2 for n in n_cells):
            raise ValueError(f"n_cells must be three integers >= 2, got {self.n_cells}")
        if len(spacing) != 3 or any(not np.isfinite(h) or h <= 0.0 for h in spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing}")
        mask = np.asarray(self.mask, dtype=bool)
        shape = tuple(n + 1 for n in n_cells)
        if mask.shape != shape:
            raise GridMismatchError(shape, mask.shape)
        if not mask.any():
            raise ValueError("Mask selects no fluid nodes")
        mask.setflags(write=False)
        object.__setattr__(self, "n_cells", n_cells)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "mask", mask)

        if not mask.all():
            _, components = ndimage.label(mask)
            if components != 1:
                raise ValueError(
                    f"Fluid domain must be connected, found {components} components"
                )

    @classmethod
    def box(
        cls,
        n_cells: Sequence[int] | int,
        lower: Sequence[float] | float,
        upper: Sequence[float] | float,
        obstacle: Any = None,
    ) -> "Grid":
        """Build a grid covering the box ``[lower, upper]``.

        ``obstacle`` is any object with an ``sdf(x, y, z)`` method that is
        positive in the fluid domain.
        """
        n_cells = np.broadcast_to(np.asarray(n_cells, dtype=int), (3,))
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (3,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (3,))
        if np.any(upper <= lower):
            raise ValueError("upper corner must exceed lower corner on every axis")
        spacing = (upper - lower) / n_cells
        shape = tuple(int(n) + 1 for n in n_cells)
        if obstacle is None:
            mask = np.ones(shape, dtype=bool)
        else:
            axes = [lower[k] + spacing[k] * np.arange(shape[k]) for k in range(3)]
            X, Y, Z = np.meshgrid(*axes, indexing="ij")
            mask = np.asarray(obstacle.sdf(X, Y, Z)) > 0.0
        return cls(tuple(n_cells), tuple(spacing), tuple(lower), mask, obstacle)

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Number of nodes per axis."""
        return tuple(n + 1 for n in self.n_cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.spacing
        return hx * hy * hz

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def h_max(self) -> float:
        return max(self.spacing)

    @property
    def upper(self) -> Tuple[float, float, float]:
        return tuple(o + n * h for o, n, h in zip(self.origin, self.n_cells, self.spacing))

    @property
    def has_obstacle(self) -> bool:
        return not bool(self.mask.all())

    @cached_property
    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            self.origin[k] + self.spacing[k] * np.arange(self.shape[k]) for k in range(3)
        )

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Node coordinates as three arrays of ``grid.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def edge(self) -> np.ndarray:
        """Nodes on the faces of the outer box."""
        edge = np.zeros(self.shape, dtype=bool)
        edge[0, :, :] = edge[-1, :, :] = True
        edge[:, 0, :] = edge[:, -1, :] = True
        edge[:, :, 0] = edge[:, :, -1] = True
        return edge

    @cached_property
    def boundary(self) -> np.ndarray:
        """Fluid nodes adjacent to at least one masked node."""
        masked = ~self.mask
        touching = np.zeros(self.shape, dtype=bool)
        for axis in range(3):
            touching |= _shift(masked, axis, 1, fill=False)
            touching |= _shift(masked, axis, -1, fill=False)
        return self.mask & touching

    @cached_property
    def dirichlet(self) -> np.ndarray:
        """Nodes where the solution is pinned to zero."""
        return ~self.mask | self.boundary | self.edge

    def interior(self, depth: int = 1) -> np.ndarray:
        """Fluid nodes at least ``depth`` cells away from the box and the obstacle."""
        keep = self.mask.copy()
        if depth <= 0:
            return keep
        keep[:depth, :, :] = keep[-depth:, :, :] = False
        keep[:, :depth, :] = keep[:, -depth:, :] = False
        keep[:, :, :depth] = keep[:, :, -depth:] = False
        if self.has_obstacle:
            grown = ndimage.binary_dilation(~self.mask, iterations=depth)
            keep &= ~grown
        return keep

    def contains(self, point: Sequence[float]) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= np.asarray(self.origin)) and np.all(point <= np.asarray(self.upper)))

    def nearest_node(self, point: Sequence[float]) -> Tuple[int, int, int]:
        if not self.contains(point):
            raise ValueError(f"Point {tuple(point)} lies outside the grid")
        index = np.rint((np.asarray(point, dtype=float) - self.origin) / self.spacing).astype(int)
        index = np.clip(index, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in index)

    def node_position(self, index: Sequence[int]) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(index, dtype=float) * np.asarray(self.spacing)

    def distance_to_edge(self, point: Sequence[float]) -> float:
        point = np.asarray(point, dtype=float)
        return float(
            min(np.min(point - np.asarray(self.origin)), np.min(np.asarray(self.upper) - point))
        )

    def check_scalar(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w)
        if w.shape != self.shape:
            raise GridMismatchError(self.shape, w.shape)
        return w

    def check_vector(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V)
        if V.shape != (3, *self.shape):
            raise GridMismatchError((3, *self.shape), V.shape)
        return V

    def check_matrix(self, A: np.ndarray) -> np.ndarray:
        A = np.asarray(A)
        if A.shape != (3, 3, *self.shape):
            raise GridMismatchError((3, 3, *self.shape), A.shape)
        return A


def _shift(a: np.ndarray, axis: int, k: int, fill: Any = 0) -> np.ndarray:
    """Return ``b`` with ``b[i] = a[i + k]`` along ``axis``; out-of-range is ``fill``."""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    if abs(k) >= n:
        return out
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if k > 0:
        src[axis] = slice(k, None)
        dst[axis] = slice(None, n - k)
    else:
        src[axis] = slice(None, n + k)
        dst[axis] = slice(-k, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def partial_fd(w: ScalarField, grid: Grid, axis: int) -> ScalarField:
    """Second-order derivative of ``w`` along one axis.

    Central differences in the interior, one-sided second-order differences
    at the box faces and next to masked nodes. Masked nodes get zero.
    """
    h = grid.spacing[axis]
    d = np.gradient(w, h, axis=axis, edge_order=2)
    if not grid.has_obstacle:
        return d

    masked = ~grid.mask
    ahead_blocked = _shift(masked, axis, 1, fill=False) & grid.mask
    behind_blocked = _shift(masked, axis, -1, fill=False) & grid.mask

    w1p, w2p = _shift(w, axis, 1), _shift(w, axis, 2)
    w1m, w2m = _shift(w, axis, -1), _shift(w, axis, -2)
    forward = (-3.0 * w + 4.0 * w1p - w2p) / (2.0 * h)
    backward = (3.0 * w - 4.0 * w1m + w2m) / (2.0 * h)

    ok_forward = ~_shift(masked, axis, 1, fill=True) & ~_shift(masked, axis, 2, fill=True)
    ok_backward = ~_shift(masked, axis, -1, fill=True) & ~_shift(masked, axis, -2, fill=True)

    only_behind = behind_blocked & ~ahead_blocked
    only_ahead = ahead_blocked & ~behind_blocked
    d = np.where(only_behind & ok_forward, forward, d)
    d = np.where(only_ahead & ok_backward, backward, d)
    # squeezed between masked nodes along this axis
    d = np.where(ahead_blocked & behind_blocked, 0.0, d)
    return np.where(grid.mask, d, 0.0)


def gradient_fd(w: ScalarField, grid: Grid) -> VectorField:
    """Gradient of a scalar field, O(h^2) for smooth ``w``."""
    w = grid.check_scalar(w)
    return np.stack([partial_fd(w, grid, axis) for axis in range(3)])


def divergence_fd(V: VectorField, grid: Grid) -> ScalarField:
    """Divergence of a vector field with the :func:`partial_fd` differences.

    This is the collocated O(h^2) divergence used by the diagnostics. The wave
    operator is assembled by :func:`flux_divergence` instead.
    """
    V = grid.check_vector(V)
    return partial_fd(V[0], grid, 0) + partial_fd(V[1], grid, 1) + partial_fd(V[2], grid, 2)


_SIDES = (1, -1)


def one_sided_fd(w: ScalarField, grid: Grid, axis: int, side: int) -> ScalarField:
    """Forward (``side=1``) or backward (``side=-1``) difference; zero beyond the box."""
    h = grid.spacing[axis]
    if side > 0:
        return (_shift(w, axis, 1) - w) / h
    return (w - _shift(w, axis, -1)) / h


def _one_sided_transpose(v: ScalarField, grid: Grid, axis: int, side: int) -> ScalarField:
    """Transpose of :func:`one_sided_fd` under the plain node sum."""
    h = grid.spacing[axis]
    if side > 0:
        return (_shift(v, axis, -1) - v) / h
    return (v - _shift(v, axis, 1)) / h


def flux_divergence(u: ScalarField, A: MatrixField, grid: Grid) -> ScalarField:
    """Compact flux-form ``div(A grad u)``.

    Diagonal terms use face coefficients ``A_{i+1/2} = (A_i + A_{i+1}) / 2``::

        (A_{i+1/2} (u_{i+1} - u_i) - A_{i-1/2} (u_i - u_{i-1})) / h^2

    and the mixed terms average the four one-sided corner differences. The
    result equals ``-1/8 sum_s G_s^T A G_s`` over the eight one-sided
    gradients ``G_s``, so on fields that vanish at the Dirichlet nodes the
    operator is symmetric and negative semidefinite and only couples a node to
    its 3x3x3 neighbourhood.
    """
    u = grid.check_scalar(u)
    A = grid.check_matrix(A)
    diffs = {(axis, side): one_sided_fd(u, grid, axis, side) for axis in range(3) for side in _SIDES}
    out = np.zeros(grid.shape)
    for a in range(3):
        mixed = sum(0.25 * A[a, b] * (diffs[b, 1] + diffs[b, -1]) for b in range(3) if b != a)
        for side in _SIDES:
            flux = 0.5 * A[a, a] * diffs[a, side] + mixed
            out -= _one_sided_transpose(flux, grid, a, side)
    return out


def compact_gradient_energy(u: ScalarField, A: MatrixField, grid: Grid) -> ScalarField:
    """Node density of ``-<u, flux_divergence(u)>``, the stiffness paired with the stepper.

    ``1/2 A^aa ((D+_a u)^2 + (D-_a u)^2) + A^ab D0_a u D0_b u`` summed over axes,
    which is ``a^ij u_i u_j`` to O(h^2) for smooth ``u``. The node sum matches
    the operator exactly when ``u`` vanishes on the Dirichlet nodes.
    """
    u = grid.check_scalar(u)
    A = grid.check_matrix(A)
    plus = [one_sided_fd(u, grid, axis, 1) for axis in range(3)]
    minus = [one_sided_fd(u, grid, axis, -1) for axis in range(3)]
    centred = [0.5 * (plus[axis] + minus[axis]) for axis in range(3)]
    density = np.zeros(grid.shape)
    for a in range(3):
        density += 0.5 * A[a, a] * (plus[a] ** 2 + minus[a] ** 2)
        for b in range(3):
            if b != a:
                density += A[a, b] * centred[a] * centred[b]
    return density


def hessian_fd(w: ScalarField, grid: Grid) -> MatrixField:
    """Symmetrised matrix of second derivatives of ``w``."""
    dw = gradient_fd(w, grid)
    H = np.stack([gradient_fd(dw[k], grid) for k in range(3)])
    return 0.5 * (H + np.swapaxes(H, 0, 1))


def matvec(A: MatrixField, V: VectorField) -> VectorField:
    """Node-wise matrix-vector product."""
    return np.einsum("ij...,j...->i...", A, V)


def dot(U: VectorField, V: VectorField) -> ScalarField:
    return np.einsum("i...,i...->...", U, V)


def quadratic_form(A: MatrixField, U: VectorField, V: Optional[VectorField] = None) -> ScalarField:
    """Node-wise ``U^T A V`` (``V`` defaults to ``U``)."""
    if V is None:
        V = U
    return np.einsum("i...,ij...,j...->...", U, A, V)


def node_matrices(A: MatrixField) -> np.ndarray:
    """View a matrix field as a stack of 3x3 matrices, shape ``(*grid, 3, 3)``."""
    return np.moveaxis(np.moveaxis(A, 0, -1), 0, -1)


def field_matrices(M: np.ndarray) -> MatrixField:
    """Inverse of :func:`node_matrices`."""
    return np.moveaxis(np.moveaxis(M, -1, 0), -1, 0)


def pairwise_sum(values: np.ndarray) -> float:
    """Sum with a fixed binary-tree topology.

    The input is zero-padded to a power of two and halved level by level, so
    the association order depends only on the input length.
    """
    v = np.ascontiguousarray(values, dtype=np.float64).ravel(order="K")
    if v.size == 0:
        return 0.0
    n = 1 << (v.size - 1).bit_length()
    buf = np.zeros(n, dtype=np.float64)
    buf[: v.size] = v
    while buf.size > 1:
        buf = buf[0::2] + buf[1::2]
    return float(buf[0])


def integrate(w: ScalarField, grid: Grid, region: Optional[np.ndarray] = None) -> float:
    """Node quadrature ``sum w * cell_volume`` over ``region``.

    The sum runs over the whole lattice in x-fastest order with nodes outside
    the region contributing zero. Nodes outside the fluid domain are dropped.
    An empty region integrates to zero.
    """
    w = grid.check_scalar(np.asarray(w, dtype=np.float64))
    keep = grid.mask if region is None else (grid.check_scalar(region).astype(bool) & grid.mask)
    if not keep.any():
        return 0.0
    values = np.where(keep, w, 0.0).ravel(order="F")
    return pairwise_sum(values) * grid.cell_volume


def box_boundary_flux(V: VectorField, grid: Grid) -> float:
    """Outward flux of ``V`` through the outer box faces (trapezoid faces)."""
    V = grid.check_vector(V)
    total = 0.0
    for axis in range(3):
        others = [k for k in range(3) if k != axis]
        area = grid.spacing[others[0]] * grid.spacing[others[1]]
        for side, sign in ((0, -1.0), (-1, 1.0)):
            face = np.take(V[axis], side, axis=axis)
            weights = np.ones_like(face)
            weights[0, :] *= 0.5
            weights[-1, :] *= 0.5
            weights[:, 0] *= 0.5
            weights[:, -1] *= 0.5
            total += sign * area * pairwise_sum((face * weights).ravel(order="F"))
    return total


def smooth_transition(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0.0, np.exp(-1.0 / np.where(s > 0.0, s, 1.0)), 0.0)
        b = np.where(s < 1.0, np.exp(-1.0 / np.where(s < 1.0, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def compact_bump(r: np.ndarray, radius: float) -> np.ndarray:
    """C-infinity bump equal to 1 at r = 0 and vanishing for r >= radius."""
    s = np.asarray(r, dtype=float) / radius
    inside = s < 1.0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        value = np.exp(1.0 - 1.0 / np.where(inside, 1.0 - s * s, 1.0))
    return np.where(inside, value, 0.0)


def write_grid_dump(path: Path | str, grid: Grid, w: ScalarField) -> Path:
    """Write a scalar field in the plain-text grid dump format."""
    w = grid.check_scalar(w)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nx, ny, nz = grid.shape
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"dims {nx} {ny} {nz}\n")
        handle.write("spacing {:.17g} {:.17g} {:.17g}\n".format(*grid.spacing))
        handle.write("origin {:.17g} {:.17g} {:.17g}\n".format(*grid.origin))
        np.savetxt(handle, np.asarray(w, dtype=float).ravel(order="F"), fmt="%.17g")
    _LOGGER.debug("Wrote grid dump %s", path)
    return path


def read_grid_dump(path: Path | str) -> Tuple[Tuple[int, int, int], Tuple[float, ...], Tuple[float, ...], np.ndarray]:
    """Read a grid dump back as ``(dims, spacing, origin, values)``."""
    with open(path, "r", encoding="utf-8") as handle:
        header = [handle.readline().split() for _ in range(3)]
        if [row[0] for row in header] != ["dims", "spacing", "origin"]:
            raise ValueError(f"{path} is not a grid dump")
        dims = tuple(int(v) for v in header[0][1:])
        spacing = tuple(float(v) for v in header[1][1:])
        origin = tuple(float(v) for v in header[2][1:])
        values = np.loadtxt(handle, dtype=float, ndmin=1)
    if values.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} values, found {values.size}")
    return dims, spacing, origin, values.reshape(dims, order="F")
