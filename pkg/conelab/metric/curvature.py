"""Christoffel symbols, Riemann tensor and sampled sectional curvatures.

Everything here differentiates g (not A) with second-order central
differences. The metric is defined on every node, the obstacle included,
so plain ``np.gradient`` is used instead of the mask-aware stencils.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ..const import ERROR_CODES
from ..errors import MaskedNodeError
from . import MetricField

_LOGGER = logging.getLogger(__name__)

STENCIL_MARGIN = 2
COORDINATE_PLANES = (
    ("e1e2", (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    ("e1e3", (1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    ("e2e3", (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
)


def _partials(values: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Stack of the three spatial partials of a tensor field (spatial axes last)."""
    axes = tuple(range(values.ndim - 3, values.ndim))
    parts = np.gradient(values, *spacing, axis=axes, edge_order=2)
    return np.stack(parts)


def christoffel_symbols(g: np.ndarray, A: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Gamma^k_ij = 1/2 a^kl (d_i g_jl + d_j g_il - d_l g_ij), indexed [k, i, j]."""
    dg = _partials(g, spacing)  # dg[m, a, b] = d_m g_ab
    lowered = (
        np.einsum("ijl...->lij...", dg)
        + np.einsum("jil...->lij...", dg)
        - dg
    )
    return 0.5 * np.einsum("kl...,lij...->kij...", A, lowered)


def riemann_tensor(gamma: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik."""
    dgamma = _partials(gamma, spacing)  # dgamma[i, l, j, k] = d_i Gamma^l_jk
    derivative = np.einsum("iljk...->lijk...", dgamma)
    R = derivative - np.swapaxes(derivative, 1, 2)
    quadratic = np.einsum("lim...,mjk...->lijk...", gamma, gamma)
    R += quadratic - np.swapaxes(quadratic, 1, 2)
    return R


def sectional_curvature(
    R_lower: np.ndarray, g: np.ndarray, X: np.ndarray, Y: np.ndarray
) -> np.ndarray:
    """kappa(X, Y) = R(X, Y, Y, X) / (|X|^2 |Y|^2 - <X, Y>^2) node-wise.

    ``R_lower[m, i, j, k] = g_ml R^l_ijk``.
    """
    numerator = np.einsum("mijk...,i,j,k,m->...", R_lower, X, Y, Y, X)
    gxx = np.einsum("ij...,i,j->...", g, X, X)
    gyy = np.einsum("ij...,i,j->...", g, Y, Y)
    gxy = np.einsum("ij...,i,j->...", g, X, Y)
    return numerator / (gxx * gyy - gxy * gxy)


@dataclass
class CurvatureReport:
    """Sampled sectional curvatures over a region."""

    nodes: np.ndarray
    planes: List[Tuple[str, np.ndarray, np.ndarray]]
    kappa: np.ndarray
    bound: float
    christoffel: np.ndarray = field(repr=False)
    riemann: np.ndarray = field(repr=False)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.kappa))) if self.kappa.size else 0.0

    def rows(self):
        """CSV rows (node, plane, kappa)."""
        for n, node in enumerate(self.nodes):
            label = "%d:%d:%d" % tuple(node)
            for p, (name, _, _) in enumerate(self.planes):
                yield label, name, float(self.kappa[n, p])


def _plane_list(random_planes: int, seed: int) -> List[Tuple[str, np.ndarray, np.ndarray]]:
    planes = [(name, np.array(X), np.array(Y)) for name, X, Y in COORDINATE_PLANES]
    rng = np.random.default_rng(seed)
    for index in range(random_planes):
        X, Y = rng.normal(size=3), rng.normal(size=3)
        planes.append((f"random{index}", X / np.linalg.norm(X), Y / np.linalg.norm(Y)))
    return planes


def curvature(
    M: MetricField,
    region: Optional[np.ndarray] = None,
    random_planes: int = 4,
    seed: int = 0,
) -> CurvatureReport:
    """Sectional curvatures of g on region nodes and the bound a = sqrt(max |kappa|).

    The region must keep a two-node stencil margin from the obstacle and the
    outer box.
    """
    grid = M.grid
    if region is None:
        region = grid.interior(STENCIL_MARGIN + 1)
    region = grid.check_scalar(region).astype(bool)
    if not region.any():
        raise ValueError(ERROR_CODES["EMPTY_REGION"])
    if grid.has_obstacle:
        near = ndimage.binary_dilation(region, iterations=STENCIL_MARGIN) & ~grid.mask
        if near.any():
            raise MaskedNodeError(np.argwhere(near)[0])

    index = np.argwhere(region)
    lo = index.min(axis=0) - STENCIL_MARGIN
    hi = index.max(axis=0) + STENCIL_MARGIN + 1
    if np.any(lo < 0) or np.any(hi > np.asarray(grid.shape)):
        raise ValueError("Region lies within two nodes of the grid edge; stencil does not fit")
    crop = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
    tensor_crop = (slice(None), slice(None)) + crop

    g = M.g[tensor_crop]
    gamma = christoffel_symbols(g, M.A[tensor_crop], grid.spacing)
    R = riemann_tensor(gamma, grid.spacing)
    R_lower = np.einsum("ml...,lijk...->mijk...", g, R)

    local = region[crop]
    planes = _plane_list(random_planes, seed)
    kappa = np.stack(
        [sectional_curvature(R_lower, g, X, Y)[local] for _, X, Y in planes], axis=-1
    )
    bound = float(np.sqrt(np.max(np.abs(kappa))))
    _LOGGER.info(
        "Curvature over %d nodes and %d planes: max|kappa|=%.4g, a=%.4g",
        len(index), len(planes), bound**2, bound,
    )
    return CurvatureReport(
        nodes=np.argwhere(local) + lo,
        planes=planes,
        kappa=kappa,
        bound=bound,
        christoffel=gamma,
        riemann=R,
    )
