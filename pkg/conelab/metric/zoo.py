"""Built-in metric models."""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
import voluptuous as vol

from ..fields import smooth_transition
from . import MetricModel

_LOGGER = logging.getLogger(__name__)

_POSITIVE = vol.All(vol.Coerce(float), vol.Range(min=0.0, min_included=False))
_POINT = vol.All(vol.ExactSequence([vol.Coerce(float)] * 3), vol.Coerce(tuple))

CUTOFF_SCHEMA = {
    vol.Optional("support_radius", default=None): vol.Any(None, _POSITIVE),
    vol.Optional("center", default=(0.0, 0.0, 0.0)): _POINT,
}


def _identity_like(shape) -> np.ndarray:
    A = np.zeros((3, 3, *shape))
    for k in range(3):
        A[k, k] = 1.0
    return A


def perturbation_cutoff(
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    support_radius: Optional[float],
    center: Tuple[float, float, float],
) -> np.ndarray:
    """Smooth cutoff equal to 1 inside 0.7 R and 0 outside R (1 everywhere when R is None)."""
    if support_radius is None:
        return np.ones_like(x)
    r = np.sqrt((x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2)
    inner = 0.7 * support_radius
    return 1.0 - smooth_transition((r - inner) / (support_radius - inner))


class IdentityMetric(MetricModel):
    """Euclidean space."""

    metric_id = "identity"

    @property
    def name(self) -> str:
        return "Identity"

    @property
    def description(self) -> str:
        return "Flat Euclidean metric, A = I"

    @property
    def is_flat(self) -> bool:
        return True

    def coefficients(self, x, y, z):
        return _identity_like(np.shape(x))


class ConstantDiagonalMetric(MetricModel):
    """Constant diagonal coefficients; flat but anisotropic."""

    metric_id = "constant_diagonal"
    PARAMETER_SCHEMA = vol.Schema(
        {
            vol.Optional("d1", default=1.0): _POSITIVE,
            vol.Optional("d2", default=1.0): _POSITIVE,
            vol.Optional("d3", default=1.0): _POSITIVE,
        }
    )

    @property
    def name(self) -> str:
        return "Constant diagonal"

    @property
    def description(self) -> str:
        return "A = diag(d1, d2, d3), constant in space"

    @property
    def is_flat(self) -> bool:
        return True

    def coefficients(self, x, y, z):
        A = np.zeros((3, 3, *np.shape(x)))
        for k, key in enumerate(("d1", "d2", "d3")):
            A[k, k] = self.parameters[key]
        return A


class ScalarFactorMetric(MetricModel):
    """Isotropic coefficients (1 + eps sin(k x1)) I."""

    metric_id = "scalar_factor"
    PARAMETER_SCHEMA = vol.Schema(
        {
            vol.Optional("amplitude", default=0.2): vol.All(vol.Coerce(float), vol.Range(min=0.0, max=0.9)),
            vol.Optional("wavenumber", default=1.0): vol.Coerce(float),
            **CUTOFF_SCHEMA,
        }
    )

    @property
    def name(self) -> str:
        return "Scalar factor"

    @property
    def description(self) -> str:
        return "A = (1 + eps sin(k x1)) I"

    def coefficients(self, x, y, z):
        p = self.parameters
        chi = perturbation_cutoff(x, y, z, p["support_radius"], p["center"])
        factor = 1.0 + chi * p["amplitude"] * np.sin(p["wavenumber"] * x)
        A = _identity_like(np.shape(x))
        return A * factor


class ConformalMetric(MetricModel):
    """Conformally flat metric g = exp(2 phi) delta, so A = exp(-2 phi) I.

    phi = eps sin(k x) sin(k y) sin(k z), optionally multiplied by a smooth
    cutoff so that the far field is exactly Euclidean.
    """

    metric_id = "conformal"
    PARAMETER_SCHEMA = vol.Schema(
        {
            vol.Optional("amplitude", default=0.1): vol.Coerce(float),
            vol.Optional("wavenumber", default=1.0): vol.Coerce(float),
            **CUTOFF_SCHEMA,
        }
    )

    @property
    def name(self) -> str:
        return "Conformal"

    @property
    def description(self) -> str:
        return "g = exp(2 phi) delta with phi = eps sin sin sin (curved, isotropic)"

    def potential(self, x, y, z) -> np.ndarray:
        p = self.parameters
        k = p["wavenumber"]
        chi = perturbation_cutoff(x, y, z, p["support_radius"], p["center"])
        return chi * p["amplitude"] * np.sin(k * x) * np.sin(k * y) * np.sin(k * z)

    def coefficients(self, x, y, z):
        factor = np.exp(-2.0 * self.potential(x, y, z))
        return _identity_like(np.shape(x)) * factor


class WavyMetric(MetricModel):
    """Rotated anisotropic metric A = R^T diag(1, 1 + eps sin, 1 + eps cos) R.

    R(x) rotates about the x3 axis by beta sin(k (x1 + x2 + x3)).
    """

    metric_id = "wavy"
    PARAMETER_SCHEMA = vol.Schema(
        {
            vol.Optional("amplitude", default=0.3): vol.All(vol.Coerce(float), vol.Range(min=0.0, max=0.9)),
            vol.Optional("wavenumber", default=2.0): vol.Coerce(float),
            vol.Optional("rotation", default=0.5): vol.Coerce(float),
            **CUTOFF_SCHEMA,
        }
    )

    @property
    def name(self) -> str:
        return "Wavy anisotropic"

    @property
    def description(self) -> str:
        return "A = R(x)^T diag(1, 1 + eps sin, 1 + eps cos) R(x) (curved, anisotropic)"

    def coefficients(self, x, y, z):
        p = self.parameters
        k, eps = p["wavenumber"], p["amplitude"]
        angle = p["rotation"] * np.sin(k * (x + y + z))
        c, s = np.cos(angle), np.sin(angle)
        zero, one = np.zeros_like(x), np.ones_like(x)
        R = np.array([[c, -s, zero], [s, c, zero], [zero, zero, one]])
        D = np.zeros((3, 3, *np.shape(x)))
        D[0, 0] = 1.0
        D[1, 1] = 1.0 + eps * np.sin(k * x)
        D[2, 2] = 1.0 + eps * np.cos(k * y)
        A = np.einsum("ki...,kl...,lj...->ij...", R, D, R)
        chi = perturbation_cutoff(x, y, z, p["support_radius"], p["center"])
        eye = _identity_like(np.shape(x))
        return eye + chi * (A - eye)


BUILTIN_METRICS = (
    IdentityMetric,
    ConstantDiagonalMetric,
    ScalarFactorMetric,
    ConformalMetric,
    WavyMetric,
)
