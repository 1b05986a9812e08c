"""Time series of total and cone energies, mantle fluxes and boundary traces."""
from __future__ import annotations

import logging
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .const import DEFAULT_ENERGY_DRIFT_TOL, LEDGER_COLUMNS, MANIFEST_COLUMNS
from .coordinator import RunListener, Snapshot
from .energy import (
    ConeSpec,
    boundary_trace_bound,
    cone_energy,
    flux_cauchy_schwarz_margin,
    l6_cone_mass,
    mantle_slice_rate,
    total_energy,
    trace_slice,
)
from .fields import integrate
from .wave import boundary_area_weights

_LOGGER = logging.getLogger(__name__)

_RECORDED = (
    "step",
    "t",
    "E_total",
    "E_cone",
    "flux_rate",
    "l6_mass",
    "trace_slice",
    "bulk",
    "cs_margin",
)


class ConeLedger(RunListener):
    """Per-snapshot record for one backward cone.

    ``flux_identity`` and ``flux_direct`` are accumulated from the first
    snapshot; ``trace_accum`` integrates the boundary trace in time.
    """

    def __init__(
        self,
        cone: ConeSpec,
        record_trace: bool = False,
        width: Optional[float] = None,
        cadence: int = 1,
    ) -> None:
        self.cone = cone
        self.record_trace = record_trace
        self.width = width
        self.cadence = cadence
        self._series: Dict[str, List[float]] = {key: [] for key in _RECORDED}
        self._trace_weights: Optional[np.ndarray] = None
        self.empty_slices = 0

    def on_start(self, coordinator) -> None:
        if self.record_trace:
            self._trace_weights = boundary_area_weights(self.cone.grid)

    def on_snapshot(self, snapshot: Snapshot) -> None:
        sf = snapshot.fields
        cone = self.cone
        M = cone.metric
        region = cone.region(sf.t)
        rate = mantle_slice_rate(sf, cone, self.width)
        if rate is None:
            self.empty_slices += 1
            _LOGGER.warning("Empty mantle shell at t=%.6g; flux slice skipped", sf.t)
        bulk_density = cone.geodesic.rho * (sf.u_t**2 + sf.grad_sq_g + sf.u**6)
        values = {
            "step": snapshot.step,
            "t": sf.t,
            "E_total": total_energy(sf, M),
            "E_cone": cone_energy(sf, cone),
            "flux_rate": np.nan if rate is None else rate,
            "l6_mass": l6_cone_mass(sf, cone),
            "trace_slice": (
                trace_slice(snapshot.state, cone.grid, self._trace_weights) if self.record_trace else 0.0
            ),
            "bulk": integrate(bulk_density, cone.grid, region),
            "cs_margin": flux_cauchy_schwarz_margin(sf, cone.geodesic, region),
        }
        for key, value in values.items():
            self._series[key].append(float(value))
        _LOGGER.debug("Ledger t=%.6g E=%.10g E_cone=%.10g", sf.t, values["E_total"], values["E_cone"])

    def __len__(self) -> int:
        return len(self._series["t"])

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self._series["t"])

    @property
    def E0(self) -> float:
        if not len(self):
            raise ValueError("Ledger is empty")
        return self._series["E_total"][0]

    def column(self, name: str) -> np.ndarray:
        """A recorded or derived column as an array."""
        if name in self._series:
            return np.asarray(self._series[name])
        derived = {
            "flux_identity": self._flux_identity_series,
            "flux_direct": self._flux_direct_series,
            "trace_accum": self._trace_accum_series,
        }
        if name not in derived:
            raise KeyError(name)
        return derived[name]()

    def index(self, t: float) -> int:
        times = self.times
        hits = np.flatnonzero(np.isclose(times, t, rtol=0.0, atol=1e-9 * max(1.0, abs(t))))
        if not len(hits):
            raise ValueError(f"Time {t:.9g} is not in the recorded series")
        return int(hits[0])

    def value(self, name: str, t: float) -> float:
        return float(self.column(name)[self.index(t)])

    def _flux_identity_series(self) -> np.ndarray:
        E = self.column("E_cone")
        return E[0] - E if len(E) else E

    def _cumulative(self, values: np.ndarray) -> np.ndarray:
        """Cumulative trapezoid over the finite samples, held constant across gaps."""
        times = self.times
        out = np.zeros(len(times))
        finite = np.isfinite(values)
        if finite.sum() < 2:
            return out
        partial = cumulative_trapezoid(values[finite], times[finite], initial=0.0)
        positions = np.cumsum(finite) - 1
        out[:] = np.where(positions >= 0, partial[np.clip(positions, 0, None)], 0.0)
        return out

    def _flux_direct_series(self) -> np.ndarray:
        return self._cumulative(self.column("flux_rate"))

    def _trace_accum_series(self) -> np.ndarray:
        return self._cumulative(self.column("trace_slice"))

    def flux_from_identity(self, s: float, t: float) -> float:
        if t < s:
            raise ValueError("flux_from_identity needs s <= t")
        return self.value("E_cone", s) - self.value("E_cone", t)

    def flux_direct(self, s: float, t: float) -> float:
        if t < s:
            raise ValueError("flux_direct needs s <= t")
        i, j = self.index(s), self.index(t)
        rates = self.column("flux_rate")[i : j + 1]
        times = self.times[i : j + 1]
        finite = np.isfinite(rates)
        if finite.sum() < 2:
            return 0.0
        return float(trapezoid(rates[finite], times[finite]))

    def bulk_integral(self, s: float, t: float) -> float:
        """int_s^t int_{D(tau)} rho (u_t^2 + |grad u|_g^2 + u^6) dx dtau."""
        i, j = self.index(s), self.index(t)
        if j <= i:
            return 0.0
        return float(trapezoid(self.column("bulk")[i : j + 1], self.times[i : j + 1]))

    def trace_bound(self) -> Tuple[float, float]:
        return boundary_trace_bound(self.times, self.column("trace_slice"), self.E0)

    def energy_drift(self) -> float:
        """max |E(t) - E0| / E0."""
        E = self.column("E_total")
        if self.E0 == 0.0:
            return float(np.max(np.abs(E)))
        return float(np.max(np.abs(E - self.E0)) / self.E0)

    def cone_increase(self) -> float:
        """Largest increase of E(u, D(t)) between adjacent samples (0 if nonincreasing)."""
        E = self.column("E_cone")
        if len(E) < 2:
            return 0.0
        return float(max(np.max(np.diff(E)), 0.0))

    def apex_view(self) -> Dict[str, np.ndarray]:
        """Columns with time shifted so the apex sits at the origin (S = t - t0 <= 0)."""
        view = {name: self.column(name) for name in LEDGER_COLUMNS if name != "t"}
        view["S"] = self.times - self.cone.t0
        return view

    def rows(self) -> Iterator[Tuple[Any, ...]]:
        """CSV rows in ``LEDGER_COLUMNS`` order."""
        columns = [self.column(name) for name in LEDGER_COLUMNS]
        for values in zip(*columns):
            yield tuple(float(v) for v in values)

    def manifest_rows(self) -> Iterator[Tuple[Any, ...]]:
        """Rows in ``MANIFEST_COLUMNS`` order."""
        keys = {"E": "E_total", "E_cone": "E_cone", "l6_mass": "l6_mass", "step": "step", "t": "t"}
        columns = [self.column(keys[name]) for name in MANIFEST_COLUMNS]
        for values in zip(*columns):
            yield (int(values[0]),) + tuple(float(v) for v in values[1:])

    def on_finish(self, coordinator) -> None:
        drift = self.energy_drift()
        level = logging.WARNING if drift > DEFAULT_ENERGY_DRIFT_TOL else logging.INFO
        _LOGGER.log(level, "Energy drift over the run: %.3e (E0=%.6g)", drift, self.E0)
