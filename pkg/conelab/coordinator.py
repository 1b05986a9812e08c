"""Run coordinator: drives the time loop and feeds snapshots to diagnostic listeners."""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from tqdm import tqdm

from .const import DEFAULT_DIAGNOSTIC_CADENCE, DEFAULT_FINITE_SPEED_CADENCE
from .energy import SliceFields
from .errors import NumericalAbort
from .fields import write_grid_dump
from .metric import MetricField
from .wave import FiniteSpeedMonitor, InitialData, LeapfrogSolver, WaveState, with_velocity

_LOGGER = logging.getLogger(__name__)


@dataclass(eq=False)
class Snapshot:
    """A state with u_t attached; derived slice fields are computed on first use."""

    state: WaveState
    metric: MetricField
    final: bool = False

    @property
    def t(self) -> float:
        return self.state.t

    @property
    def step(self) -> int:
        return self.state.step

    @cached_property
    def fields(self) -> SliceFields:
        return SliceFields.from_state(self.state, self.metric)


class RunListener(ABC):
    """Receives snapshots every ``cadence`` steps and at the final step."""

    cadence: int = DEFAULT_DIAGNOSTIC_CADENCE

    def wants(self, step: int, final: bool) -> bool:
        return final or step % self.cadence == 0

    def on_start(self, coordinator: "RunCoordinator") -> None:
        """Called once before the first snapshot."""

    @abstractmethod
    def on_snapshot(self, snapshot: Snapshot) -> None:
        """Consume one snapshot."""

    def on_finish(self, coordinator: "RunCoordinator") -> None:
        """Called once after the last snapshot."""


class FiniteSpeedListener(RunListener):
    """Runs the finite-speed monitor on a sparse cadence."""

    def __init__(self, data: InitialData, M: MetricField, cadence: int = DEFAULT_FINITE_SPEED_CADENCE):
        self.monitor = FiniteSpeedMonitor(data, M)
        self.cadence = cadence
        self.checked = 0

    def on_snapshot(self, snapshot: Snapshot) -> None:
        self.monitor.check(snapshot.state)
        self.checked += 1

    @property
    def passed(self) -> bool:
        return not self.monitor.violations


class CheckpointWriter(RunListener):
    """Writes u every ``cadence`` steps in the grid-dump format."""

    def __init__(self, directory: Path | str, cadence: int):
        self.directory = Path(directory)
        self.cadence = max(int(cadence), 1)
        self.written: List[Path] = []

    def on_snapshot(self, snapshot: Snapshot) -> None:
        path = self.directory / f"u_{snapshot.step:06d}.txt"
        self.written.append(write_grid_dump(path, snapshot.metric.grid, snapshot.state.u_curr))


class RunCoordinator:
    """Advance a solver over a window and stream snapshots to listeners.

    Only the three levels needed for u_t are held at any time.
    """

    def __init__(
        self,
        solver: LeapfrogSolver,
        data: InitialData,
        dt: float,
        n_steps: int,
        listeners: Sequence[RunListener] = (),
        t_start: float = 0.0,
        progress: bool = False,
        name: str = "run",
    ) -> None:
        if n_steps < 1:
            raise ValueError("A run needs at least one step")
        self.solver = solver
        self.data = data
        self.dt = dt
        self.n_steps = n_steps
        self.listeners = list(listeners)
        self.t_start = t_start
        self.progress = progress
        self.name = name
        self.final_state: Optional[WaveState] = None
        self.snapshots_sent = 0

    @property
    def metric(self) -> MetricField:
        return self.solver.metric

    @property
    def t_end(self) -> float:
        return self.t_start + self.n_steps * self.dt

    def _dispatch(self, snapshot: Snapshot) -> None:
        sent = False
        for listener in self.listeners:
            if listener.wants(snapshot.step, snapshot.final):
                listener.on_snapshot(snapshot)
                sent = True
        if sent:
            self.snapshots_sent += 1

    def run(self) -> Dict[str, Any]:
        """Execute the run; returns a small summary."""
        _LOGGER.info(
            "Starting %s: %d steps of dt=%.6g from t=%.6g", self.name, self.n_steps, self.dt, self.t_start
        )
        for listener in self.listeners:
            listener.on_start(self)

        current = self.solver.start(self.data, self.dt, self.t_start)
        following = self.solver.advance(current)
        with tqdm(total=self.n_steps, desc=self.name, disable=not self.progress, leave=False) as bar:
            for index in range(self.n_steps + 1):
                final = index == self.n_steps
                self._dispatch(Snapshot(with_velocity(current, following), self.metric, final))
                if final:
                    break
                try:
                    current, following = following, self.solver.advance(following)
                except NumericalAbort:
                    _LOGGER.error("%s aborted after %d steps", self.name, index + 1)
                    raise
                bar.update(1)

        self.final_state = current
        for listener in self.listeners:
            listener.on_finish(self)
        _LOGGER.info("Finished %s at t=%.6g (%d snapshots)", self.name, current.t, self.snapshots_sent)
        return {
            "name": self.name,
            "steps": self.n_steps,
            "t_end": current.t,
            "snapshots": self.snapshots_sent,
        }
