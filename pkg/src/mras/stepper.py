"""Semi-implicit time stepping for the coupled parameter/state updates.

One window advances the estimate pair by a parameter update followed by a
state solve; the parameter solve never looks at the new state, so the two
subsolves run sequentially and each stays symmetric positive definite.  The
assimilation window is exactly one time step: a window consumes only the
previous estimates, the two bracketing data snapshots, and the source at
the window end.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ErrorSeries
from .fem import CellField, NodalField, l2_norm
from .sparse import SolveReport

__all__ = ["TimeGrid", "MrasState", "StepInputs", "StepperError", "RunResult", "mras_step", "run"]

log = logging.getLogger(__name__)


class StepperError(RuntimeError):
    """Raised when a window cannot be completed; carries the step index."""

    def __init__(self, message: str, step_index: int):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant time points t_n = n·dt for n = 0..n_steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps!r}")

    @property
    def final_time(self) -> float:
        return self.dt * self.n_steps

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class MrasState:
    """Current estimate pair: P0 parameter, P1 state, and the step count."""

    param: CellField
    state: NodalField
    step_index: int = 0


@dataclass(frozen=True)
class StepInputs:
    """Data driving one window: snapshots at both ends, source and data rate."""

    data_prev: NodalField
    data_next: NodalField
    source_next: NodalField
    data_rate: NodalField


def mras_step(
    problem, state: MrasState, inputs: StepInputs, grid: TimeGrid, tol: float = 1e-10
) -> MrasState:
    """Advance the estimate pair by one window.

    The parameter update runs first on the old state; the state solve then
    uses the fresh parameter.  Solver non-convergence raises
    :class:`StepperError` with the failing step index.
    """
    new_param = problem.update_parameter(
        state.param,
        state.state,
        data_prev=inputs.data_prev,
        data_next=inputs.data_next,
        data_rate=inputs.data_rate,
        source_next=inputs.source_next,
        dt=grid.dt,
    )
    new_state, report = problem.update_state(
        state.param,
        new_param,
        state.state,
        data_prev=inputs.data_prev,
        data_next=inputs.data_next,
        source_next=inputs.source_next,
        dt=grid.dt,
        tol=tol,
    )
    if report is not None and not report.converged:
        raise StepperError(
            f"state solve did not converge (residual {report.final_residual_norm:.3e} "
            f"after {report.iterations} iterations)",
            state.step_index,
        )
    return MrasState(param=new_param, state=new_state, step_index=state.step_index + 1)


@dataclass
class RunResult:
    """Everything a completed run produces."""

    final_state: MrasState
    series: ErrorSeries
    snapshots: list[tuple[float, CellField, NodalField]] = field(default_factory=list)
    discrepancy_step: int | None = None
    wall_seconds: float = 0.0


def run(
    problem,
    grid: TimeGrid,
    observations,
    truth_param: CellField | None = None,
    truth_states=None,
    snapshot_times=(),
    discrepancy_threshold: float = 1e-3,
    initial_param: CellField | None = None,
    initial_state: NodalField | None = None,
    tol: float = 1e-10,
) -> RunResult:
    """Assimilate a full observation series window by window.

    ``observations`` provides snapshots ``z_0..z_N`` and sources
    ``g_1..g_N``; the data time derivative for window n is the backward
    difference (z_{n+1} − z_n)/dt.  When the truth is supplied, the L2
    errors of both estimates are recorded at every time point.  Snapshots of
    the estimate pair are captured at the requested times (rounded to the
    nearest grid point), and the first step at which the relative state/data
    discrepancy falls below ``discrepancy_threshold`` is reported.

    Initial estimates default to the observation at t=0 for the state; the
    initial parameter must be supplied either here or via the caller's
    problem-specific default.
    """
    n = grid.n_steps
    if len(observations.snapshots) != n + 1:
        raise StepperError(
            f"need {n + 1} snapshots, got {len(observations.snapshots)}", 0
        )
    if len(observations.sources) < n:
        raise StepperError(f"need {n} sources, got {len(observations.sources)}", 0)
    if initial_param is None:
        raise StepperError("initial parameter estimate is required", 0)
    state0 = initial_state if initial_state is not None else observations.snapshots[0]

    snap_steps: dict[int, float] = {}
    for t in snapshot_times:
        idx = int(round(t / grid.dt))
        if 0 <= idx <= n:
            snap_steps.setdefault(idx, t)

    t_start = _time.perf_counter()
    current = MrasState(param=initial_param, state=state0, step_index=0)
    times: list[float] = []
    eq: list[float] = []
    eu: list[float] = []
    snapshots: list[tuple[float, CellField, NodalField]] = []
    discrepancy_step: int | None = None

    def observe(state: MrasState, t: float):
        nonlocal discrepancy_step
        times.append(t)
        if truth_param is not None and truth_states is not None:
            dq = CellField(state.param.mesh, state.param.values - truth_param.values)
            du = NodalField(
                state.state.mesh, state.state.values - truth_states[state.step_index].values
            )
            eq.append(l2_norm(dq))
            eu.append(l2_norm(du))
        z = observations.snapshots[state.step_index]
        z_norm = l2_norm(z)
        if z_norm > 0.0 and discrepancy_step is None:
            mismatch = NodalField(z.mesh, state.state.values - z.values)
            if l2_norm(mismatch) / z_norm < discrepancy_threshold:
                discrepancy_step = state.step_index
        if state.step_index in snap_steps:
            snapshots.append((t, state.param, state.state))

    observe(current, 0.0)
    for k in range(n):
        z0 = observations.snapshots[k]
        z1 = observations.snapshots[k + 1]
        rate = NodalField(z1.mesh, (z1.values - z0.values) / grid.dt)
        inputs = StepInputs(
            data_prev=z0, data_next=z1, source_next=observations.sources[k], data_rate=rate
        )
        current = mras_step(problem, current, inputs, grid, tol=tol)
        observe(current, grid.dt * (k + 1))

    series = ErrorSeries(
        times=np.array(times),
        eq_norms=np.array(eq if eq else [np.nan] * len(times)),
        eu_norms=np.array(eu if eu else [np.nan] * len(times)),
    )
    return RunResult(
        final_state=current,
        series=series,
        snapshots=snapshots,
        discrepancy_step=discrepancy_step,
        wall_seconds=_time.perf_counter() - t_start,
    )
