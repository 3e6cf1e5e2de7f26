"""Error tracking and decay-rate diagnostics for assimilation runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import CellField, NodalField, l2_norm

__all__ = [
    "ErrorSeries",
    "RunReport",
    "record",
    "fit_decay",
    "monotonicity_stats",
]


@dataclass(frozen=True)
class ErrorSeries:
    """Per-time-point L2 errors of the parameter and state estimates.

    ``energy`` combines both errors as eu² + eq², the quantity whose decay
    the underlying theory controls.
    """

    times: np.ndarray
    eq_norms: np.ndarray
    eu_norms: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        q = np.asarray(self.eq_norms, dtype=np.float64)
        u = np.asarray(self.eu_norms, dtype=np.float64)
        if not (t.shape == q.shape == u.shape and t.ndim == 1):
            raise ValueError(
                f"series arrays must share one length, got {t.shape}, {q.shape}, {u.shape}"
            )
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "eq_norms", q)
        object.__setattr__(self, "eu_norms", u)

    @property
    def energy(self) -> np.ndarray:
        return self.eu_norms**2 + self.eq_norms**2

    def __len__(self) -> int:
        return self.times.size


def record(truth_param: CellField, truth_state: NodalField, param: CellField, state: NodalField):
    """L2 errors of one estimate pair against the truth: (eq, eu)."""
    dq = CellField(param.mesh, param.values - truth_param.values)
    du = NodalField(state.mesh, state.values - truth_state.values)
    return l2_norm(dq), l2_norm(du)


def fit_decay(series: ErrorSeries) -> tuple[float, float]:
    """Exponential decay rate of the error energy over the early run.

    Least-squares fit of log(energy/energy_0) against time, restricted to
    the first half of the time axis (the late run sits on the noise and
    discretization floor) and to strictly positive energies.  Returns the
    positive rate (negated slope) and the root-mean-square fit residual.
    """
    energy = series.energy
    if energy.size == 0 or not energy[0] > 0.0:
        raise ValueError("decay fit needs a positive initial energy")
    t_half = series.times[-1] / 2.0 if series.times.size > 1 else series.times[0]
    mask = (series.times <= t_half) & (energy > 0.0)
    if mask.sum() < 2:
        return 0.0, 0.0
    t = series.times[mask]
    y = np.log(energy[mask] / energy[0])
    design = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    residual = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return float(-coef[0]), residual


def monotonicity_stats(series: ErrorSeries, slack: float = 0.0) -> tuple[int, float]:
    """Count energy upticks beyond a relative slack and report the worst one.

    Returns (violations, worst_relative_uptick); the uptick at step n is
    (E_{n+1} − E_n)/E_n, evaluated where E_n > 0.
    """
    e = series.energy
    if e.size < 2:
        return 0, 0.0
    prev = e[:-1]
    ok = prev > 0.0
    rel = np.zeros(e.size - 1)
    rel[ok] = (e[1:][ok] - prev[ok]) / prev[ok]
    worst = float(rel.max()) if rel.size else 0.0
    return int(np.sum(rel > slack)), worst


@dataclass(frozen=True)
class RunReport:
    """Summary of one completed run, ready for key=value export."""

    config: dict = field(default_factory=dict)
    final_eq: float = float("nan")
    final_eu: float = float("nan")
    decay_rate: float = float("nan")
    decay_fit_residual: float = float("nan")
    monotonicity_violations: int = 0
    worst_relative_uptick: float = 0.0
    discrepancy_step: int | None = None
    wall_seconds: float = 0.0

    @staticmethod
    def from_run(result, config: dict | None = None, slack: float = 1e-6) -> "RunReport":
        series = result.series
        finite = np.isfinite(series.eq_norms)
        rate, resid = (float("nan"), float("nan"))
        if finite.all() and len(series) and series.energy[0] > 0.0:
            rate, resid = fit_decay(series)
        violations, worst = monotonicity_stats(series, slack) if finite.all() else (0, 0.0)
        return RunReport(
            config=dict(config or {}),
            final_eq=float(series.eq_norms[-1]) if len(series) else float("nan"),
            final_eu=float(series.eu_norms[-1]) if len(series) else float("nan"),
            decay_rate=rate,
            decay_fit_residual=resid,
            monotonicity_violations=violations,
            worst_relative_uptick=worst,
            discrepancy_step=result.discrepancy_step,
            wall_seconds=result.wall_seconds,
        )
