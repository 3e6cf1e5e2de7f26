"""Run configuration: flat ``key = value`` files with dotted section prefixes.

A config names one benchmark and everything needed to reproduce a run:
mesh sizes, time grid, noise levels, initial guesses and solver knobs.
Values are plain scalars, comma lists, or small field descriptors such as
``ball(0.5,0.5,0.42)``.  Unknown or malformed keys fail loudly with the
offending key in the message.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, replace

import numpy as np

from .problems import PROBLEM_KINDS, StabilizerConfig
from .stepper import TimeGrid

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_field_descriptor",
    "parse_mapping",
    "load_config",
]


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent run configurations."""


_DESCRIPTOR_RE = re.compile(r"([a-z_]+)\(([^()]*)\)\Z")


def parse_field_descriptor(text: str, key: str = "field"):
    """Turn a descriptor string into a vectorized ``fn(x, y)``.

    Supported forms: ``zero``, ``const(v)``, ``ball(cx,cy,r[,inside,outside])``
    and ``box(x0,x1,y0,y1[,inside,outside])``.  The two indicator shapes
    default to 1 inside and 0 outside.
    """
    text = text.strip()
    if text == "zero":
        return lambda x, y: np.zeros_like(x)
    m = _DESCRIPTOR_RE.fullmatch(text)
    if m is None:
        raise ConfigError(f"{key}: cannot parse field descriptor {text!r}")
    name = m.group(1)
    try:
        args = [float(a) for a in m.group(2).split(",")] if m.group(2).strip() else []
    except ValueError:
        raise ConfigError(f"{key}: non-numeric argument in {text!r}") from None
    if name == "const" and len(args) == 1:
        v = args[0]
        return lambda x, y: np.full_like(np.asarray(x, dtype=np.float64), v)
    if name == "ball" and len(args) in (3, 5):
        cx, cy, r = args[:3]
        vin, vout = (args[3], args[4]) if len(args) == 5 else (1.0, 0.0)
        if r <= 0:
            raise ConfigError(f"{key}: ball radius must be positive in {text!r}")
        return lambda x, y: np.where((x - cx) ** 2 + (y - cy) ** 2 <= r * r, vin, vout)
    if name == "box" and len(args) in (4, 6):
        x0, x1, y0, y1 = args[:4]
        vin, vout = (args[4], args[5]) if len(args) == 6 else (1.0, 0.0)
        if not (x1 > x0 and y1 > y0):
            raise ConfigError(f"{key}: empty box in {text!r}")
        return lambda x, y: np.where((x >= x0) & (x <= x1) & (y >= y0) & (y <= y1), vin, vout)
    raise ConfigError(
        f"{key}: unknown field descriptor {text!r}; expected zero, const(v), "
        "ball(cx,cy,r[,in,out]) or box(x0,x1,y0,y1[,in,out])"
    )


def parse_mapping(text: str, origin: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines into an ordered mapping.

    ``#`` starts a comment; blank lines are skipped; duplicate keys are an
    error so a typo never silently loses a setting.
    """
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        if key in mapping:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


_KNOWN_KEYS = {
    "kind",
    "label",
    "seed",
    "mesh.h",
    "mesh.truth_h",
    "time.dt",
    "time.t_final",
    "time.truth_dt",
    "noise.delta",
    "noise.per_snapshot",
    "init.param",
    "init.linearization",
    "data.z_lower",
    "data.z_upper",
    "data.index_mode",
    "damping.scale",
    "damping.offset",
    "damping.embedding_constant",
    "damping.truth_norm",
    "solver.tol",
    "run.discrepancy_threshold",
    "snapshots",
    "param.grid_file",
}


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run description."""

    kind: str
    h: float
    dt: float
    t_final: float
    truth_h: float
    truth_dt: float
    deltas: tuple[float, ...] = (0.0,)
    noise_per_snapshot: bool = True
    seed: int = 0
    init_param: str = "zero"
    init_linearization: str = "zero"
    z_lower: float | None = None
    z_upper: float | None = None
    index_mode: str = "printed"
    damping_scale: float = 36.0 / 25.0
    damping_offset: float = 25.0 / 36.0
    embedding_constant: float = 1.0
    truth_norm: float | None = None
    solver_tol: float = 1e-10
    discrepancy_threshold: float = 1e-3
    snapshot_times: tuple[float, ...] = ()
    param_grid_file: str | None = None
    label: str = ""

    def grid(self) -> TimeGrid:
        n = int(round(self.t_final / self.dt))
        if abs(n * self.dt - self.t_final) > 1e-9 * max(1.0, abs(self.t_final)):
            raise ConfigError(
                f"time.t_final: {self.t_final!r} is not a whole number of steps of time.dt"
            )
        return TimeGrid(dt=self.dt, n_steps=n)

    def stabilizer(self, truth_norm_default: float = 0.0) -> StabilizerConfig:
        """Damping configuration, filling defaults the config left open."""
        bounds = {"z_lower": 1.0, "z_upper": 2.0}
        if self.z_lower is not None:
            bounds["z_lower"] = self.z_lower
        if self.z_upper is not None:
            bounds["z_upper"] = self.z_upper
        norm = self.truth_norm if self.truth_norm is not None else truth_norm_default
        return StabilizerConfig(
            z_lower=bounds["z_lower"],
            z_upper=bounds["z_upper"],
            embedding_constant=self.embedding_constant,
            true_param_norm_bound=norm,
            damping_scale=self.damping_scale,
            damping_offset=self.damping_offset,
        )

    def with_overrides(self, seed=None, snapshot_times=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if snapshot_times is not None:
            cfg = replace(cfg, snapshot_times=tuple(float(t) for t in snapshot_times))
        return cfg


def _get_float(mapping, key, default=None, *, minimum=None, strict=False):
    if key not in mapping:
        if default is None:
            raise ConfigError(f"{key}: required key is missing")
        return default
    try:
        value = float(mapping[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {mapping[key]!r}") from None
    if minimum is not None:
        if strict and not value > minimum:
            raise ConfigError(f"{key}: must be greater than {minimum}, got {value!r}")
        if not strict and not value >= minimum:
            raise ConfigError(f"{key}: must be at least {minimum}, got {value!r}")
    return value


def from_mapping(mapping: dict[str, str], label: str = "") -> RunConfig:
    """Validate a raw mapping into a :class:`RunConfig`."""
    unknown = sorted(set(mapping) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    kind = mapping.get("kind", "").strip()
    if kind not in PROBLEM_KINDS:
        raise ConfigError(f"kind: expected one of {PROBLEM_KINDS}, got {kind!r}")

    h = _get_float(mapping, "mesh.h", minimum=0.0, strict=True)
    truth_h = _get_float(mapping, "mesh.truth_h", default=0.75 * h, minimum=0.0, strict=True)
    if truth_h > 0.75 * h * (1.0 + 1e-12):
        raise ConfigError(
            f"mesh.truth_h: must be at most 0.75×mesh.h = {0.75 * h:g}, got {truth_h!r}"
        )
    dt = _get_float(mapping, "time.dt", minimum=0.0, strict=True)
    t_final = _get_float(mapping, "time.t_final", minimum=0.0)
    truth_dt = _get_float(mapping, "time.truth_dt", default=dt / 2.0, minimum=0.0, strict=True)
    ratio = dt / truth_dt
    if abs(round(ratio) - ratio) > 1e-9 or round(ratio) < 1:
        raise ConfigError(f"time.truth_dt: {truth_dt!r} must divide time.dt = {dt!r}")

    deltas: tuple[float, ...] = (0.0,)
    if "noise.delta" in mapping:
        try:
            deltas = tuple(float(v) for v in mapping["noise.delta"].split(","))
        except ValueError:
            raise ConfigError(
                f"noise.delta: expected a number or comma list, got {mapping['noise.delta']!r}"
            ) from None
        if any(d < 0 for d in deltas):
            raise ConfigError(f"noise.delta: levels must be nonnegative, got {deltas}")
        if len(set(deltas)) != len(deltas):
            raise ConfigError(f"noise.delta: duplicate levels in {deltas}")

    per_snapshot = True
    if "noise.per_snapshot" in mapping:
        text = mapping["noise.per_snapshot"].strip().lower()
        if text not in ("true", "false"):
            raise ConfigError(
                f"noise.per_snapshot: expected true or false, got {mapping['noise.per_snapshot']!r}"
            )
        per_snapshot = text == "true"

    seed = 0
    if "seed" in mapping:
        try:
            seed = int(mapping["seed"], 0)
        except ValueError:
            raise ConfigError(f"seed: expected an integer, got {mapping['seed']!r}") from None
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed: must fit in an unsigned 64-bit value, got {seed}")

    index_mode = mapping.get("data.index_mode", "printed").strip()
    if index_mode not in ("printed", "uniform"):
        raise ConfigError(
            f"data.index_mode: expected 'printed' or 'uniform', got {index_mode!r}"
        )

    snapshot_times: tuple[float, ...] = ()
    if "snapshots" in mapping and mapping["snapshots"].strip():
        try:
            snapshot_times = tuple(float(v) for v in mapping["snapshots"].split(","))
        except ValueError:
            raise ConfigError(
                f"snapshots: expected comma-separated times, got {mapping['snapshots']!r}"
            ) from None

    init_param = mapping.get("init.param", "zero").strip()
    init_linearization = mapping.get("init.linearization", "zero").strip()
    # validate descriptors eagerly so a bad config fails before any meshing
    parse_field_descriptor(init_param, key="init.param")
    parse_field_descriptor(init_linearization, key="init.linearization")

    z_lower = _get_float(mapping, "data.z_lower", default=float("nan"), minimum=0.0, strict=True) if "data.z_lower" in mapping else None
    z_upper = _get_float(mapping, "data.z_upper", default=float("nan"), minimum=0.0, strict=True) if "data.z_upper" in mapping else None
    if z_lower is not None and z_upper is not None and z_upper < z_lower:
        raise ConfigError(
            f"data.z_upper: must be at least data.z_lower = {z_lower!r}, got {z_upper!r}"
        )

    return RunConfig(
        kind=kind,
        h=h,
        dt=dt,
        t_final=t_final,
        truth_h=truth_h,
        truth_dt=truth_dt,
        deltas=deltas,
        noise_per_snapshot=per_snapshot,
        seed=seed,
        init_param=init_param,
        init_linearization=init_linearization,
        z_lower=z_lower,
        z_upper=z_upper,
        index_mode=index_mode,
        damping_scale=_get_float(mapping, "damping.scale", default=36.0 / 25.0, minimum=1.0),
        damping_offset=_get_float(mapping, "damping.offset", default=25.0 / 36.0, minimum=0.0, strict=True),
        embedding_constant=_get_float(mapping, "damping.embedding_constant", default=1.0, minimum=0.0, strict=True),
        truth_norm=_get_float(mapping, "damping.truth_norm", default=0.0, minimum=0.0) if "damping.truth_norm" in mapping else None,
        solver_tol=_get_float(mapping, "solver.tol", default=1e-10, minimum=0.0, strict=True),
        discrepancy_threshold=_get_float(mapping, "run.discrepancy_threshold", default=1e-3, minimum=0.0),
        snapshot_times=snapshot_times,
        param_grid_file=mapping.get("param.grid_file", "").strip() or None,
        label=label,
    )


def load_config(path) -> RunConfig:
    """Read and validate a config file."""
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    mapping = parse_mapping(text, origin=str(path))
    label = os.path.splitext(os.path.basename(str(path)))[0]
    return from_mapping(mapping, label=label)
