"""Command-line driver: run benchmarks, list them, or synthesize data only.

Verbosity is controlled by the ``MRAS_LOG_LEVEL`` environment variable
(debug/info/warning/error, default warning).  Output layout for ``run``::

    <out>/delta_<level>/errors.csv     error series, one row per time point
    <out>/delta_<level>/report.txt     key = value summary
    <out>/delta_<level>/decay.png      error-decay figure
    <out>/delta_<level>/fields.png     final state and parameter maps
    <out>/delta_<level>/*.vtk          snapshot files (final plus requested times)

``synthesize`` writes the restricted true fields and the per-level noisy
observations, but runs no reconstruction.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_field_descriptor
from .diagnostics import RunReport
from .fem import CellField, l2_norm
from .mesh import MeshError
from .output import export_csv, export_report, export_vtk
from .plots import plot_error_decay, plot_fields
from .problems import PROBLEM_KINDS, ProblemError, make_problem
from .sparse import SolverError
from .stepper import StepperError, run
from .synth import SynthError, make_truth, read_param_grid, synthesize

log = logging.getLogger(__name__)

_DEFAULT_CONFIGS = {
    "darcy": "darcy_desk.cfg",
    "fisher_kpp": "fisher_desk.cfg",
    "nonlinear_potential": "potential_desk.cfg",
    "allen_cahn": "allen_cahn_desk.cfg",
}

_USER_ERRORS = (ConfigError, SynthError, MeshError, ProblemError, SolverError, OSError)


def _configure_logging() -> None:
    level_name = os.environ.get("MRAS_LOG_LEVEL", "warning").strip().lower()
    level = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
    }.get(level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _bundled_config_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "configs")


def _resolve_config(path: str) -> str:
    """Use the path as given, falling back to the bundled config directory."""
    if os.path.exists(path):
        return path
    if os.sep not in path and "/" not in path:
        for candidate in (path, path + ".cfg"):
            bundled = os.path.join(_bundled_config_dir(), candidate)
            if os.path.exists(bundled):
                return bundled
    raise ConfigError(f"config file not found: {path}")


def _delta_dirname(delta: float) -> str:
    return f"delta_{delta:g}"


def _parse_seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text!r}")
    return value


def _parse_times(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"snapshot times must be comma-separated numbers, got {text!r}"
        ) from None


def _load_run_config(args) -> RunConfig:
    cfg = load_config(_resolve_config(args.config))
    return cfg.with_overrides(seed=args.seed, snapshot_times=args.snapshots)


def _prepare(cfg: RunConfig):
    """Synthesize data and build the matching problem object."""
    grid = cfg.grid()
    param_grid = read_param_grid(cfg.param_grid_file) if cfg.param_grid_file else None
    result = synthesize(
        cfg.kind,
        recon_h=cfg.h,
        truth_h=cfg.truth_h,
        grid=grid,
        truth_dt=cfg.truth_dt,
        seed=cfg.seed,
        deltas=cfg.deltas,
        param_grid=param_grid,
        noise_per_snapshot=cfg.noise_per_snapshot,
    )
    mesh = result.recon_mesh
    linear_fn = parse_field_descriptor(cfg.init_linearization, key="init.linearization")
    linearization = CellField.from_callable(mesh, linear_fn)
    stabilizer = cfg.stabilizer(truth_norm_default=l2_norm(result.truth.param))
    problem = make_problem(
        cfg.kind,
        stabilizer=stabilizer,
        linearization=linearization,
        data_index_mode=cfg.index_mode,
    )
    init_fn = parse_field_descriptor(cfg.init_param, key="init.param")
    initial_param = CellField.from_callable(mesh, init_fn)
    return result, problem, initial_param, grid


def _config_dict(cfg: RunConfig, delta: float) -> dict:
    return {
        "kind": cfg.kind,
        "label": cfg.label,
        "h": cfg.h,
        "truth_h": cfg.truth_h,
        "dt": cfg.dt,
        "truth_dt": cfg.truth_dt,
        "t_final": cfg.t_final,
        "delta": delta,
        "noise_per_snapshot": cfg.noise_per_snapshot,
        "seed": cfg.seed,
        "init_param": cfg.init_param,
        "index_mode": cfg.index_mode,
        "version": __version__,
    }


def _cmd_run(args) -> int:
    cfg = _load_run_config(args)
    synth_result, problem, initial_param, grid = _prepare(cfg)
    truth = synth_result.truth
    out_root = args.out or os.path.join("mras-out", cfg.label or cfg.kind)
    failures = 0

    for delta in cfg.deltas:
        obs = synth_result.observations[delta]
        out_dir = os.path.join(out_root, _delta_dirname(delta))
        os.makedirs(out_dir, exist_ok=True)
        log.info("running %s, noise level %g -> %s", cfg.kind, delta, out_dir)
        try:
            result = run(
                problem,
                grid,
                obs,
                truth_param=truth.param,
                truth_states=truth.states,
                snapshot_times=cfg.snapshot_times,
                discrepancy_threshold=cfg.discrepancy_threshold,
                initial_param=initial_param,
                tol=cfg.solver_tol,
            )
        except StepperError as exc:
            failures += 1
            print(f"delta={delta:g}: FAILED ({exc})", file=sys.stderr)
            continue

        export_csv(os.path.join(out_dir, "errors.csv"), result.series)
        report = RunReport.from_run(result, config=_config_dict(cfg, delta))
        export_report(os.path.join(out_dir, "report.txt"), report)
        plot_error_decay(os.path.join(out_dir, "decay.png"), result.series)
        plot_fields(
            os.path.join(out_dir, "fields.png"),
            result.final_state.state,
            result.final_state.param,
            truth=truth.param,
            title=f"{cfg.kind}, delta={delta:g}",
        )
        for t, param, state in result.snapshots:
            export_vtk(
                os.path.join(out_dir, f"snapshot_t{t:g}.vtk"),
                state,
                param,
                title=f"{cfg.kind} estimate at t={t:g}",
            )
        export_vtk(
            os.path.join(out_dir, "final.vtk"),
            result.final_state.state,
            result.final_state.param,
            title=f"{cfg.kind} final estimate",
        )
        print(
            f"delta={delta:g}: final parameter error {report.final_eq:.6g}, "
            f"state error {report.final_eu:.6g}, wrote {out_dir}"
        )
    return 1 if failures else 0


def _cmd_synthesize(args) -> int:
    cfg = _load_run_config(args)
    grid = cfg.grid()
    param_grid = read_param_grid(cfg.param_grid_file) if cfg.param_grid_file else None
    result = synthesize(
        cfg.kind,
        recon_h=cfg.h,
        truth_h=cfg.truth_h,
        grid=grid,
        truth_dt=cfg.truth_dt,
        seed=cfg.seed,
        deltas=cfg.deltas,
        param_grid=param_grid,
        noise_per_snapshot=cfg.noise_per_snapshot,
    )
    truth = result.truth
    out_root = args.out or os.path.join("mras-out", (cfg.label or cfg.kind) + "-data")
    os.makedirs(out_root, exist_ok=True)
    export_vtk(
        os.path.join(out_root, "truth.vtk"),
        truth.states[0],
        truth.param,
        state_name="state",
        param_name="true_parameter",
        title=f"{cfg.kind} restricted truth at t=0",
    )
    wanted = cfg.snapshot_times or (0.0, grid.final_time)
    indices = sorted({int(round(t / grid.dt)) for t in wanted if 0 <= t <= grid.final_time + 1e-12})
    for delta in cfg.deltas:
        obs = result.observations[delta]
        out_dir = os.path.join(out_root, _delta_dirname(delta))
        os.makedirs(out_dir, exist_ok=True)
        for idx in indices:
            if idx >= len(obs.snapshots):
                continue
            t = grid.dt * idx
            export_vtk(
                os.path.join(out_dir, f"observation_t{t:g}.vtk"),
                obs.snapshots[idx],
                truth.param,
                state_name="observation",
                param_name="true_parameter",
                title=f"{cfg.kind} observation at t={t:g}, delta={delta:g}",
            )
        print(f"delta={delta:g}: wrote {len(indices)} observation snapshots to {out_dir}")
    return 0


def _cmd_list(args) -> int:
    if args.machine:
        for kind in PROBLEM_KINDS:
            recipe = make_truth(kind)
            print(f"benchmark.{kind}.description = {recipe.description}")
            print(f"benchmark.{kind}.default_config = {_DEFAULT_CONFIGS[kind]}")
            print(f"benchmark.{kind}.initial_guess = {recipe.default_initial_guess}")
        return 0
    print("available benchmarks:")
    for kind in PROBLEM_KINDS:
        recipe = make_truth(kind)
        print(f"  {kind:22s} {recipe.description}")
        print(f"  {'':22s} default config: {_DEFAULT_CONFIGS[kind]}")
    print(f"\nbundled configs live in {_bundled_config_dir()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mras",
        description="Online parameter identification benchmarks for parabolic problems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="config file path or bundled config name")
        p.add_argument("--out", help="output directory (default mras-out/<label>)")
        p.add_argument("--seed", type=_parse_seed, help="override the config's RNG seed")
        p.add_argument(
            "--snapshots",
            type=_parse_times,
            help="comma-separated times at which to write VTK snapshots",
        )

    p_run = sub.add_parser("run", help="synthesize data and run the reconstruction")
    add_common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_synth = sub.add_parser("synthesize", help="prepare observation data only")
    add_common(p_synth)
    p_synth.set_defaults(fn=_cmd_synthesize)

    p_list = sub.add_parser("list", help="list the available benchmarks")
    p_list.add_argument("--machine", action="store_true", help="stable key=value output")
    p_list.set_defaults(fn=_cmd_list)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StepperError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
