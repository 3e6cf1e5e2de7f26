"""File exporters: delimited error series, legacy VTK snapshots, run reports.

All numeric output is written with 17 significant digits and LF line
endings, so repeated runs with the same seed produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .diagnostics import ErrorSeries, RunReport
from .fem import CellField, NodalField

__all__ = ["export_csv", "read_csv", "export_vtk", "export_report"]

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % float(x)


def export_csv(path, series: ErrorSeries) -> None:
    """Write the error series as ``t,eq,eu,energy`` rows.

    An empty series still gets the header line.
    """
    energy = series.energy
    lines = ["t,eq,eu,energy"]
    for n in range(len(series)):
        lines.append(
            ",".join(
                (
                    _fmt(series.times[n]),
                    _fmt(series.eq_norms[n]),
                    _fmt(series.eu_norms[n]),
                    _fmt(energy[n]),
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_csv(path) -> ErrorSeries:
    """Read a series written by :func:`export_csv` back into memory."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "t,eq,eu,energy":
            raise ValueError(f"{path}: unexpected header {header!r}")
        rows = [line.split(",") for line in f.read().split() if line]
    if not rows:
        return ErrorSeries(np.empty(0), np.empty(0), np.empty(0))
    data = np.array([[float(v) for v in row] for row in rows])
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected 4 columns, found {data.shape[1]}")
    return ErrorSeries(data[:, 0], data[:, 1], data[:, 2])


def export_vtk(
    path,
    state: NodalField,
    param: CellField,
    state_name: str = "state",
    param_name: str = "parameter",
    title: str = "snapshot",
) -> None:
    """Write one snapshot as a legacy ASCII VTK unstructured grid.

    The state is attached as point data and the parameter as cell data;
    every cell is a linear triangle (VTK type 5).
    """
    mesh = state.mesh
    if param.mesh is not mesh:
        raise ValueError("state and parameter live on different meshes")
    lines = [
        "# vtk DataFile Version 2.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend(["5"] * mesh.n_triangles)
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.append(f"SCALARS {state_name} double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in state.values)
    lines.append(f"CELL_DATA {mesh.n_triangles}")
    lines.append(f"SCALARS {param_name} double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(_fmt(v) for v in param.values)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def export_report(path, report: RunReport) -> None:
    """Write the run summary as sorted ``key = value`` lines."""
    items = {
        "final_eq": _fmt(report.final_eq),
        "final_eu": _fmt(report.final_eu),
        "decay_rate": _fmt(report.decay_rate),
        "decay_fit_residual": _fmt(report.decay_fit_residual),
        "monotonicity_violations": str(report.monotonicity_violations),
        "worst_relative_uptick": _fmt(report.worst_relative_uptick),
        "discrepancy_step": "" if report.discrepancy_step is None else str(report.discrepancy_step),
        "wall_seconds": _fmt(report.wall_seconds),
    }
    for key, value in (report.config or {}).items():
        items[f"config.{key}"] = str(value)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(items):
            f.write(f"{key} = {items[key]}\n")
