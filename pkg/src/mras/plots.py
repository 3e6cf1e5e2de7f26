"""Figure rendering for the report path.

matplotlib is imported lazily and forced to the Agg backend, so the library
stays importable (and headless-safe) when no figures are requested.
"""

from __future__ import annotations

import numpy as np

from .diagnostics import ErrorSeries
from .fem import CellField, NodalField

__all__ = ["plot_error_decay", "plot_fields"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def plot_error_decay(path, series: ErrorSeries, title: str = "error decay") -> None:
    """Semilogarithmic plot of the parameter/state errors and their energy."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    t = series.times
    with np.errstate(divide="ignore"):
        ax.semilogy(t, np.maximum(series.eq_norms, 1e-300), label="parameter error")
        ax.semilogy(t, np.maximum(series.eu_norms, 1e-300), label="state error")
        ax.semilogy(t, np.maximum(series.energy, 1e-300), "k--", label="energy")
    ax.set_xlabel("t")
    ax.set_ylabel("L2 error")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_fields(
    path,
    state: NodalField,
    param: CellField,
    truth: CellField | None = None,
    title: str = "reconstruction",
) -> None:
    """Render the state and the reconstructed parameter side by side.

    When the true parameter is supplied a third panel shows it with the same
    color scale as the reconstruction, which makes over/undershoot visible.
    """
    plt = _pyplot()
    mesh = state.mesh
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    tris = mesh.triangles
    panels = 2 if truth is None else 3
    fig, axes = plt.subplots(1, panels, figsize=(4.6 * panels, 4.0))

    im0 = axes[0].tripcolor(x, y, tris, state.values, shading="gouraud")
    axes[0].set_title("state")
    fig.colorbar(im0, ax=axes[0], shrink=0.85)

    vmin, vmax = float(param.values.min()), float(param.values.max())
    if truth is not None:
        vmin = min(vmin, float(truth.values.min()))
        vmax = max(vmax, float(truth.values.max()))
    im1 = axes[1].tripcolor(x, y, tris, facecolors=param.values, vmin=vmin, vmax=vmax)
    axes[1].set_title("parameter")
    fig.colorbar(im1, ax=axes[1], shrink=0.85)

    if truth is not None:
        im2 = axes[2].tripcolor(x, y, tris, facecolors=truth.values, vmin=vmin, vmax=vmax)
        axes[2].set_title("true parameter")
        fig.colorbar(im2, ax=axes[2], shrink=0.85)

    for ax in axes:
        ax.set_aspect("equal")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
