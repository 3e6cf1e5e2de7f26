"""Ground-truth construction, forward simulation, restriction and noise.

Data preparation follows a strict protocol: the true state is produced on a
strictly finer mesh (and, where applicable, a finer time step) than the
reconstruction ever sees, then interpolated down to the reconstruction mesh.
The reconstruction side never touches fine-mesh fields directly, which keeps
the synthetic experiments free of the usual self-inversion shortcut.

Randomness is counter-based: every random draw is keyed by (seed, stream,
index), so the same seed reproduces identical data regardless of evaluation
order, and the fine and coarse solvers see the same underlying random source
grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fem import (
    CellField,
    NodalField,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    l2_norm,
    load_vector,
    transfer,
)
from .mesh import Mesh, disk_mesh, rect_mesh
from .stepper import TimeGrid

__all__ = [
    "SynthError",
    "BenchmarkRecipe",
    "make_truth",
    "build_mesh",
    "random_source",
    "forward_solve",
    "restrict",
    "add_noise",
    "TruthBundle",
    "ObservationSeries",
    "SynthesisResult",
    "synthesize",
    "GridParam",
    "read_param_grid",
    "sample_param_grid",
]

log = logging.getLogger(__name__)

# fixed stream tags for the counter-based generator; chosen once, never reused
_SOURCE_STREAM = 0x517E
_NOISE_STREAM = 0xA015E


class SynthError(ValueError):
    """Raised for invalid data-preparation requests."""


@dataclass(frozen=True)
class BenchmarkRecipe:
    """Closed-form ingredients of one benchmark.

    ``param_fn(x, y)`` is the true parameter, sampled at element centroids.
    ``state_fn(x, y, t)`` is the closed-form true state where one exists
    (the two reaction-potential benchmarks); otherwise the state comes from
    a forward solve started at ``state0_fn`` and driven by ``source_fn`` (or
    by the random source when ``source_fn`` is None).  ``carrier_fn(x, y, t)``
    is a deterministic excitation added on top of the random source; like the
    random part it is held constant over each coarse window, evaluated at the
    window-end time.
    """

    kind: str
    description: str
    domain: str  # 'rect' or 'disk'
    rect_bounds: tuple[float, float, float, float] | None = None
    radius: float | None = None
    param_fn: object = None
    state0_fn: object = None
    source_fn: object = None
    state_fn: object = None
    z_bounds: tuple[float, float] | None = None
    default_initial_guess: str = "zero"
    uses_random_source: bool = False
    carrier_fn: object = None


def _darcy_param(x, y):
    blob_a = (x >= 0.15) & (x <= 0.45) & (y >= 0.15) & (y <= 0.55)
    blob_b = (x >= 0.55) & (x <= 0.85) & (y >= 0.45) & (y <= 0.85)
    return np.where(blob_a | blob_b, 3.0, 1.0)


def _darcy_state0(x, y):
    # several low sine modes so the initial transient already probes the
    # conductivity in more than one direction
    modes = ((1, 1, 1.0), (2, 1, 1.0), (1, 2, 1.0), (2, 2, 0.7), (3, 1, 0.5), (1, 3, 0.5))
    sx, sy = np.pi * x, np.pi * y
    return 3.0 * sum(w * np.sin(i * sx) * np.sin(j * sy) for i, j, w in modes)


def _darcy_carrier(x, y, t):
    """Slowly rotating combination of the three lowest Laplacian modes.

    The random source alone averages out too quickly on short runs; this
    keeps the state energized enough that the conductivity update has a
    persistent gradient signal to work against.
    """
    sx, sy = np.sin(np.pi * x), np.sin(np.pi * y)
    s2x, s2y = np.sin(2.0 * np.pi * x), np.sin(2.0 * np.pi * y)
    return 40.0 * (
        sx * sy * np.cos(3.0 * t)
        + s2x * sy * np.sin(3.0 * t)
        + sx * s2y * np.cos(3.0 * t + 1.0)
    )


def _fisher_param(x, y):
    r2 = x * x + y * y
    return np.where((r2 > 0.25) & (r2 < 0.81), 1.0, 0.25)


def _fisher_gaussian(x, y):
    return 3.0 * np.exp(-x * x / 0.4 - y * y / 0.4)


def _potential_param(x, y):
    return math.pi - np.sqrt(x * x + y * y)


def _potential_state(x, y, t):
    u0 = 1.0 + np.exp(-(x * x + y * y) / 2.0)
    return u0 * (6.0 - t) / 6.0 + t / 6.0


def _potential_source(x, y, t):
    r2 = x * x + y * y
    u0 = 1.0 + np.exp(-r2 / 2.0)
    du_dt = (1.0 - u0) / 6.0
    lap = (r2 - 2.0) * np.exp(-r2 / 2.0) * (6.0 - t) / 6.0
    c = _potential_param(x, y)
    u = u0 * (6.0 - t) / 6.0 + t / 6.0
    return du_dt - lap + c * u + np.cbrt(c * c) * c * u


def _ac_param(x, y):
    first = (x + y < 1.0) & (x - 2.0 * y < -0.4)
    second = x + y >= 1.0
    return np.where(first, 1.0, np.where(second, 4.0, 2.0))


def _ac_shape(x, y):
    return np.sin((math.pi / 4.0) * (x - 2.0)) * np.sin(math.pi / 2.0 + (y - 1.0))


def _ac_state(x, y, t):
    return _ac_shape(x, y) * (10.0 - t) / 10.0 + 1.0


def _ac_source(x, y, t):
    phi = _ac_shape(x, y)
    du_dt = -phi / 10.0
    lap = -((math.pi / 4.0) ** 2 + 1.0) * phi * (10.0 - t) / 10.0
    c = _ac_param(x, y)
    u = phi * (10.0 - t) / 10.0 + 1.0
    return du_dt - lap + c * u**3 + np.cbrt(c * c) * c * u


_RECIPES = {
    "darcy": BenchmarkRecipe(
        kind="darcy",
        description="linear diffusion, two-material conductivity, carrier plus random source",
        domain="rect",
        rect_bounds=(0.0, 1.0, 0.0, 1.0),
        param_fn=_darcy_param,
        state0_fn=_darcy_state0,
        source_fn=None,
        uses_random_source=True,
        carrier_fn=_darcy_carrier,
        default_initial_guess="ball(0.5,0.5,0.42)",
    ),
    "fisher_kpp": BenchmarkRecipe(
        kind="fisher_kpp",
        description="diffusion with logistic reaction, ring-shaped conductivity",
        domain="rect",
        rect_bounds=(-1.25, 1.25, -1.25, 1.25),
        param_fn=_fisher_param,
        state0_fn=_fisher_gaussian,
        source_fn=lambda x, y, t: _fisher_gaussian(x, y) * np.cos(2.0 * t),
        default_initial_guess="box(-1.15,1.15,-1.15,1.15,1,0)",
    ),
    "nonlinear_potential": BenchmarkRecipe(
        kind="nonlinear_potential",
        description="reaction potential c·u + c|c|^(2/3)·u on a disk, cone-shaped truth",
        domain="disk",
        radius=math.pi,
        param_fn=_potential_param,
        state_fn=_potential_state,
        source_fn=_potential_source,
        z_bounds=(1.0, 2.0),
        default_initial_guess="zero",
    ),
    "allen_cahn": BenchmarkRecipe(
        kind="allen_cahn",
        description="cubic reaction c·u³ + c|c|^(2/3)·u, three-material potential",
        domain="rect",
        rect_bounds=(-2.0, 2.0, -1.0, 1.0),
        param_fn=_ac_param,
        state_fn=_ac_state,
        source_fn=_ac_source,
        z_bounds=(0.05, 1.5),
        default_initial_guess="zero",
    ),
}


def make_truth(kind: str) -> BenchmarkRecipe:
    """Benchmark recipe (true parameter, state and source) by kind name."""
    try:
        return _RECIPES[kind]
    except KeyError:
        raise SynthError(
            f"unknown benchmark kind {kind!r}; expected one of {tuple(_RECIPES)}"
        ) from None


def build_mesh(recipe: BenchmarkRecipe, h_max: float) -> Mesh:
    """Mesh the recipe's domain with the requested resolution."""
    if recipe.domain == "rect":
        return rect_mesh(*recipe.rect_bounds, h_max)
    return disk_mesh(recipe.radius, h_max)


# ---------------------------------------------------------------------------
# randomness


def _stream_normal(seed: int, stream: int, index: int, n: int) -> np.ndarray:
    """n standard-normal draws from the (seed, stream, index) counter block."""
    bg = np.random.Philox(
        counter=np.array([0, 0, 0, index], dtype=np.uint64),
        key=np.array([seed, stream], dtype=np.uint64),
    )
    return np.random.Generator(bg).standard_normal(n)


def source_grid(seed: int, step_index: int) -> np.ndarray:
    """The 128×128 standard-normal source grid for one time index."""
    return _stream_normal(seed, _SOURCE_STREAM, step_index, 128 * 128).reshape(128, 128)


def random_source(
    seed: int, step_index: int, mesh: Mesh, bounds: tuple[float, float, float, float]
) -> NodalField:
    """Bilinear interpolation of the step's random grid onto mesh vertices.

    The grid spans the given domain bounds, so meshes of the same domain see
    the same underlying field regardless of resolution.
    """
    grid = source_grid(seed, step_index)
    xmin, xmax, ymin, ymax = bounds
    n = grid.shape[0]
    sx = (mesh.vertices[:, 0] - xmin) / (xmax - xmin) * (n - 1)
    sy = (mesh.vertices[:, 1] - ymin) / (ymax - ymin) * (n - 1)
    i0 = np.clip(np.floor(sx).astype(int), 0, n - 2)
    j0 = np.clip(np.floor(sy).astype(int), 0, n - 2)
    fx = np.clip(sx - i0, 0.0, 1.0)
    fy = np.clip(sy - j0, 0.0, 1.0)
    v00 = grid[j0, i0]
    v10 = grid[j0, i0 + 1]
    v01 = grid[j0 + 1, i0]
    v11 = grid[j0 + 1, i0 + 1]
    vals = (
        v00 * (1 - fx) * (1 - fy)
        + v10 * fx * (1 - fy)
        + v01 * (1 - fx) * fy
        + v11 * fx * fy
    )
    return NodalField(mesh, vals)


def add_noise(
    snapshots: list[NodalField], delta: float, seed: int, per_snapshot: bool = True
) -> list[NodalField]:
    """Perturb each snapshot to an exact relative L2 error of ``delta``.

    The perturbation for snapshot n is drawn from the (seed, noise stream,
    n) counter block, so it does not depend on the noise level: different
    levels scale the same realization.  With ``per_snapshot`` False a single
    spatial realization (block 0) is reused for every snapshot; the scaling
    stays exact per snapshot either way.
    """
    if delta < 0.0:
        raise SynthError(f"noise level must be nonnegative, got {delta!r}")
    if delta == 0.0:
        return [NodalField(z.mesh, z.values.copy()) for z in snapshots]
    noisy = []
    for n, z in enumerate(snapshots):
        z_norm = l2_norm(z)
        if z_norm == 0.0:
            raise SynthError(
                f"snapshot {n} vanishes; relative noise level {delta} is undefined"
            )
        block = n if per_snapshot else 0
        eps = NodalField(z.mesh, _stream_normal(seed, _NOISE_STREAM, block, z.mesh.n_vertices))
        scale = delta * z_norm / l2_norm(eps)
        noisy.append(NodalField(z.mesh, z.values + scale * eps.values))
    return noisy


# ---------------------------------------------------------------------------
# forward simulation


def _closed_form_snapshots(recipe, mesh, grid, on_snapshot):
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    out = []
    for n in range(grid.n_steps + 1):
        t = grid.dt * n
        snap = NodalField(mesh, np.asarray(recipe.state_fn(x, y, t), dtype=np.float64))
        if on_snapshot is None:
            out.append(snap)
        else:
            on_snapshot(n, snap)
    return out


def forward_solve(
    recipe: BenchmarkRecipe,
    param: CellField,
    mesh: Mesh,
    fine_dt: float,
    grid: TimeGrid,
    seed: int = 0,
    on_snapshot=None,
    tol: float = 1e-10,
):
    """Simulate the true state on ``mesh`` and emit snapshots at coarse times.

    ``fine_dt`` must divide the coarse step.  With ``on_snapshot`` given,
    snapshots are streamed to it as ``(coarse_index, field)`` and nothing is
    retained; otherwise the list of snapshots is returned.

    Diffusion is treated implicitly; the logistic reaction uses a one-step
    lag (u - u² ≈ u_new - u_old·u_new), keeping every system linear and
    positive definite for the step sizes in use.  The two closed-form
    benchmarks are sampled directly without time marching.
    """
    if recipe.state_fn is not None:
        return _closed_form_snapshots(recipe, mesh, grid, on_snapshot)

    if not 0.0 < fine_dt <= grid.dt * (1.0 + 1e-12):
        raise SynthError(f"fine dt {fine_dt!r} must lie in (0, coarse dt]")
    k = int(round(grid.dt / fine_dt))
    if abs(k * fine_dt - grid.dt) > 1e-12 * grid.dt:
        raise SynthError(
            f"fine dt {fine_dt!r} must divide the coarse step {grid.dt!r}"
        )
    if param.mesh is not mesh:
        raise SynthError("true parameter must live on the simulation mesh")

    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    u = np.asarray(recipe.state0_fn(x, y), dtype=np.float64)
    mass = assemble_mass(mesh)
    stiff_a = assemble_stiffness(mesh, param)
    base_system = mass + stiff_a.scaled(fine_dt)
    flags = mesh.boundary_vertex_flags
    logistic = recipe.kind == "fisher_kpp"

    out = []

    def emit(n, field):
        if on_snapshot is None:
            out.append(field)
        else:
            on_snapshot(n, field)

    emit(0, NodalField(mesh, u.copy()))
    for n in range(grid.n_steps):
        if recipe.uses_random_source:
            # the random source is frozen over each coarse window at the
            # window-end index, matching what the reconstruction will read
            g = random_source(seed, n + 1, mesh, recipe.rect_bounds)
            if recipe.carrier_fn is not None:
                t_end = grid.dt * (n + 1)
                g = NodalField(mesh, g.values + recipe.carrier_fn(x, y, t_end))
        for m in range(k):
            t_next = grid.dt * n + fine_dt * (m + 1)
            if recipe.source_fn is not None:
                g = NodalField(mesh, np.asarray(recipe.source_fn(x, y, t_next), dtype=np.float64))
            rhs = mass.matvec(u) + fine_dt * load_vector(mesh, g)
            if logistic:
                reaction = assemble_weighted_mass(mesh, NodalField(mesh, u), power=1)
                system = base_system + mass.scaled(fine_dt) + reaction.scaled(-fine_dt)
            else:
                system = base_system
            reduced = apply_dirichlet(system, rhs, flags, 0.0)
            solution, report = reduced.solve(tol=tol)
            if report is not None and not report.converged:
                raise SynthError(
                    f"forward solve failed at window {n}, substep {m}: "
                    f"residual {report.final_residual_norm:.3e}"
                )
            u = solution
        emit(n + 1, NodalField(mesh, u.copy()))
    return out


def restrict(
    snapshots: list[NodalField], target_mesh: Mesh, tol: float = 1e-10
) -> list[NodalField]:
    """Interpolate fine snapshots onto the reconstruction mesh."""
    return [transfer(z, target_mesh, tol=tol) for z in snapshots]


def _restrict_tolerance(recipe: BenchmarkRecipe, fine_mesh: Mesh) -> float:
    """Geometric slack for interpolation across polygonal boundary mismatch.

    Rectangle boundaries coincide exactly.  Disk boundaries are inscribed
    polygons, so a coarse vertex on the circle sits outside the finer polygon
    by at most the sagitta chord²/(8·radius); allow four times that.
    """
    if recipe.domain != "disk":
        return 1e-10
    be = fine_mesh.boundary_edges
    pa = fine_mesh.vertices[be[:, 0]]
    pb = fine_mesh.vertices[be[:, 1]]
    chord = float(np.max(np.linalg.norm(pb - pa, axis=1)))
    return max(1e-10, chord * chord / (2.0 * recipe.radius))


# ---------------------------------------------------------------------------
# bundles


@dataclass(frozen=True)
class TruthBundle:
    """The ground truth as the reconstruction is allowed to know it."""

    kind: str
    param: CellField  # true parameter on the reconstruction mesh
    states: list[NodalField]  # restricted true state at every coarse time
    fine_mesh: Mesh
    recipe: BenchmarkRecipe


@dataclass(frozen=True)
class ObservationSeries:
    """Observed snapshots and sources on the reconstruction mesh.

    ``snapshots[n]`` observes time t_n; ``sources[n]`` is the source at
    t_{n+1}, the end of window n.
    """

    snapshots: list[NodalField]
    sources: list[NodalField]
    grid: TimeGrid
    delta: float
    seed: int


@dataclass(frozen=True)
class SynthesisResult:
    truth: TruthBundle
    observations: dict[float, ObservationSeries] = field(default_factory=dict)
    recon_mesh: Mesh | None = None


def synthesize(
    kind: str,
    recon_h: float,
    truth_h: float,
    grid: TimeGrid,
    truth_dt: float | None = None,
    seed: int = 0,
    deltas=(0.0,),
    param_grid: "GridParam | None" = None,
    noise_per_snapshot: bool = True,
) -> SynthesisResult:
    """Run the full data-preparation pipeline for one benchmark.

    Builds the reconstruction and truth meshes, simulates (or samples) the
    true state on the finer mesh, restricts it to the reconstruction mesh,
    and produces one observation series per requested noise level.  The
    truth mesh must be at most 0.75 times as coarse as the reconstruction
    mesh; ``param_grid`` optionally replaces the built-in true parameter.
    """
    recipe = make_truth(kind)
    if truth_h > 0.75 * recon_h * (1.0 + 1e-12):
        raise SynthError(
            f"truth mesh size {truth_h!r} must be at most 0.75×reconstruction {recon_h!r}"
        )
    recon_mesh = build_mesh(recipe, recon_h)
    fine_mesh = build_mesh(recipe, truth_h)
    if truth_dt is None:
        truth_dt = grid.dt / 2.0

    if param_grid is not None:
        param_coarse = sample_param_grid(param_grid, recon_mesh)
        param_fine = sample_param_grid(param_grid, fine_mesh)
    else:
        param_coarse = CellField.from_callable(recon_mesh, recipe.param_fn)
        param_fine = CellField.from_callable(fine_mesh, recipe.param_fn)

    tol = _restrict_tolerance(recipe, fine_mesh)
    states: list[NodalField] = []

    def capture(n, fine_state):
        states.append(transfer(fine_state, recon_mesh, tol=tol))

    forward_solve(recipe, param_fine, fine_mesh, truth_dt, grid, seed=seed, on_snapshot=capture)
    truth = TruthBundle(
        kind=kind, param=param_coarse, states=states, fine_mesh=fine_mesh, recipe=recipe
    )

    if recipe.z_bounds is not None:
        lo = min(float(z.values.min()) for z in states)
        hi = max(float(z.values.max()) for z in states)
        if not lo > 0.0:
            raise SynthError(
                f"true state for {kind} loses positivity after restriction (min {lo!r})"
            )
        log.info(
            "%s data bounds: attained [%.4g, %.4g], configured [%g, %g]",
            kind, lo, hi, recipe.z_bounds[0], recipe.z_bounds[1],
        )

    x, y = recon_mesh.vertices[:, 0], recon_mesh.vertices[:, 1]
    sources = []
    for n in range(grid.n_steps):
        t_next = grid.dt * (n + 1)
        if recipe.uses_random_source:
            g = random_source(seed, n + 1, recon_mesh, recipe.rect_bounds)
            if recipe.carrier_fn is not None:
                g = NodalField(recon_mesh, g.values + recipe.carrier_fn(x, y, t_next))
            sources.append(g)
        else:
            sources.append(
                NodalField(recon_mesh, np.asarray(recipe.source_fn(x, y, t_next), dtype=np.float64))
            )

    observations = {}
    for delta in deltas:
        snaps = add_noise(states, delta, seed, per_snapshot=noise_per_snapshot)
        observations[float(delta)] = ObservationSeries(
            snapshots=snaps, sources=sources, grid=grid, delta=float(delta), seed=seed
        )
    return SynthesisResult(truth=truth, observations=observations, recon_mesh=recon_mesh)


# ---------------------------------------------------------------------------
# plain-text parameter grids


@dataclass(frozen=True)
class GridParam:
    """A piecewise-constant parameter on a uniform cell grid."""

    nx: int
    ny: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    values: np.ndarray  # shape (ny, nx), row-major with y advancing per row


def read_param_grid(path) -> GridParam:
    """Parse a plain-text parameter grid.

    Expected layout: a header line ``nx ny xmin xmax ymin ymax`` followed by
    nx·ny values in row-major order (rows sweep y from ymin upward).
    """
    with open(path, "r", encoding="utf-8") as f:
        tokens = f.read().split()
    if len(tokens) < 6:
        raise SynthError(f"{path}: expected header 'nx ny xmin xmax ymin ymax'")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
        xmin, xmax, ymin, ymax = (float(v) for v in tokens[2:6])
        values = np.array([float(v) for v in tokens[6:]], dtype=np.float64)
    except ValueError as exc:
        raise SynthError(f"{path}: malformed number in grid file: {exc}") from None
    if nx <= 0 or ny <= 0:
        raise SynthError(f"{path}: grid dimensions must be positive, got {nx}×{ny}")
    if not (xmax > xmin and ymax > ymin):
        raise SynthError(f"{path}: empty grid extent")
    if values.size != nx * ny:
        raise SynthError(
            f"{path}: expected {nx * ny} values for a {nx}×{ny} grid, found {values.size}"
        )
    return GridParam(nx, ny, xmin, xmax, ymin, ymax, values.reshape(ny, nx))


def sample_param_grid(gp: GridParam, mesh: Mesh) -> CellField:
    """Sample a parameter grid at element centroids (cell lookup)."""
    c = mesh.vertices[mesh.triangles].mean(axis=1)
    i = np.clip(
        np.floor((c[:, 0] - gp.xmin) / (gp.xmax - gp.xmin) * gp.nx).astype(int), 0, gp.nx - 1
    )
    j = np.clip(
        np.floor((c[:, 1] - gp.ymin) / (gp.ymax - gp.ymin) * gp.ny).astype(int), 0, gp.ny - 1
    )
    return CellField(mesh, gp.values[j, i])
