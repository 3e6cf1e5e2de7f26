"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own code paths: integrals
of barycentric monomials use the factorial formula instead of quadrature,
basis gradients come from a plane fit instead of edge rotations, and dense
matrices are assembled with plain Python loops.  Where a test compares the
library against one of these oracles, the two routes share no arithmetic.
"""

import itertools
import math
import os
import time
from dataclasses import dataclass

import numpy as np
import pytest

import mras
from mras.config import load_config, parse_field_descriptor
from mras.fem import CellField, l2_norm
from mras.mesh import Mesh, rect_mesh
from mras.problems import make_problem
from mras.stepper import run
from mras.synth import synthesize


def config_path(name: str) -> str:
    return os.path.join(os.path.dirname(mras.__file__), "configs", name)


def golden_path(name: str) -> str:
    return os.path.join(os.path.dirname(__file__), "golden", name)


# ---------------------------------------------------------------------------
# hand-built meshes


def make_reference_triangle() -> Mesh:
    """The unit reference triangle as a one-element mesh."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2]], dtype=np.int64)
    edges = np.array([[0, 1, 0], [1, 2, 0], [2, 0, 0]], dtype=np.int64)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=edges,
        element_areas=np.array([0.5]),
        boundary_vertex_flags=np.array([True, True, True]),
    )


def make_two_triangles() -> Mesh:
    # one grid cell of the unit square: h_max equal to the diagonal keeps
    # the generator at a single cell, split into two triangles
    return rect_mesh(0.0, 1.0, 0.0, 1.0, math.sqrt(2.0))


@pytest.fixture
def reference_triangle() -> Mesh:
    return make_reference_triangle()


@pytest.fixture
def two_triangles() -> Mesh:
    return make_two_triangles()


# ---------------------------------------------------------------------------
# exact integration and dense assembly, independent of the library


def bary_integral(area: float, powers) -> float:
    """Exact integral of a barycentric monomial over one triangle.

    Uses the classic factorial identity for products of barycentric
    coordinates, valid for any nonnegative integer exponents.
    """
    a, b, c = powers
    num = math.factorial(a) * math.factorial(b) * math.factorial(c)
    return 2.0 * area * num / math.factorial(a + b + c + 2)


def p1_product_integral(area: float, *factors) -> float:
    """Exact integral of a product of P1 factors over one triangle.

    Each factor is a triple of vertex values; the product is expanded into
    barycentric monomials term by term, so the result is exact for any
    number of factors.
    """
    total = 0.0
    for combo in itertools.product(range(3), repeat=len(factors)):
        coef = 1.0
        powers = [0, 0, 0]
        for values, i in zip(factors, combo):
            coef *= float(values[i])
            powers[i] += 1
        total += coef * bary_integral(area, powers)
    return total


def plane_gradient(points, values) -> np.ndarray:
    """Gradient of the affine function through three point/value samples."""
    design = np.column_stack([np.ones(3), np.asarray(points, dtype=np.float64)])
    coef = np.linalg.solve(design, np.asarray(values, dtype=np.float64))
    return coef[1:]


def dense_mass(mesh: Mesh) -> np.ndarray:
    n = mesh.n_vertices
    out = np.zeros((n, n))
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        area = mesh.element_areas[t]
        for li in range(3):
            for lj in range(3):
                powers = [0, 0, 0]
                powers[li] += 1
                powers[lj] += 1
                out[tri[li], tri[lj]] += bary_integral(area, powers)
    return out


def dense_stiffness(mesh: Mesh, coeff=None) -> np.ndarray:
    n = mesh.n_vertices
    out = np.zeros((n, n))
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        pts = mesh.vertices[tri]
        area = mesh.element_areas[t]
        c = 1.0 if coeff is None else float(coeff[t])
        grads = [plane_gradient(pts, np.eye(3)[k]) for k in range(3)]
        for li in range(3):
            for lj in range(3):
                out[tri[li], tri[lj]] += c * area * float(grads[li] @ grads[lj])
    return out


# ---------------------------------------------------------------------------
# shared desk runs (expensive; executed once per session, on demand)


@dataclass
class DeskRun:
    """One completed desk-scale reconstruction plus its config and timings."""

    result: object
    truth: object
    config: object
    wall_seconds: float  # reconstruction only
    data_seconds: float  # data preparation, charged to the first delta


def run_desk(config_name: str, delta: float, synth_cache: dict | None = None) -> DeskRun:
    """Load a bundled config, prepare its data, run one reconstruction."""
    cfg = load_config(config_path(config_name))
    data_seconds = 0.0
    if synth_cache is not None and config_name in synth_cache:
        synth_result = synth_cache[config_name]
    else:
        t0 = time.perf_counter()
        synth_result = synthesize(
            cfg.kind,
            recon_h=cfg.h,
            truth_h=cfg.truth_h,
            grid=cfg.grid(),
            truth_dt=cfg.truth_dt,
            seed=cfg.seed,
            deltas=cfg.deltas,
            noise_per_snapshot=cfg.noise_per_snapshot,
        )
        data_seconds = time.perf_counter() - t0
        if synth_cache is not None:
            synth_cache[config_name] = synth_result
    mesh = synth_result.recon_mesh
    linearization = CellField.from_callable(
        mesh, parse_field_descriptor(cfg.init_linearization)
    )
    problem = make_problem(
        cfg.kind,
        stabilizer=cfg.stabilizer(truth_norm_default=l2_norm(synth_result.truth.param)),
        linearization=linearization,
        data_index_mode=cfg.index_mode,
    )
    initial = CellField.from_callable(mesh, parse_field_descriptor(cfg.init_param))
    t0 = time.perf_counter()
    result = run(
        problem,
        cfg.grid(),
        synth_result.observations[float(delta)],
        truth_param=synth_result.truth.param,
        truth_states=synth_result.truth.states,
        snapshot_times=cfg.snapshot_times,
        discrepancy_threshold=cfg.discrepancy_threshold,
        initial_param=initial,
        tol=cfg.solver_tol,
    )
    return DeskRun(
        result=result,
        truth=synth_result.truth,
        config=cfg,
        wall_seconds=time.perf_counter() - t0,
        data_seconds=data_seconds,
    )


@pytest.fixture(scope="session")
def desk():
    """Callable fixture: desk("darcy_desk.cfg", 0.0) -> DeskRun, cached."""
    synth_cache: dict = {}
    run_cache: dict = {}

    def get(config_name: str, delta: float = 0.0) -> DeskRun:
        key = (config_name, float(delta))
        if key not in run_cache:
            run_cache[key] = run_desk(config_name, delta, synth_cache)
        return run_cache[key]

    return get
