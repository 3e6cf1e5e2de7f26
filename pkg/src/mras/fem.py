"""Piecewise-linear / piecewise-constant finite element kernels.

State fields live in the continuous P1 space (one value per vertex),
parameter fields in the discontinuous P0 space (one value per triangle).
This module assembles the mass, stiffness and nodally-weighted mass
matrices, load vectors, the gradient-coupling operator between the two
spaces, boundary flux forms, L2 norms, inter-mesh interpolation, and
Dirichlet elimination.

All weighted forms integrate with a symmetric degree-4 triangle rule, which
is exact for products of up to four P1 factors.  Every integrand the update
laws request stays within degree 4 (a cubic nodal weight is only ever paired
with one basis function and a constant); the weighted mass with power 3 is
the lone degree-5 form and is approximated by the same rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .sparse import CsrMatrix, cg_solve, csr_from_triplets, _wrap

log = logging.getLogger(__name__)

__all__ = [
    "NodalField",
    "CellField",
    "FemError",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "grad_coupling",
    "GradCoupling",
    "elementwise_gradient_dot",
    "boundary_flux_form",
    "load_vector",
    "quad_point_values",
    "quad_load",
    "quad_cell_integral",
    "l2_norm",
    "transfer",
    "apply_dirichlet",
    "DirichletSystem",
]


class FemError(ValueError):
    """Raised for inconsistent field/mesh combinations or failed preconditions."""


# symmetric 6-point triangle rule, exact through polynomial degree 4;
# weights sum to 1 and scale by the element area
_QW = np.array(
    [
        0.223381589678011, 0.223381589678011, 0.223381589678011,
        0.109951743655322, 0.109951743655322, 0.109951743655322,
    ]
)
_a1, _b1 = 0.445948490915965, 0.108103018168070
_a2, _b2 = 0.091576213509771, 0.816847572980459
_QB = np.array(
    [
        [_b1, _a1, _a1],
        [_a1, _b1, _a1],
        [_a1, _a1, _b1],
        [_b2, _a2, _a2],
        [_a2, _b2, _a2],
        [_a2, _a2, _b2],
    ]
)


@dataclass(frozen=True)
class NodalField:
    """A P1 field: one value per mesh vertex."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (self.mesh.n_vertices,):
            raise FemError(
                f"nodal field needs {self.mesh.n_vertices} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise FemError("nodal field contains non-finite values")
        object.__setattr__(self, "values", v)

    @staticmethod
    def from_callable(mesh: Mesh, fn) -> "NodalField":
        """Sample ``fn(x, y)`` at every vertex (vectorized over coordinates)."""
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        vals = np.broadcast_to(np.asarray(fn(x, y), dtype=np.float64), x.shape).copy()
        return NodalField(mesh, vals)


@dataclass(frozen=True)
class CellField:
    """A P0 field: one value per mesh triangle."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (self.mesh.n_triangles,):
            raise FemError(
                f"cell field needs {self.mesh.n_triangles} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise FemError("cell field contains non-finite values")
        object.__setattr__(self, "values", v)

    @staticmethod
    def from_callable(mesh: Mesh, fn) -> "CellField":
        """Sample ``fn(x, y)`` at every triangle centroid."""
        c = mesh.vertices[mesh.triangles].mean(axis=1)
        vals = np.broadcast_to(np.asarray(fn(c[:, 0], c[:, 1]), dtype=np.float64), (mesh.n_triangles,)).copy()
        return CellField(mesh, vals)


def _check_same_mesh(*fields) -> Mesh:
    mesh = fields[0].mesh
    for f in fields[1:]:
        if f.mesh is not mesh:
            raise FemError("fields live on different meshes")
    return mesh


def _p1_gradients(mesh: Mesh) -> np.ndarray:
    """Constant basis gradients per element, shape (n_triangles, 3, 2)."""

    def build():
        p = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        # grad of barycentric i = perpendicular of the opposite edge / (2A)
        e0 = p[:, 2] - p[:, 1]
        e1 = p[:, 0] - p[:, 2]
        e2 = p[:, 1] - p[:, 0]
        perp = np.stack([e0, e1, e2], axis=1)[:, :, ::-1].copy()
        perp[:, :, 0] *= -1.0
        grads = perp / (2.0 * mesh.element_areas)[:, None, None]
        grads.setflags(write=False)
        return grads

    return mesh.cache("p1_gradients", build)


def element_gradients(field: NodalField) -> np.ndarray:
    """Per-element constant gradient of a P1 field, shape (n_triangles, 2)."""
    grads = _p1_gradients(field.mesh)
    vals = field.values[field.mesh.triangles]  # (nt, 3)
    return np.einsum("ti,tid->td", vals, grads)


def assemble_mass(mesh: Mesh) -> CsrMatrix:
    """Mass matrix M with M_ij = ∫ φ_i φ_j."""

    def build():
        local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        blocks = mesh.element_areas[:, None, None] * local
        return _scatter(mesh, blocks)

    return mesh.cache("mass", build)


def assemble_stiffness(mesh: Mesh, coeff: CellField | None = None) -> CsrMatrix:
    """Stiffness matrix K with K_ij = ∫ c ∇φ_i·∇φ_j, elementwise-constant c.

    With ``coeff=None`` the coefficient is 1 and the result is cached on the
    mesh.  The matrix is symmetric positive semidefinite for c ≥ 0 and
    annihilates constants when no boundary conditions are applied.
    """

    def build():
        grads = _p1_gradients(mesh)
        blocks = np.einsum("tid,tjd->tij", grads, grads) * mesh.element_areas[:, None, None]
        return blocks

    if coeff is None:
        return mesh.cache("stiffness", lambda: _scatter(mesh, build()))
    if coeff.mesh is not mesh:
        raise FemError("coefficient lives on a different mesh")
    if log.isEnabledFor(logging.DEBUG) and np.any(coeff.values < 0.0):
        log.debug("stiffness assembled with negative coefficient entries")
    blocks = build() * coeff.values[:, None, None]
    return _scatter(mesh, blocks)


def quad_point_values(field: NodalField) -> np.ndarray:
    """P1 field evaluated at the quadrature points, shape (n_triangles, 6)."""
    vals = field.values[field.mesh.triangles]
    return vals @ _QB.T


def assemble_weighted_mass(mesh: Mesh, w: NodalField, power: int = 1) -> CsrMatrix:
    """Weighted mass matrix with entries ∫ wᵖ φ_i φ_j, p ∈ {1, 2, 3}.

    The nodal weight is interpreted as its P1 interpolant and raised to the
    requested power pointwise at the quadrature nodes.  Exact for p ≤ 2; for
    p = 3 the integrand is degree 5 and the degree-4 rule is an approximation.
    """
    if power not in (1, 2, 3):
        raise FemError(f"unsupported power {power!r}; expected 1, 2 or 3")
    if w.mesh is not mesh:
        raise FemError("weight lives on a different mesh")
    wq = quad_point_values(w) ** power  # (nt, 6)
    # local block: A_e Σ_q ω_q wᵖ(x_q) λ_i(x_q) λ_j(x_q)
    lam = _QB  # (6, 3)
    blocks = np.einsum(
        "tq,qi,qj->tij", wq * _QW[None, :], lam, lam
    ) * mesh.element_areas[:, None, None]
    return _scatter(mesh, blocks)


def _scatter(mesh: Mesh, blocks: np.ndarray) -> CsrMatrix:
    """Scatter (nt,3,3) element blocks into a global CSR matrix."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return csr_from_triplets(mesh.n_vertices, rows, cols, blocks.ravel())


@dataclass(frozen=True)
class GradCoupling:
    """Operator coupling a P0 coefficient to the P1 test space through ∇z.

    Applying it to a cell field a gives the vector with entries
    Σ_e a_e · area_e · (∇z·∇φ_i)|_e, the assembled form ∫ a ∇z·∇φ_i.
    """

    mesh: Mesh
    # (nt, 3): per-element contribution to each local vertex for a_e = 1
    element_entries: np.ndarray

    def apply(self, a: CellField) -> np.ndarray:
        if a.mesh is not self.mesh:
            raise FemError("coefficient lives on a different mesh")
        weighted = self.element_entries * a.values[:, None]
        out = np.zeros(self.mesh.n_vertices)
        np.add.at(out, self.mesh.triangles.ravel(), weighted.ravel())
        return out


def grad_coupling(mesh: Mesh, z: NodalField) -> GradCoupling:
    if z.mesh is not mesh:
        raise FemError("field lives on a different mesh")
    grads = _p1_gradients(mesh)
    gz = element_gradients(z)  # (nt, 2)
    entries = np.einsum("td,tid->ti", gz, grads) * mesh.element_areas[:, None]
    return GradCoupling(mesh=mesh, element_entries=entries)


def elementwise_gradient_dot(z: NodalField, w: NodalField) -> CellField:
    """Cell field with value ∇z·∇w per element (both gradients constant)."""
    mesh = _check_same_mesh(z, w)
    dots = np.einsum("td,td->t", element_gradients(z), element_gradients(w))
    return CellField(mesh, dots)


def boundary_flux_form(z: NodalField) -> CellField:
    """Per-element outward flux of ∇z through the piece of ∂Ω the element owns.

    Interior elements get 0.  For a boundary element the value is
    Σ_edges |edge| · (∇z·n) with n the outward unit normal, using the
    element-constant gradient.
    """
    mesh = z.mesh
    out = np.zeros(mesh.n_triangles)
    if mesh.boundary_edges.size:
        gz = element_gradients(z)
        va = mesh.boundary_edges[:, 0]
        vb = mesh.boundary_edges[:, 1]
        tri = mesh.boundary_edges[:, 2]
        edge = mesh.vertices[vb] - mesh.vertices[va]
        # boundary edges run counterclockwise, so (e_y, -e_x) points outward
        # and already carries the edge length
        flux = gz[tri, 0] * edge[:, 1] - gz[tri, 1] * edge[:, 0]
        np.add.at(out, tri, flux)
    return CellField(mesh, out)


def load_vector(mesh: Mesh, f: NodalField) -> np.ndarray:
    """Consistent load M·f for a nodally interpolated source."""
    if f.mesh is not mesh:
        raise FemError("source lives on a different mesh")
    return assemble_mass(mesh).matvec(f.values)


def quad_load(mesh: Mesh, point_values: np.ndarray) -> np.ndarray:
    """Load vector ∫ s φ_i for an integrand given pointwise at quadrature nodes.

    ``point_values`` has shape (n_triangles, 6) matching
    :func:`quad_point_values`; used for nonlinear sources evaluated pointwise
    rather than re-interpolated.
    """
    if point_values.shape != (mesh.n_triangles, 6):
        raise FemError(f"expected shape ({mesh.n_triangles}, 6), got {point_values.shape}")
    contrib = np.einsum("tq,qi->ti", point_values * _QW[None, :], _QB)
    contrib *= mesh.element_areas[:, None]
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    return out


def quad_cell_integral(mesh: Mesh, point_values: np.ndarray) -> np.ndarray:
    """Per-element integrals ∫_E s for pointwise quadrature data, shape (nt,)."""
    if point_values.shape != (mesh.n_triangles, 6):
        raise FemError(f"expected shape ({mesh.n_triangles}, 6), got {point_values.shape}")
    return mesh.element_areas * (point_values @ _QW)


def l2_norm(field: NodalField | CellField) -> float:
    """L2 norm over the mesh: √(vᵀMv) for nodal, √(Σ area_e v_e²) for cell fields."""
    if isinstance(field, NodalField):
        v = field.values
        return float(np.sqrt(max(v @ assemble_mass(field.mesh).matvec(v), 0.0)))
    if isinstance(field, CellField):
        return float(np.sqrt(np.sum(field.mesh.element_areas * field.values**2)))
    raise FemError(f"unsupported field type {type(field).__name__}")


# ---------------------------------------------------------------------------
# point location and inter-mesh interpolation


class _Locator:
    """Uniform-bin point locator over a mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        pts = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        self.tri_min = pts.min(axis=1)
        self.tri_max = pts.max(axis=1)
        self.lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        n_bins = max(1, int(np.sqrt(mesh.n_triangles)))
        self.shape = (n_bins, n_bins)
        span = np.maximum(hi - self.lo, 1e-300)
        self.inv_cell = np.array(self.shape) / span
        self.bins: dict[tuple[int, int], list[int]] = {}
        for t in range(mesh.n_triangles):
            i0, j0 = self._bin_of(self.tri_min[t])
            i1, j1 = self._bin_of(self.tri_max[t])
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    self.bins.setdefault((i, j), []).append(t)

    def _bin_of(self, p) -> tuple[int, int]:
        ij = np.floor((p - self.lo) * self.inv_cell).astype(int)
        return (
            int(np.clip(ij[0], 0, self.shape[0] - 1)),
            int(np.clip(ij[1], 0, self.shape[1] - 1)),
        )

    def candidates(self, p: np.ndarray) -> list[int]:
        i, j = self._bin_of(p)
        found: list[int] = []
        for di in (0, -1, 1):
            for dj in (0, -1, 1):
                found.extend(self.bins.get((i + di, j + dj), ()))
        return found

    def barycentric(self, t: int, p: np.ndarray) -> np.ndarray:
        a, b, c = self.mesh.vertices[self.mesh.triangles[t]]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det
        l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det
        return np.array([1.0 - l1 - l2, l1, l2])

    def distance_to_triangle(self, t: int, p: np.ndarray) -> float:
        """Exact Euclidean distance from p to the (closed) triangle t."""
        if self.barycentric(t, p).min() >= 0.0:
            return 0.0
        verts = self.mesh.vertices[self.mesh.triangles[t]]
        best = np.inf
        for k in range(3):
            a = verts[k]
            b = verts[(k + 1) % 3]
            ab = b - a
            s = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
            best = min(best, float(np.linalg.norm(p - (a + s * ab))))
        return best


def _locator(mesh: Mesh) -> _Locator:
    return mesh.cache("locator", lambda: _Locator(mesh))


def transfer(field: NodalField, target_mesh: Mesh, tol: float = 1e-10) -> NodalField:
    """Interpolate a P1 field onto the vertices of another mesh.

    Every target vertex must lie inside the source mesh or within ``tol`` of
    it; slightly-outside points (polygonal boundary mismatch) are evaluated
    at the nearest point of the best candidate triangle.

    Raises
    ------
    FemError
        If a target vertex is farther than ``tol`` from the source mesh.
    """
    src = field.mesh
    if target_mesh is src:
        return NodalField(src, field.values.copy())
    loc = _locator(src)
    out = np.empty(target_mesh.n_vertices)
    for vi, p in enumerate(target_mesh.vertices):
        cands = loc.candidates(p)
        best_t, best_min = -1, -np.inf
        for t in cands:
            m = loc.barycentric(t, p).min()
            if m > best_min:
                best_t, best_min = t, m
        if best_t < 0 or (best_min < 0.0 and loc.distance_to_triangle(best_t, p) > tol):
            # bins can miss a containing triangle for far-outside points;
            # fall back to a full scan before rejecting
            best_t, best_min = -1, -np.inf
            for t in range(src.n_triangles):
                m = loc.barycentric(t, p).min()
                if m > best_min:
                    best_t, best_min = t, m
            if best_min < 0.0 and loc.distance_to_triangle(best_t, p) > tol:
                raise FemError(
                    f"target vertex {vi} at {tuple(p)} lies outside the source mesh "
                    f"(distance {loc.distance_to_triangle(best_t, p):.3e} > tol {tol:.1e})"
                )
        lam = loc.barycentric(best_t, p)
        if lam.min() < 0.0:
            lam = np.clip(lam, 0.0, None)
            lam /= lam.sum()
        out[vi] = lam @ field.values[src.triangles[best_t]]
    return NodalField(target_mesh, out)


# ---------------------------------------------------------------------------
# Dirichlet elimination


@dataclass(frozen=True)
class DirichletSystem:
    """A linear system with boundary rows/columns eliminated.

    ``reduced_matrix`` and ``reduced_rhs`` describe the interior problem;
    :meth:`expand` reinstates the prescribed boundary values.
    """

    reduced_matrix: CsrMatrix
    reduced_rhs: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray
    boundary_values: np.ndarray
    n_full: int

    def expand(self, x_interior: np.ndarray) -> np.ndarray:
        full = np.empty(self.n_full)
        full[self.interior] = x_interior
        full[self.boundary] = self.boundary_values
        return full

    def solve(self, tol: float = 1e-10, max_iter: int | None = None):
        """Solve the reduced system with CG and return the full-length vector."""
        if self.interior.size == 0:
            return self.expand(np.empty(0)), None
        x, report = cg_solve(self.reduced_matrix, self.reduced_rhs, tol=tol, max_iter=max_iter)
        return self.expand(x), report


def apply_dirichlet(
    matrix: CsrMatrix,
    rhs: np.ndarray,
    boundary_flags: np.ndarray,
    boundary_values: np.ndarray | float = 0.0,
) -> DirichletSystem:
    """Eliminate Dirichlet rows and columns from a symmetric system.

    Known boundary values are moved to the right-hand side, so the reduced
    matrix stays symmetric (positive definite whenever the full matrix is).
    """
    flags = np.asarray(boundary_flags, dtype=bool)
    n = matrix.n
    if flags.shape != (n,):
        raise FemError(f"boundary flags must have shape ({n},), got {flags.shape}")
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (n,):
        raise FemError(f"rhs must have shape ({n},), got {rhs.shape}")
    boundary = np.flatnonzero(flags)
    interior = np.flatnonzero(~flags)
    if np.isscalar(boundary_values):
        bvals = np.full(boundary.size, float(boundary_values))
    else:
        bvals = np.asarray(boundary_values, dtype=np.float64)
        if bvals.shape == (n,):
            bvals = bvals[boundary]
        elif bvals.shape != (boundary.size,):
            raise FemError(
                f"boundary values must have shape ({n},) or ({boundary.size},), got {bvals.shape}"
            )
    full = matrix._scipy
    a_ii = full[np.ix_(interior, interior)] if interior.size else full[:0, :0]
    lift = np.zeros(interior.size)
    if boundary.size and interior.size:
        lift = full[np.ix_(interior, boundary)] @ bvals
    reduced = _wrap(a_ii.tocsr() if interior.size else a_ii)
    return DirichletSystem(
        reduced_matrix=reduced,
        reduced_rhs=rhs[interior] - lift,
        interior=interior,
        boundary=boundary,
        boundary_values=bvals,
        n_full=n,
    )
