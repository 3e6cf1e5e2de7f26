"""Structured conforming triangulations of rectangles and disks.

Meshes are generated deterministically: a rectangle is cut into a regular
grid of cells, each split along a diagonal, and a disk is built from
concentric vertex rings joined by an angular-sweep triangulation.  Identical
inputs always produce bit-identical meshes, which keeps every downstream
computation reproducible.

A :class:`Mesh` is immutable after construction and safe to share between
threads.  Generated meshes are validated on construction: positive element
areas, counterclockwise triangle orientation, edge conformity (every interior
edge shared by exactly two triangles, every boundary edge owned by exactly
one) and agreement of the summed element areas with the area enclosed by the
boundary polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Mesh", "MeshError", "rect_mesh", "disk_mesh"]


class MeshError(ValueError):
    """Raised for invalid generator inputs or a failed mesh validity check."""


@dataclass(frozen=True)
class Mesh:
    """Conforming triangle mesh of a planar domain.

    Parameters
    ----------
    vertices : ndarray, shape (n_vertices, 2)
        Vertex coordinates.
    triangles : ndarray, shape (n_triangles, 3)
        Vertex indices of each triangle, counterclockwise.
    boundary_edges : ndarray, shape (n_boundary_edges, 3)
        Rows ``(va, vb, t)``: the edge from vertex ``va`` to ``vb`` lies on
        the domain boundary and belongs to triangle ``t``.
    element_areas : ndarray, shape (n_triangles,)
        Precomputed triangle areas, all positive.
    boundary_vertex_flags : ndarray of bool, shape (n_vertices,)
        True for vertices lying on the domain boundary.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    element_areas: np.ndarray
    boundary_vertex_flags: np.ndarray
    # memo store for operators assembled on this mesh (not part of identity)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def cache(self, key, build):
        """Return a memoized derived object, building it on first use."""
        try:
            return self._cache[key]
        except KeyError:
            value = build()
            self._cache[key] = value
            return value


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def _build_mesh(vertices: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Orient, validate and freeze a raw vertex/triangle soup."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)

    areas = _signed_areas(vertices, triangles)
    flip = areas < 0.0
    if np.any(flip):
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        areas = np.abs(areas)
    if np.any(areas <= 0.0):
        raise MeshError("degenerate triangle with nonpositive area")

    # edge conformity scan; each undirected edge must appear once (boundary)
    # or twice (interior)
    edge_owner: dict[tuple[int, int], list[int]] = {}
    for t in range(triangles.shape[0]):
        a, b, c = triangles[t]
        for va, vb in ((a, b), (b, c), (c, a)):
            key = (int(min(va, vb)), int(max(va, vb)))
            edge_owner.setdefault(key, []).append(t)
    boundary_rows = []
    for t in range(triangles.shape[0]):
        a, b, c = triangles[t]
        for va, vb in ((a, b), (b, c), (c, a)):
            key = (int(min(va, vb)), int(max(va, vb)))
            owners = edge_owner[key]
            if len(owners) == 1:
                boundary_rows.append((int(va), int(vb), t))
            elif len(owners) != 2:
                raise MeshError(
                    f"edge {key} shared by {len(owners)} triangles; mesh not conforming"
                )
    boundary_edges = np.array(boundary_rows, dtype=np.int64).reshape(-1, 3)

    flags = np.zeros(vertices.shape[0], dtype=bool)
    flags[boundary_edges[:, 0]] = True
    flags[boundary_edges[:, 1]] = True

    # directed boundary edges (va, vb) inherit the triangle's counterclockwise
    # orientation, so they traverse the boundary polygon counterclockwise and
    # the shoelace sum below is the enclosed area
    xa = vertices[boundary_edges[:, 0]]
    xb = vertices[boundary_edges[:, 1]]
    polygon_area = 0.5 * np.sum(xa[:, 0] * xb[:, 1] - xb[:, 0] * xa[:, 1])
    total = float(np.sum(areas))
    if not math.isclose(total, polygon_area, rel_tol=1e-12, abs_tol=1e-14):
        raise MeshError(
            f"element areas sum to {total!r} but boundary polygon encloses {polygon_area!r}"
        )

    for arr in (vertices, triangles, boundary_edges, areas, flags):
        arr.setflags(write=False)
    return Mesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        element_areas=areas,
        boundary_vertex_flags=flags,
    )


def rect_mesh(xmin: float, xmax: float, ymin: float, ymax: float, h_max: float) -> Mesh:
    """Triangulate the rectangle ``[xmin, xmax] x [ymin, ymax]``.

    The rectangle is divided into ``n_x`` by ``n_y`` congruent cells, each
    split into two triangles along its lower-left to upper-right diagonal.
    Cell counts are chosen as ``n_x = ceil((xmax - xmin) * sqrt(2) / h_max)``
    (and analogously ``n_y``) so that every triangle diameter, which equals
    the cell diagonal, is at most ``h_max``.

    Parameters
    ----------
    xmin, xmax, ymin, ymax : float
        Rectangle bounds; must be finite with positive extents.
    h_max : float
        Upper bound for the triangle diameters.

    Returns
    -------
    Mesh
    """
    for name, v in (("xmin", xmin), ("xmax", xmax), ("ymin", ymin), ("ymax", ymax), ("h_max", h_max)):
        if not math.isfinite(v):
            raise MeshError(f"{name} must be finite, got {v!r}")
    if not xmax > xmin:
        raise MeshError(f"xmax must exceed xmin, got [{xmin!r}, {xmax!r}]")
    if not ymax > ymin:
        raise MeshError(f"ymax must exceed ymin, got [{ymin!r}, {ymax!r}]")
    if not h_max > 0.0:
        raise MeshError(f"h_max must be positive, got {h_max!r}")

    nx = max(1, math.ceil((xmax - xmin) * math.sqrt(2.0) / h_max))
    ny = max(1, math.ceil((ymax - ymin) * math.sqrt(2.0) / h_max))

    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    gx, gy = np.meshgrid(xs, ys)  # row index j runs over y
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(i: int, j: int) -> int:
        return j * (nx + 1) + i

    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    t = 0
    for j in range(ny):
        for i in range(nx):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            triangles[t] = (v00, v10, v11)
            triangles[t + 1] = (v00, v11, v01)
            t += 2
    return _build_mesh(vertices, triangles)


def disk_mesh(radius: float, h_max: float) -> Mesh:
    """Triangulate a disk centered at the origin.

    Vertices are placed on concentric rings with radial spacing at most
    ``h_max / sqrt(2)``; each ring carries enough vertices that arc spacing
    (hence chord length) stays below the same bound.  Consecutive rings are
    joined with an angular two-pointer sweep, and the innermost ring is fanned
    to the center vertex.  The mesh covers the polygon inscribed in the circle
    through the outermost ring, whose vertices lie exactly at distance
    ``radius`` from the origin.

    Parameters
    ----------
    radius : float
        Disk radius, positive.
    h_max : float
        Upper bound for triangle diameters; must be smaller than ``radius``.

    Returns
    -------
    Mesh
    """
    if not (math.isfinite(radius) and radius > 0.0):
        raise MeshError(f"radius must be positive and finite, got {radius!r}")
    if not (math.isfinite(h_max) and h_max > 0.0):
        raise MeshError(f"h_max must be positive and finite, got {h_max!r}")
    if h_max >= radius:
        raise MeshError(
            f"h_max={h_max!r} must be smaller than radius={radius!r} to resolve the disk"
        )

    spacing = h_max / math.sqrt(2.0)
    n_rings = max(2, math.ceil(radius / spacing))

    ring_start: list[int] = []
    ring_count: list[int] = []
    coords = [(0.0, 0.0)]
    for k in range(1, n_rings + 1):
        r = radius * k / n_rings
        # size the ring for the next ring's circumference: keeps the angular
        # mismatch of merge edges below spacing/r_next, so no edge exceeds
        # sqrt(dr^2 + spacing^2) <= h_max
        r_next = radius * min(k + 1, n_rings) / n_rings
        n_k = max(6, math.ceil(2.0 * math.pi * r_next / spacing))
        ring_start.append(len(coords))
        ring_count.append(n_k)
        for m in range(n_k):
            theta = 2.0 * math.pi * m / n_k
            coords.append((r * math.cos(theta), r * math.sin(theta)))
    vertices = np.array(coords, dtype=np.float64)

    tris: list[tuple[int, int, int]] = []
    # center fan
    s0, c0 = ring_start[0], ring_count[0]
    for m in range(c0):
        tris.append((0, s0 + m, s0 + (m + 1) % c0))
    # annuli between consecutive rings, merged by angle
    for k in range(1, n_rings):
        sa, na = ring_start[k - 1], ring_count[k - 1]
        sb, nb = ring_start[k], ring_count[k]
        i = j = 0
        while i < na or j < nb:
            advance_inner = j >= nb or (i < na and (i + 1) * nb <= (j + 1) * na)
            if advance_inner:
                tris.append((sa + i % na, sb + j % nb, sa + (i + 1) % na))
                i += 1
            else:
                tris.append((sa + i % na, sb + j % nb, sb + (j + 1) % nb))
                j += 1
    triangles = np.array(tris, dtype=np.int64)
    return _build_mesh(vertices, triangles)
