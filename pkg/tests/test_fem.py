"""Finite element kernels against exact formulas and dense oracles.

Every comparison here runs through a second, independent route: the
factorial formula for barycentric monomials, plane-fit gradients, or dense
loop assembly from conftest.  The library's quadrature never checks itself.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mras.fem import (
    CellField,
    FemError,
    NodalField,
    apply_dirichlet,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    boundary_flux_form,
    elementwise_gradient_dot,
    grad_coupling,
    l2_norm,
    load_vector,
    quad_cell_integral,
    quad_load,
    quad_point_values,
    transfer,
)
from mras.mesh import disk_mesh, rect_mesh

from conftest import (
    dense_mass,
    dense_stiffness,
    make_reference_triangle,
    p1_product_integral,
    plane_gradient,
)


def nodal(mesh, fn):
    return NodalField.from_callable(mesh, fn)


# ---------------------------------------------------------------------------
# reference-triangle matrices, known in closed form


def test_reference_mass_matrix():
    mesh = make_reference_triangle()
    expected = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 24.0
    assert np.allclose(assemble_mass(mesh).toarray(), expected, atol=1e-15)


def test_reference_stiffness_matrix():
    mesh = make_reference_triangle()
    expected = np.array(
        [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
    )
    assert np.allclose(assemble_stiffness(mesh).toarray(), expected, atol=1e-15)


def test_constant_weight_cubed_scales_mass_by_eight():
    mesh = make_reference_triangle()
    w = NodalField(mesh, np.full(3, 2.0))
    wm = assemble_weighted_mass(mesh, w, power=3)
    assert np.allclose(wm.toarray(), 8.0 * assemble_mass(mesh).toarray(), atol=1e-14)


# ---------------------------------------------------------------------------
# quadrature exactness through public entry points


def test_quadrature_exact_through_degree_four():
    mesh = rect_mesh(0.0, 1.3, -0.4, 1.0, 0.6)
    rng = np.random.default_rng(11)
    fields = [NodalField(mesh, rng.standard_normal(mesh.n_vertices)) for _ in range(4)]
    qvals = [quad_point_values(f) for f in fields]
    for k in range(1, 5):
        point_values = np.prod(qvals[:k], axis=0)
        got = quad_cell_integral(mesh, point_values)
        for t in range(mesh.n_triangles):
            tri = mesh.triangles[t]
            factors = [f.values[tri] for f in fields[:k]]
            want = p1_product_integral(mesh.element_areas[t], *factors)
            assert got[t] == pytest.approx(want, abs=1e-13, rel=1e-12)


def test_quad_load_matches_exact_integrals():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.6)
    rng = np.random.default_rng(12)
    a = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    b = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    load = quad_load(mesh, quad_point_values(a) * quad_point_values(b))
    # oracle: sum of per-element integrals of a*b*phi_i
    want = np.zeros(mesh.n_vertices)
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        for local, vertex in enumerate(tri):
            hat = np.zeros(3)
            hat[local] = 1.0
            want[vertex] += p1_product_integral(
                mesh.element_areas[t], a.values[tri], b.values[tri], hat
            )
    assert np.allclose(load, want, atol=1e-13)


# ---------------------------------------------------------------------------
# assembled operators against dense loop oracles


def test_mass_matches_dense_oracle():
    mesh = rect_mesh(-1.0, 1.0, 0.0, 1.0, 0.5)
    assert np.allclose(assemble_mass(mesh).toarray(), dense_mass(mesh), atol=1e-13)


def test_stiffness_matches_dense_oracle():
    mesh = rect_mesh(-1.0, 1.0, 0.0, 1.0, 0.5)
    assert np.allclose(
        assemble_stiffness(mesh).toarray(), dense_stiffness(mesh), atol=1e-12
    )


def test_coefficient_stiffness_matches_dense_oracle():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.4)
    rng = np.random.default_rng(13)
    coeff = CellField(mesh, rng.uniform(0.5, 3.0, mesh.n_triangles))
    assert np.allclose(
        assemble_stiffness(mesh, coeff).toarray(),
        dense_stiffness(mesh, coeff.values),
        atol=1e-12,
    )


def test_weighted_mass_against_exact_integrals():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.75)
    rng = np.random.default_rng(14)
    w = NodalField(mesh, rng.uniform(0.5, 2.0, mesh.n_vertices))
    for power in (1, 2):
        wm = assemble_weighted_mass(mesh, w, power=power).toarray()
        want = np.zeros_like(wm)
        for t in range(mesh.n_triangles):
            tri = mesh.triangles[t]
            wv = w.values[tri]
            for li in range(3):
                for lj in range(3):
                    hi, hj = np.zeros(3), np.zeros(3)
                    hi[li], hj[lj] = 1.0, 1.0
                    factors = [wv] * power + [hi, hj]
                    want[tri[li], tri[lj]] += p1_product_integral(
                        mesh.element_areas[t], *factors
                    )
        assert np.allclose(wm, want, atol=1e-13)


def test_weighted_mass_cubed_close_to_exact():
    # degree-5 integrand: the rule is an approximation, so only near-agreement
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.75)
    w = nodal(mesh, lambda x, y: 1.0 + 0.5 * x)
    wm = assemble_weighted_mass(mesh, w, power=3).toarray()
    want = np.zeros_like(wm)
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        wv = w.values[tri]
        for li in range(3):
            for lj in range(3):
                hi, hj = np.zeros(3), np.zeros(3)
                hi[li], hj[lj] = 1.0, 1.0
                want[tri[li], tri[lj]] += p1_product_integral(
                    mesh.element_areas[t], wv, wv, wv, hi, hj
                )
    assert np.allclose(wm, want, rtol=1e-3, atol=1e-6)


def test_weighted_mass_rejects_bad_power():
    mesh = make_reference_triangle()
    w = NodalField(mesh, np.ones(3))
    with pytest.raises(FemError):
        assemble_weighted_mass(mesh, w, power=4)


# ---------------------------------------------------------------------------
# gradient operators


def test_grad_coupling_with_unit_coefficient_is_stiffness_action():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.4)
    rng = np.random.default_rng(15)
    z = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    ones = CellField(mesh, np.ones(mesh.n_triangles))
    got = grad_coupling(mesh, z).apply(ones)
    want = assemble_stiffness(mesh).matvec(z.values)
    assert np.allclose(got, want, atol=1e-13)


def test_grad_coupling_general_coefficient():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.4)
    rng = np.random.default_rng(16)
    z = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    a = CellField(mesh, rng.uniform(-2.0, 2.0, mesh.n_triangles))
    got = grad_coupling(mesh, z).apply(a)
    want = assemble_stiffness(mesh, a).matvec(z.values)
    assert np.allclose(got, want, atol=1e-13)


def test_elementwise_gradient_dot_linear_fields():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.5)
    z = nodal(mesh, lambda x, y: x)
    w = nodal(mesh, lambda x, y: 2.0 * x)
    dots = elementwise_gradient_dot(z, w)
    assert np.allclose(dots.values, 2.0, atol=1e-14)


def test_elementwise_gradient_dot_against_plane_fit():
    mesh = rect_mesh(-1.0, 0.5, 0.0, 2.0, 0.7)
    rng = np.random.default_rng(17)
    z = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    w = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    dots = elementwise_gradient_dot(z, w).values
    for t in range(mesh.n_triangles):
        tri = mesh.triangles[t]
        pts = mesh.vertices[tri]
        gz = plane_gradient(pts, z.values[tri])
        gw = plane_gradient(pts, w.values[tri])
        assert dots[t] == pytest.approx(float(gz @ gw), rel=1e-11, abs=1e-12)


def test_boundary_flux_of_linear_field():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, math.sqrt(2.0))
    flux = boundary_flux_form(nodal(mesh, lambda x, y: x))
    # grad z = (1, 0): one unit of outflow on the right, inflow on the left
    assert np.allclose(np.sort(flux.values), [-1.0, 1.0], atol=1e-14)
    assert flux.values.sum() == pytest.approx(0.0, abs=1e-14)


def test_boundary_flux_interior_elements_zero():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.3)
    flux = boundary_flux_form(nodal(mesh, lambda x, y: x * x + 0.3 * y))
    on_boundary = np.zeros(mesh.n_triangles, dtype=bool)
    on_boundary[mesh.boundary_edges[:, 2]] = True
    assert np.all(flux.values[~on_boundary] == 0.0)


# ---------------------------------------------------------------------------
# loads, norms, transfer


def test_load_vector_is_mass_times_values():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.4)
    rng = np.random.default_rng(18)
    f = NodalField(mesh, rng.standard_normal(mesh.n_vertices))
    want = dense_mass(mesh) @ f.values
    assert np.allclose(load_vector(mesh, f), want, atol=1e-13)


def test_l2_norm_of_coordinate_field():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.3)
    assert l2_norm(nodal(mesh, lambda x, y: x)) == pytest.approx(
        1.0 / math.sqrt(3.0), rel=1e-12
    )


def test_l2_norm_of_cell_field():
    mesh = rect_mesh(0.0, 2.0, 0.0, 1.0, 0.5)
    rng = np.random.default_rng(19)
    v = rng.standard_normal(mesh.n_triangles)
    want = math.sqrt(float(np.sum(mesh.element_areas * v**2)))
    assert l2_norm(CellField(mesh, v)) == pytest.approx(want, rel=1e-13)


def test_transfer_affine_exact():
    fine = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.11)
    coarse = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.45)
    field = nodal(fine, lambda x, y: 2.0 * x - 3.0 * y + 0.5)
    moved = transfer(field, coarse)
    want = 2.0 * coarse.vertices[:, 0] - 3.0 * coarse.vertices[:, 1] + 0.5
    assert np.allclose(moved.values, want, atol=1e-12)


def test_transfer_same_mesh_copies():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.5)
    f = nodal(mesh, lambda x, y: x * y)
    moved = transfer(f, mesh)
    assert moved is not f
    assert np.array_equal(moved.values, f.values)


def test_transfer_rejects_outside_targets():
    src = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.3)
    target = rect_mesh(0.0, 2.0, 0.0, 1.0, 0.5)
    with pytest.raises(FemError):
        transfer(nodal(src, lambda x, y: x), target)


def test_transfer_disk_rims_within_tolerance():
    fine = disk_mesh(1.0, 0.15)
    coarse = disk_mesh(1.0, 0.35)
    field = nodal(fine, lambda x, y: x + 0.5 * y)
    # coarse rim vertices sit slightly outside the finer inscribed polygon
    chord = 0.15
    moved = transfer(field, coarse, tol=chord * chord / 2.0)
    want = coarse.vertices[:, 0] + 0.5 * coarse.vertices[:, 1]
    assert np.allclose(moved.values, want, atol=1e-2)


# ---------------------------------------------------------------------------
# Dirichlet elimination


def test_dirichlet_matches_dense_elimination():
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.3)
    rng = np.random.default_rng(20)
    system = assemble_stiffness(mesh) + assemble_mass(mesh)
    rhs = rng.standard_normal(mesh.n_vertices)
    bvals = rng.standard_normal(mesh.n_vertices)
    reduced = apply_dirichlet(system, rhs, mesh.boundary_vertex_flags, bvals)
    x, report = reduced.solve(tol=1e-13)
    assert report.converged

    dense = dense_stiffness(mesh) + dense_mass(mesh)
    bnd = np.flatnonzero(mesh.boundary_vertex_flags)
    inner = np.flatnonzero(~mesh.boundary_vertex_flags)
    want = np.empty(mesh.n_vertices)
    want[bnd] = bvals[bnd]
    want[inner] = np.linalg.solve(
        dense[np.ix_(inner, inner)],
        rhs[inner] - dense[np.ix_(inner, bnd)] @ bvals[bnd],
    )
    assert np.allclose(x, want, atol=1e-9)


def test_dirichlet_affine_solution_recovered_exactly():
    # harmonic affine data: the interior solve must reproduce the plane
    mesh = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.25)
    plane = 1.5 * mesh.vertices[:, 0] - 0.75 * mesh.vertices[:, 1] + 2.0
    stiff = assemble_stiffness(mesh)
    reduced = apply_dirichlet(
        stiff, np.zeros(mesh.n_vertices), mesh.boundary_vertex_flags, plane
    )
    x, report = reduced.solve(tol=1e-13)
    assert report.converged
    assert np.allclose(x, plane, atol=1e-9)


def test_dirichlet_all_boundary_is_pure_lookup():
    mesh = make_reference_triangle()
    system = assemble_mass(mesh)
    reduced = apply_dirichlet(system, np.zeros(3), mesh.boundary_vertex_flags, 7.0)
    x, report = reduced.solve()
    assert report is None
    assert np.array_equal(x, np.full(3, 7.0))


def test_dirichlet_shape_validation():
    mesh = make_reference_triangle()
    system = assemble_mass(mesh)
    with pytest.raises(FemError):
        apply_dirichlet(system, np.zeros(2), mesh.boundary_vertex_flags)
    with pytest.raises(FemError):
        apply_dirichlet(system, np.zeros(3), np.array([True, False]))
    with pytest.raises(FemError):
        apply_dirichlet(system, np.zeros(3), mesh.boundary_vertex_flags, np.zeros(2))


# ---------------------------------------------------------------------------
# field validation


def test_field_shape_and_finiteness_checks():
    mesh = make_reference_triangle()
    with pytest.raises(FemError):
        NodalField(mesh, np.zeros(4))
    with pytest.raises(FemError):
        NodalField(mesh, np.array([0.0, np.nan, 1.0]))
    with pytest.raises(FemError):
        CellField(mesh, np.zeros(2))
    with pytest.raises(FemError):
        CellField(mesh, np.array([np.inf]))


def test_mixed_mesh_fields_rejected():
    a = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.5)
    b = rect_mesh(0.0, 1.0, 0.0, 1.0, 0.5)
    z = NodalField(a, np.zeros(a.n_vertices))
    w = NodalField(b, np.zeros(b.n_vertices))
    with pytest.raises(FemError):
        elementwise_gradient_dot(z, w)
    with pytest.raises(FemError):
        load_vector(a, w)


# ---------------------------------------------------------------------------
# structural properties


@settings(max_examples=25, deadline=None)
@given(h=st.floats(0.25, 0.9), wx=st.floats(0.5, 2.0), seed=st.integers(0, 9999))
def test_operator_structure(h, wx, seed):
    mesh = rect_mesh(0.0, wx, 0.0, 1.0, h)
    mass = assemble_mass(mesh).toarray()
    stiff = assemble_stiffness(mesh).toarray()
    assert np.allclose(mass, mass.T, atol=1e-14)
    assert np.allclose(stiff, stiff.T, atol=1e-14)
    # stiffness annihilates constants and is positive semidefinite
    assert np.allclose(stiff @ np.ones(mesh.n_vertices), 0.0, atol=1e-12)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mesh.n_vertices)
    assert float(v @ stiff @ v) >= -1e-11
    assert float(v @ mass @ v) > 0.0 or not np.any(v)
    # mass row sums add up to the domain area
    assert float(mass.sum()) == pytest.approx(wx * 1.0, rel=1e-12)
