import numpy as np
import pytest

from peakdescent.fields import Field
from peakdescent.mesh import build_structured_mesh, export_mesh_csv, nodal_interpolate


def signed_areas(mesh):
    p = mesh.vertices[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@pytest.mark.parametrize("n,nv,nt,m", [(2, 9, 8, 1), (4, 25, 32, 9)])
def test_counting_formulas(n, nv, nt, m):
    mesh = build_structured_mesh(n)
    assert mesh.num_vertices == nv
    assert mesh.num_triangles == nt
    assert mesh.num_dofs == m


def test_rejects_too_coarse():
    with pytest.raises(ValueError):
        build_structured_mesh(1)


@pytest.mark.parametrize("n", [2, 3, 8])
def test_triangle_areas_positive_and_uniform(n):
    mesh = build_structured_mesh(n)
    areas = signed_areas(mesh)
    assert np.all(areas > 0)  # counterclockwise orientation
    assert np.allclose(areas, 0.5 / n**2, rtol=0, atol=1e-16)
    assert abs(areas.sum() - 1.0) <= 1e-14


def test_n2_triangle_area_is_eighth():
    mesh = build_structured_mesh(2)
    assert np.allclose(signed_areas(mesh), 0.125, rtol=0, atol=1e-16)


@pytest.mark.parametrize("n", [2, 5])
def test_boundary_classification(n):
    mesh = build_structured_mesh(n)
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    on_edge = (x == 0) | (x == 1) | (y == 0) | (y == 1)
    assert np.array_equal(mesh.boundary_mask, on_edge)


@pytest.mark.parametrize("n", [2, 4, 7])
def test_euler_relation(n):
    mesh = build_structured_mesh(n)
    edges = set()
    for a, b, c in mesh.triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    assert mesh.num_vertices - len(edges) + mesh.num_triangles == 1


def test_interior_map_is_bijection(mesh8):
    m = mesh8
    assert np.array_equal(m.dof_of_vertex[m.vertex_of_dof], np.arange(m.num_dofs))
    interior = np.flatnonzero(m.dof_of_vertex >= 0)
    assert np.array_equal(np.sort(m.vertex_of_dof), interior)
    assert not np.any(m.boundary_mask[m.vertex_of_dof])


def test_deterministic_construction():
    a = build_structured_mesh(6)
    b = build_structured_mesh(6)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.vertex_of_dof, b.vertex_of_dof)


def test_interpolate_zero(mesh8):
    u = nodal_interpolate(mesh8, lambda x, y: 0.0 * x)
    assert np.all(u.data == 0.0)


def test_interpolate_bump_n2():
    mesh = build_structured_mesh(2)
    u = nodal_interpolate(mesh, lambda x, y: x * y * (1 - x) * (1 - y))
    assert u.data.shape == (1, 1)
    assert u.data[0, 0] == pytest.approx(1.0 / 16.0, abs=1e-16)


def test_interpolate_sine_center_n4():
    mesh = build_structured_mesh(4)
    u = nodal_interpolate(mesh, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    center = mesh.dof_of_vertex[np.flatnonzero(
        (mesh.vertices[:, 0] == 0.5) & (mesh.vertices[:, 1] == 0.5))[0]]
    assert u.data[0, center] == pytest.approx(1.0, abs=1e-15)


def test_interpolate_rejects_nonfinite(mesh8):
    with pytest.raises(ValueError):
        nodal_interpolate(mesh8, lambda x, y: np.where(x > 0.4, np.inf, 1.0))


def test_mesh_csv_roundtrip(tmp_path):
    mesh = build_structured_mesh(3)
    path = tmp_path / "mesh.csv"
    export_mesh_csv(mesh, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "index,x,y,is_boundary"
    vrows = lines[1:1 + mesh.num_vertices]
    assert lines[1 + mesh.num_vertices] == "v0,v1,v2"
    trows = lines[2 + mesh.num_vertices:]
    assert len(trows) == mesh.num_triangles
    got = np.array([[float(v) for v in row.split(",")[1:3]] for row in vrows])
    assert np.array_equal(got, mesh.vertices)
    tri = np.array([[int(v) for v in row.split(",")] for row in trows])
    assert np.array_equal(tri, mesh.triangles)


def test_field_validation(mesh8):
    with pytest.raises(ValueError):
        Field(mesh8, np.zeros((1, mesh8.num_dofs + 1)))
    with pytest.raises(ValueError):
        Field(mesh8, np.full((1, mesh8.num_dofs), np.nan))
    u = Field(mesh8, np.ones((2, mesh8.num_dofs)))
    with pytest.raises(AttributeError):
        u.data = None
    vv = u.vertex_values()
    assert vv.shape == (2, mesh8.num_vertices)
    assert np.all(vv[:, mesh8.boundary_mask] == 0.0)
