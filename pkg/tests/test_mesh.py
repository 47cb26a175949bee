import numpy as np
import pytest

from plateflow import mesh as pm


def assert_mesh_sound(m, holes):
    areas = m.triangle_areas
    assert (areas > 1e-14 * m.h_max**2).all()
    # conformity: every edge belongs to one or two triangles
    interior = m.edge_triangles[:, 1] >= 0
    assert (interior == ~m.boundary_edges).all()
    # unit tangents/normals, orthogonal
    assert np.allclose(np.linalg.norm(m.edge_tangents, axis=1), 1.0)
    assert np.allclose(np.linalg.norm(m.edge_normals, axis=1), 1.0)
    assert np.allclose((m.edge_tangents * m.edge_normals).sum(axis=1), 0.0)
    assert m.euler_characteristic == 1 - holes
    assert 0 < m.h_min <= m.h_max


@pytest.mark.parametrize("pattern", ["nonsymmetric", "symmetric"])
@pytest.mark.parametrize("level", [0, 1, 2, 3, 4, 5])
def test_rectangle_generation(level, pattern):
    m = pm.generate_rectangle_mesh(level, pattern)
    h = 2.0 ** (-level)
    assert m.num_triangles == round(2 * 40 / h**2)
    assert np.isclose(m.domain_area, 40.0)
    assert np.isclose(m.h_max, h * np.sqrt(2.0))
    assert np.isclose(m.h_min, m.h_max)
    assert_mesh_sound(m, holes=0)


def test_rectangle_level3_has_5120_triangles():
    # published benchmark resolution
    for pattern in ("nonsymmetric", "symmetric"):
        assert pm.generate_rectangle_mesh(3, pattern).num_triangles == 5120


@pytest.mark.parametrize("level,count", [(1, 192), (2, 768), (3, 3072),
                                         (4, 12288), (5, 49152)])
def test_oshape_triangle_counts(level, count):
    m = pm.generate_oshape_mesh(level, "symmetric")
    assert m.num_triangles == count
    assert np.isclose(m.domain_area, 24.0)
    assert_mesh_sound(m, holes=1)


def test_oshape_level0_valid():
    assert_mesh_sound(pm.generate_oshape_mesh(0, "nonsymmetric"), holes=1)


def test_generation_is_deterministic():
    a = pm.generate_rectangle_mesh(2, "symmetric")
    b = pm.generate_rectangle_mesh(2, "symmetric")
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.edges, b.edges)


def test_counterclockwise_orientation():
    m = pm.generate_oshape_mesh(1, "symmetric")
    assert (m.triangle_areas > 0).all()


def test_edge_conventions():
    # t points from the lower to the higher vertex index, n is t rotated +90
    m = pm.generate_rectangle_mesh(0)
    lo = m.vertices[m.edges[:, 0]]
    hi = m.vertices[m.edges[:, 1]]
    d = hi - lo
    lengths = np.linalg.norm(d, axis=1)
    assert np.allclose(m.edge_tangents, d / lengths[:, None])
    rot = np.stack([-m.edge_tangents[:, 1], m.edge_tangents[:, 0]], axis=1)
    assert np.allclose(m.edge_normals, rot)
    assert np.allclose(m.edge_midpoints, 0.5 * (lo + hi))


def test_horizontal_unit_edge_geometry():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = pm.build_edge_data(verts, np.array([[0, 1, 2]]))
    e = next(i for i in range(m.num_edges) if tuple(m.edges[i]) == (0, 1))
    assert np.allclose(m.edge_tangents[e], [1.0, 0.0])
    assert np.allclose(m.edge_normals[e], [0.0, 1.0])
    assert np.allclose(m.edge_midpoints[e], [0.5, 0.0])


def test_build_edge_data_rejects_nonconforming():
    verts = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [-1, 1.0]])
    tris = np.array([[0, 1, 2], [1, 3, 2], [0, 2, 4], [0, 1, 2]])  # edge (0,1) x2... (0,2) x3
    with pytest.raises(pm.MeshError):
        pm.build_edge_data(verts, tris)


def test_build_edge_data_rejects_clockwise():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(pm.MeshError):
        pm.build_edge_data(verts, np.array([[0, 2, 1]]))


def test_dirichlet_tagging_left_edge():
    m = pm.generate_rectangle_mesh(3)
    t = pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, 2.0))])
    assert int(t.dirichlet_edges.sum()) == 32  # side length 4 / h
    assert (t.boundary_edges[t.dirichlet_edges]).all()
    # vertices: endpoints of tagged edges
    assert len(t.dirichlet_vertices) == 33
    assert np.allclose(m.vertices[t.dirichlet_vertices][:, 0], -5.0)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_oshape_corner_clamp_edge_count(level):
    m = pm.generate_oshape_mesh(level, "symmetric")
    t = pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, -1.0)),
                                      ((-5.0, -2.0), (-4.0, -2.0))])
    assert int(t.dirichlet_edges.sum()) == 2 * 2**level


def test_empty_segment_list_tags_nothing():
    m = pm.generate_rectangle_mesh(1)
    t = pm.tag_dirichlet_boundary(m, [])
    assert int(t.dirichlet_edges.sum()) == 0
    assert len(t.dirichlet_vertices) == 0


def test_unresolved_segment_rejected():
    m = pm.generate_rectangle_mesh(1)
    # interior line: no boundary edges there
    with pytest.raises(pm.MeshError):
        pm.tag_dirichlet_boundary(m, [((0.0, -2.0), (0.0, 2.0))])
    # off-grid endpoints do not cover the segment exactly
    with pytest.raises(pm.MeshError):
        pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, 0.3))])


def test_oshape_dof_count_matches_published_run():
    # the finest benchmark triangulation: 49152 triangles, 227511 free dofs
    m = pm.generate_oshape_mesh(5, "symmetric")
    t = pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, -1.0)),
                                      ((-5.0, -2.0), (-4.0, -2.0))])
    free = m.num_vertices - len(t.dirichlet_vertices)
    assert 9 * free == 227511


def test_save_load_roundtrip(tmp_path):
    m = pm.generate_oshape_mesh(1, "symmetric")
    m = pm.tag_dirichlet_boundary(m, [((-5.0, -2.0), (-5.0, -1.0)),
                                      ((-5.0, -2.0), (-4.0, -2.0))])
    path = tmp_path / "mesh.txt"
    pm.save_mesh(m, path)
    back = pm.load_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    assert np.array_equal(back.dirichlet_edges, m.dirichlet_edges)
    header = path.read_text().splitlines()[0]
    assert header == f"vertices {m.num_vertices} triangles {m.num_triangles}"


def test_save_is_bit_stable(tmp_path):
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    pm.save_mesh(pm.generate_rectangle_mesh(2, "symmetric"), p1)
    pm.save_mesh(pm.generate_rectangle_mesh(2, "symmetric"), p2)
    assert p1.read_bytes() == p2.read_bytes()
