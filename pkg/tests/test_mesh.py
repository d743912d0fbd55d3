import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mini_sns.mesh import (
    ancestor_map,
    build_structured_square,
    mesh_hierarchy,
    read_mesh,
    refine_uniform,
    unit_square_level,
    write_mesh,
)


def test_single_cell_counts():
    m = build_structured_square(1)
    assert (m.n_vertices, m.n_triangles) == (4, 2)
    assert m.h == pytest.approx(np.sqrt(2.0))


def test_two_cells_counts_and_area():
    m = build_structured_square(2)
    assert (m.n_vertices, m.n_triangles) == (9, 8)
    assert m.signed_areas().sum() == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_rejects_bad_subdivision(bad):
    with pytest.raises(ValueError):
        build_structured_square(bad)


@given(st.integers(1, 12))
@settings(max_examples=12, deadline=None)
def test_structured_square_invariants(n):
    m = build_structured_square(n)
    m.validate()
    assert m.n_vertices == (n + 1) ** 2 and m.n_triangles == 2 * n * n
    assert m.h == pytest.approx(np.sqrt(2.0) / n)
    corners = [0, n, n * (n + 1), (n + 1) ** 2 - 1]
    assert m.boundary_vertex[corners].all()
    on_edge = np.isclose(m.vertices, 0.0).any(axis=1) | np.isclose(m.vertices, 1.0).any(axis=1)
    np.testing.assert_array_equal(on_edge, m.boundary_vertex)


def test_refinement_counts_and_sizes():
    m = build_structured_square(3)
    edges, _ = m.edges()
    r = refine_uniform(m)
    r.validate()
    assert r.n_triangles == 4 * m.n_triangles
    assert r.n_vertices == m.n_vertices + len(edges)
    assert r.h == pytest.approx(m.h / 2.0, rel=1e-15)
    assert r.diameters().max() == pytest.approx(r.h, rel=1e-14)
    assert r.signed_areas().sum() == pytest.approx(m.signed_areas().sum(), rel=1e-14)


def test_children_are_congruent():
    m = build_structured_square(2)
    r = refine_uniform(m)
    child = np.abs(r.signed_areas()).reshape(-1, 4)
    np.testing.assert_allclose(child, np.broadcast_to(np.abs(m.signed_areas())[:, None] / 4.0, child.shape), rtol=1e-14)


def test_hierarchy_is_quasi_uniform():
    meshes = mesh_hierarchy(5)
    ratios = [m.shape_ratio() for m in meshes]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)
    for lev, m in enumerate(meshes):
        assert m.level == lev
        assert m.h == pytest.approx(np.sqrt(2.0) * 2.0**-lev, rel=1e-15)


def test_ancestor_map_contains_children():
    fine = unit_square_level(3)
    coarse = unit_square_level(1)
    anc = ancestor_map(fine, 1)
    centroids = fine.vertices[fine.triangles].mean(axis=1)
    # every fine centroid lies inside its ancestor
    p = coarse.vertices[coarse.triangles[anc]]
    for k in range(3):
        a, b = p[:, k], p[:, (k + 1) % 3]
        cross = (b[:, 0] - a[:, 0]) * (centroids[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (centroids[:, 0] - a[:, 0])
        assert np.all(cross > 0)


def test_mesh_is_immutable():
    m = build_structured_square(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 3.0


def test_mesh_dump_roundtrip(tmp_path):
    m = unit_square_level(2)
    write_mesh(m, tmp_path / "m.txt")
    r = read_mesh(tmp_path / "m.txt", level=2)
    np.testing.assert_array_equal(r.vertices, m.vertices)
    np.testing.assert_array_equal(r.triangles, m.triangles)
    np.testing.assert_array_equal(r.boundary_vertex, m.boundary_vertex)
    assert r.h == pytest.approx(m.h)
