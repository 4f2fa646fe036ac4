import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpet.mesh import (SKULL, VENTRICLE, WHOLE, Mesh, MeshError, build_annulus_mesh,
                       build_unit_square_mesh, read_mesh, refine_uniform, write_mesh)


def test_unit_square_counts(mesh4):
    assert mesh4.num_vertices == 25
    assert mesh4.num_cells == 32
    assert mesh4.num_facets == 16
    assert mesh4.num_edges == 56
    assert mesh4.tags == {WHOLE}


def test_minimal_square():
    m = build_unit_square_mesh(1)
    assert (m.num_vertices, m.num_cells) == (4, 2)


@pytest.mark.parametrize("diagonal", ["right", "left"])
def test_area_sums_to_one(diagonal):
    m = build_unit_square_mesh(8, diagonal=diagonal)
    assert abs(m.cell_areas.sum() - 1.0) < 1e-14
    assert np.all(m.cell_areas > 0)


def test_right_diagonal_runs_lower_left_to_upper_right():
    m = build_unit_square_mesh(1)
    shared = set(m.cells[0]) & set(m.cells[1])
    pts = {tuple(m.vertices[v]) for v in shared}
    assert pts == {(0.0, 0.0), (1.0, 1.0)}
    left = build_unit_square_mesh(1, diagonal="left")
    shared = set(left.cells[0]) & set(left.cells[1])
    assert {tuple(left.vertices[v]) for v in shared} == {(1.0, 0.0), (0.0, 1.0)}


def test_refinement_quadruples_and_preserves_area(mesh4):
    r = refine_uniform(mesh4)
    assert r.num_cells == 128
    assert abs(r.area - 1.0) < 1e-14
    assert r.tags == {WHOLE}


def test_double_refinement_matches_direct_mesh(mesh4):
    r = refine_uniform(refine_uniform(mesh4))
    d = build_unit_square_mesh(16)
    a = np.array(sorted(map(tuple, np.round(r.vertices, 14))))
    b = np.array(sorted(map(tuple, np.round(d.vertices, 14))))
    np.testing.assert_array_equal(a, b)
    # same diagonals too: identical cell sets by coordinates
    key = lambda m: sorted(tuple(sorted(map(tuple, np.round(m.vertices[c], 14)))) for c in m.cells)
    assert key(r) == key(d)


def test_euler_characteristic(mesh4):
    assert mesh4.euler_characteristic == 1
    ann = build_annulus_mesh(30, 100, 4)
    assert ann.euler_characteristic == 0


def test_annulus_area_and_tags():
    m = build_annulus_mesh(30.0, 100.0, 10)
    exact = np.pi * (100.0**2 - 30.0**2)
    assert abs(m.area - exact) / exact < 0.02
    assert set(np.unique(m.facet_tags)) == {SKULL, VENTRICLE}
    r = np.linalg.norm(m.vertices[m.facets], axis=2)
    assert np.allclose(r[m.facet_tags == SKULL], 100.0)
    assert np.allclose(r[m.facet_tags == VENTRICLE], 30.0)


@pytest.mark.parametrize("ri,ro", [(50, 50), (60, 50), (0, 10)])
def test_annulus_rejects_degenerate_radii(ri, ro):
    with pytest.raises(ValueError):
        build_annulus_mesh(ri, ro, 4)


def test_round_trip(tmp_path, mesh4):
    p = tmp_path / "m.txt"
    write_mesh(mesh4, p)
    assert read_mesh(p).same_as(mesh4)


def test_read_rejects_out_of_range_vertex(tmp_path, mesh4):
    p = tmp_path / "m.txt"
    write_mesh(mesh4, p)
    lines = p.read_text().splitlines()
    i = lines.index("cells 32") + 1
    lines[i] = "0 1 99"
    p.write_text("\n".join(lines))
    with pytest.raises(MeshError, match="out of range"):
        read_mesh(p)


def test_read_rejects_clockwise_cell(tmp_path, mesh4):
    p = tmp_path / "m.txt"
    write_mesh(mesh4, p)
    lines = p.read_text().splitlines()
    i = lines.index("cells 32") + 6
    a, b, c = lines[i].split()
    lines[i] = f"{a} {c} {b}"
    p.write_text("\n".join(lines))
    with pytest.raises(MeshError, match="cell 5"):
        read_mesh(p)


def test_constructor_rejects_missing_boundary_facet(mesh4):
    with pytest.raises(MeshError, match="boundary edges"):
        Mesh(mesh4.vertices, mesh4.cells, mesh4.facets[:-1], mesh4.facet_tags[:-1])


def test_constructor_rejects_interior_facet(mesh4):
    interior = mesh4.edges[np.bincount(mesh4.cell_edges.ravel()) == 2][0]
    facets = np.vstack([mesh4.facets, interior])
    with pytest.raises(MeshError):
        Mesh(mesh4.vertices, mesh4.cells, facets, np.append(mesh4.facet_tags, WHOLE))


def test_facet_cells_contain_facet(mesh4):
    for f, (cell, local) in zip(mesh4.facets, mesh4.facet_cells):
        verts = set(mesh4.cells[cell]) - {mesh4.cells[cell][local]}
        assert verts == set(f)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 6), levels=st.integers(0, 2))
def test_refined_meshes_stay_valid(n, levels):
    m = build_unit_square_mesh(n)
    for _ in range(levels):
        m = refine_uniform(m)
    assert m.num_cells == 2 * n * n * 4**levels
    assert m.num_facets == 4 * n * 2**levels
    assert abs(m.area - 1.0) < 1e-13
    assert m.euler_characteristic == 1
