import numpy as np
import pytest

from mpet.mesh import WHOLE, build_annulus_mesh, build_unit_square_mesh, refine_uniform
from mpet.spaces import (FEFunction, FESpace, SpaceError, interpolate, make_standard_spaces,
                         make_taylor_hood_spaces)
from mpet.verify import error_norms


def test_taylor_hood_sizes(mesh4):
    V, Q0, Q1, Q2 = make_taylor_hood_spaces(mesh4, 2, {"u": [WHOLE], "p": [WHOLE]})
    assert V.ndofs == 2 * (25 + 56) == 162
    assert Q0.ndofs == Q1.ndofs == Q2.ndofs == 25
    assert Q0.constrained_dofs.size == 0
    assert Q1.constrained_dofs.size == Q2.constrained_dofs.size == 16


def test_four_networks_give_six_spaces(mesh4):
    assert len(make_taylor_hood_spaces(mesh4, 4)) == 6
    assert len(make_standard_spaces(mesh4, 4)) == 5


def test_p2_dofs_equal_vertices_plus_edges(mesh4):
    Q = FESpace(mesh4, 2)
    assert Q.ndofs == mesh4.num_vertices + mesh4.num_edges


def test_constrained_dofs_are_exactly_the_boundary_nodes(mesh4):
    V = FESpace(mesh4, 2, 2, constrained_tags=[WHOLE])
    xy = V.node_coords
    on_boundary = np.isclose(xy, 0).any(axis=1) | np.isclose(xy, 1).any(axis=1)
    nodes = np.nonzero(on_boundary)[0]
    expected = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
    np.testing.assert_array_equal(V.constrained_dofs, expected)
    assert V.constrained_dofs.size == 2 * (16 + 16)


def test_shared_edges_share_dofs(mesh4):
    V = FESpace(mesh4, 2)
    # the midpoint node of every interior edge is referenced by both adjacent cells
    counts = np.bincount(V.cell_nodes[:, 3:].ravel() - mesh4.num_vertices)
    interior = np.bincount(mesh4.cell_edges.ravel()) == 2
    assert np.all(counts[interior] == 2)


def test_unknown_tag_rejected(mesh4):
    with pytest.raises(SpaceError, match="unknown boundary tag"):
        FESpace(mesh4, 1, constrained_tags=[7])


def test_unknown_field_in_dirichlet_spec(mesh4):
    with pytest.raises(SpaceError):
        make_taylor_hood_spaces(mesh4, 2, {"p3": [WHOLE]})


def test_interpolate_constant_and_affine(mesh4):
    Q = FESpace(mesh4, 1)
    assert np.all(interpolate(Q, 1.0).coefficients == 1.0)
    f = interpolate(Q, lambda x, t: x[0] + x[1])
    rng = np.random.default_rng(0)
    for cell in rng.integers(0, mesh4.num_cells, 10):
        b = rng.dirichlet(np.ones(3))
        x = b @ mesh4.vertices[mesh4.cells[cell]]
        assert abs(f.eval_in_cell(cell, b) - x.sum()) < 1e-14


def test_vector_interpolation_layout(mesh4):
    V = FESpace(mesh4, 2, 2)
    f = interpolate(V, lambda x, t: np.stack([x[0], -x[1]]))
    np.testing.assert_allclose(f.coefficients[0::2], V.node_coords[:, 0])
    np.testing.assert_allclose(f.coefficients[1::2], -V.node_coords[:, 1])
    assert np.all(interpolate(V, 0.0).coefficients == 0.0)


def test_p2_interpolation_converges_at_order_three():
    m = build_unit_square_mesh(4)
    fn = lambda x, t: np.sin(np.pi * x[0]) * np.sin(np.pi * x[1])
    errs = []
    for _ in range(3):
        errs.append(error_norms(interpolate(FESpace(m, 2), fn), fn)[0])
        m = refine_uniform(m)
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(rates - 3.0) < 0.15)


def test_gradients_of_quadratic_are_exact(mesh4):
    Q = FESpace(mesh4, 2)
    f = interpolate(Q, lambda x, t: x[0] ** 2 - 3 * x[0] * x[1])
    from mpet.elements import quadrature
    q = quadrature(4)
    _, g = f.eval_at_quadrature(q.points, grad=True)
    X = mesh4.map_points(q.points)
    np.testing.assert_allclose(g[0], 2 * X[0] - 3 * X[1], atol=1e-12)
    np.testing.assert_allclose(g[1], -3 * X[0], atol=1e-12)


def test_annulus_spaces_tagging():
    m = build_annulus_mesh(30, 100, 3)
    V, Q0, Q1 = make_taylor_hood_spaces(m, 1, {"u": [2], "p1": [2, 3]})
    nodes = V.constrained_dofs[::2] // 2
    r = np.linalg.norm(V.node_coords[nodes], axis=1)
    chord = 100.0 * np.cos(np.pi / (m.num_facets // 2))   # midpoint of an outer facet
    assert np.all((np.isclose(r, 100.0)) | np.isclose(r, chord))
    assert Q1.constrained_dofs.size == 2 * (m.num_facets // 2)


def test_coefficient_length_checked(mesh4):
    with pytest.raises(SpaceError):
        FEFunction(FESpace(mesh4, 1), np.zeros(3))
