import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpet.elements import (MAX_QUADRATURE_DEGREE, eval_basis, lagrange_element, line_quadrature,
                           quadrature)


@pytest.mark.parametrize("degree", [1, 2])
def test_kronecker_property(degree):
    el = lagrange_element(degree)
    vals, _ = eval_basis(el, el.node_coords)
    np.testing.assert_allclose(vals, np.eye(el.node_count), atol=1e-15)


def test_p1_vertex_and_centroid():
    el = lagrange_element(1)
    v, _ = eval_basis(el, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(v, [1, 0, 0])
    v, _ = eval_basis(el, np.full(3, 1 / 3))
    np.testing.assert_allclose(v, [1 / 3] * 3, atol=1e-16)


def test_p2_midpoint_node():
    el = lagrange_element(2)
    v, _ = eval_basis(el, np.array([0.5, 0.5, 0.0]))
    expected = np.zeros(6)
    expected[5] = 1.0          # midpoint opposite vertex 2
    np.testing.assert_allclose(v, expected, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from([1, 2]))
def test_partition_of_unity(a, b, degree):
    x, y = a, b * (1 - a)
    v, g = eval_basis(lagrange_element(degree), np.array([1 - x - y, x, y]))
    assert abs(v.sum() - 1.0) < 1e-13
    np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-12)


def test_gradients_match_finite_differences():
    el = lagrange_element(2)
    x, y, h = 0.21, 0.33, 1e-6
    bary = lambda x, y: np.array([1 - x - y, x, y])
    _, g = eval_basis(el, bary(x, y))
    fd_x = (eval_basis(el, bary(x + h, y))[0] - eval_basis(el, bary(x - h, y))[0]) / (2 * h)
    fd_y = (eval_basis(el, bary(x, y + h))[0] - eval_basis(el, bary(x, y - h))[0]) / (2 * h)
    np.testing.assert_allclose(g[:, 0], fd_x, atol=1e-8)
    np.testing.assert_allclose(g[:, 1], fd_y, atol=1e-8)


def test_unsupported_degree():
    with pytest.raises(ValueError):
        lagrange_element(3)


def _integrate(f, degree):
    q = quadrature(degree)
    x, y = q.points[:, 1], q.points[:, 2]
    return float(q.weights @ f(x, y))


def test_area_and_linear_integrals():
    assert abs(_integrate(lambda x, y: np.ones_like(x), 0) - 0.5) < 1e-15
    assert abs(_integrate(lambda x, y: x + y, 2) - 1 / 3) < 1e-15


def test_x2y2_integral():
    assert abs(_integrate(lambda x, y: x**2 * y**2, 4) - 1 / 180) < 1e-15


@pytest.mark.parametrize("degree", range(MAX_QUADRATURE_DEGREE + 1))
def test_monomial_exactness(degree):
    # int_T x^a y^b = a! b! / (a + b + 2)!
    from math import factorial
    for a in range(degree + 1):
        b = degree - a
        exact = factorial(a) * factorial(b) / factorial(a + b + 2)
        assert abs(_integrate(lambda x, y: x**a * y**b, degree) - exact) < 1e-15


def test_quadrature_points_inside_triangle():
    q = quadrature(6)
    assert np.all(q.points > 0)
    assert np.allclose(q.points.sum(axis=1), 1.0)


def test_quadrature_degree_bounds():
    with pytest.raises(ValueError):
        quadrature(MAX_QUADRATURE_DEGREE + 1)


def test_line_quadrature():
    s, w = line_quadrature(5)
    assert abs(w.sum() - 1.0) < 1e-15
    assert abs(w @ s**5 - 1 / 6) < 1e-15
