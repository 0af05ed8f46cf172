from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnsdg.elements import map_to_physical, reference_basis, triangle_rule


def _monomial_moment(a, b):
    # int_T x^a y^b over the reference triangle = a! b! / (a+b+2)!
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def test_degree1_is_centroid():
    r = triangle_rule(1)
    assert len(r) == 1
    np.testing.assert_allclose(r.points, [[1 / 3, 1 / 3, 1 / 3]])
    assert r.weights[0] == pytest.approx(0.5)


@pytest.mark.parametrize("deg", range(1, 11))
def test_weights_sum_and_positive_interior(deg):
    r = triangle_rule(deg)
    assert r.weights.sum() == pytest.approx(0.5, rel=1e-14)
    assert np.all(r.weights > 0)
    assert np.all(r.points > 0)
    np.testing.assert_allclose(r.points.sum(axis=1), 1.0, rtol=1e-14)


@pytest.mark.parametrize("deg", range(1, 11))
def test_exactness(deg):
    r = triangle_rule(deg)
    x, y = r.ref_points.T
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            assert np.dot(r.weights, x**a * y**b) == pytest.approx(_monomial_moment(a, b), rel=1e-12, abs=1e-15)


def test_degree5_x2y3():
    r = triangle_rule(5)
    x, y = r.ref_points.T
    assert np.dot(r.weights, x**2 * y**3) == pytest.approx(2 * 6 / factorial(7), rel=1e-13)


def test_map_identity():
    r = triangle_rule(4)
    pts, w = map_to_physical(np.array([[0, 0], [1, 0], [0, 1]], float), r)
    np.testing.assert_allclose(pts, r.ref_points, atol=1e-15)
    np.testing.assert_allclose(w, r.weights)


def test_map_integral_x():
    pts, w = map_to_physical(np.array([[0, 0], [1, 0], [0, 1]], float), triangle_rule(2))
    assert np.dot(w, pts[:, 0]) == pytest.approx(1 / 6, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_map_area(coords):
    tri = np.array(coords).reshape(3, 2)
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    if area < 1e-3:
        return
    _, w = map_to_physical(tri, triangle_rule(3))
    assert w.sum() == pytest.approx(area, rel=1e-12)


@pytest.mark.parametrize("deg", [1, 2])
def test_nodal_basis(deg):
    b = reference_basis(deg)
    vals = b.values(b.nodes)
    np.testing.assert_allclose(vals, np.eye(b.n_funcs), atol=1e-13)
    r = triangle_rule(6)
    np.testing.assert_allclose(b.values(r.ref_points).sum(axis=1), 1.0, atol=1e-13)


def test_p1_reproduces_affine(rng):
    b = reference_basis(1)
    tri = np.array([[0.2, -0.1], [1.3, 0.4], [0.1, 0.9]])
    f = lambda x: 1.5 - 2.0 * x[..., 0] + 0.7 * x[..., 1]
    coef = f(tri)  # nodal values at the vertices
    r = triangle_rule(6)
    pts, _ = map_to_physical(tri, r)
    np.testing.assert_allclose(b.values(r.ref_points) @ coef, f(pts), atol=1e-13)


def test_mass_exact():
    b = reference_basis(1)
    np.testing.assert_allclose(b.mass(), (np.ones((3, 3)) + np.eye(3)) / 24, rtol=1e-13)


def test_gradients_fd():
    b = reference_basis(2)
    xi = np.array([[0.2, 0.3], [0.1, 0.6]])
    g = b.gradients(xi)
    eps = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        fd = (b.values(xi + e) - b.values(xi - e)) / (2 * eps)
        np.testing.assert_allclose(g[..., d], fd, atol=1e-8)
