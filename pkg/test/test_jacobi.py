import math

import numpy as np

from beamlab.geodesics import integrate_geodesic
from beamlab.jacobi import conjugate_points, jacobi_along, order_of_conjugacy
from beamlab.manifold import make_model


def _equator(m, length):
    x = np.full(m.dim, math.pi / 2.0)
    x[-1] = 1.0
    v = np.zeros(m.dim)
    v[-1] = 1.0
    return x, integrate_geodesic(m, x, v, t_span=(0.0, length))


def test_flat_fields_grow_linearly():
    m = make_model('torus2')
    path = integrate_geodesic(m, [1.0, 1.0], [1.0, 0.0], t_span=(0.0, 4.0))
    a, da, b, db = jacobi_along(path).at(2.5)
    assert np.allclose(a, np.eye(1))
    assert np.allclose(b, 2.5 * np.eye(1))
    assert conjugate_points(path) == []


def test_round_sphere_first_conjugate_point():
    m = make_model('sphere2')
    _, path = _equator(m, 1.5 * math.pi)
    points = conjugate_points(jacobi_along(path))
    assert abs(points[0][0] - math.pi) < 1e-6
    assert points[0][1] == 1


def test_three_sphere_conjugate_order():
    m = make_model('sphere3')
    _, path = _equator(m, 1.5 * math.pi)
    points = conjugate_points(jacobi_along(path))
    assert abs(points[0][0] - math.pi) < 1e-6
    assert points[0][1] == 2


def test_integrated_jacobi_matches_closed_form():
    m = make_model('sphere-patch')
    x = np.array([math.pi / 2.0, 1.0])
    path = integrate_geodesic(m, x, [0.0, 1.0], t_span=(0.0, 2.0))
    solution = jacobi_along(path, closed_form=False)
    b = solution.at(1.7)[2]
    assert abs(b[0, 0] - math.sin(1.7)) < 1e-6


def test_order_of_conjugacy_sphere_and_torus():
    x, _ = _equator(make_model('sphere2'), 1.0)
    assert order_of_conjugacy(make_model('sphere2'), x, directions=8) == 1
    assert order_of_conjugacy(make_model('torus2'), np.array([1.0, 1.0]), directions=8) == 0
