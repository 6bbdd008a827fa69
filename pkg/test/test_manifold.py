import math

import numpy as np
import pytest

from beamlab.errors import CapabilityError, DomainError, PreconditionError
from beamlab.manifold import (CustomManifold, FlatCylinder, RoundSphere, christoffel, distance, make_model, metric_at,
                              orthonormal_frame, unit_directions, volume_density)


def test_make_model_tags():
    assert make_model('torus2').tag == 'flat-torus'
    assert make_model('sphere3').dim == 3
    assert make_model('cylinder', a=2.0).a == 2.0
    with pytest.raises(CapabilityError):
        make_model('klein-bottle')


def test_cylinder_height_must_be_positive():
    with pytest.raises(PreconditionError):
        FlatCylinder(0.0)


def test_cylinder_distance_wraps_the_angle():
    m = FlatCylinder(1.0)
    p = np.array([0.1, 0.5])
    q = np.array([2.0 * math.pi - 0.1, 0.5])
    assert abs(float(distance(m, p, q)) - 0.2) < 1e-12
    assert abs(float(distance(m, [1.0, 0.0], [1.0, 1.0])) - 1.0) < 1e-12


def test_chart_difference_nearest_image():
    m = make_model('torus2')
    d = m.chart_difference(np.array([6.2, 0.0]), np.array([0.1, 0.0]))
    assert abs(d[0] - (0.1 + 2.0 * math.pi - 6.2)) < 1e-12


def test_sphere_distance_along_equator():
    m = RoundSphere(2)
    p = np.array([math.pi / 2.0, 0.3])
    q = np.array([math.pi / 2.0, 1.5])
    assert abs(float(distance(m, p, q)) - 1.2) < 1e-12


def test_sphere_volume_density():
    m = RoundSphere(2)
    assert abs(float(volume_density(m, [0.4, 1.0])) - math.sin(0.4)) < 1e-12


def test_point_outside_chart():
    m = RoundSphere(2)
    with pytest.raises(DomainError):
        metric_at(m, [math.pi + 0.1, 1.0])


def test_custom_model_has_no_distance():
    m = CustomManifold(2, [-1.0, -1.0], [1.0, 1.0], [['1 + x0**2', '0'], ['0', '1']],
                       injectivity_radius=0.5)
    g = m.metric(np.array([0.5, 0.0]))
    assert abs(g[0, 0] - 1.25) < 1e-12
    with pytest.raises(CapabilityError):
        m.distance(np.zeros(2), np.ones(2))


def test_orthonormal_frame_is_orthonormal():
    m = make_model('sphere-patch')
    x = np.array([0.8, 2.0])
    v = unit_directions(m, x, 12)[5]
    e = orthonormal_frame(m, x, v)
    full = np.concatenate([v[:, None], e], axis=1)
    assert np.allclose(full.T @ m.metric(x) @ full, np.eye(2), atol=1e-12)


def test_disc_rejects_points_outside_the_circle():
    m = make_model('disc')
    assert abs(metric_at(m, [0.6, 0.8])[0, 0] - 1.0) < 1e-12
    with pytest.raises(DomainError):
        metric_at(m, [0.9, 0.9])


def test_constant_custom_metric_has_no_christoffel_symbols():
    m = CustomManifold(2, [-1.0, -1.0], [1.0, 1.0], [['1', '0'], ['0', '1']],
                       injectivity_radius=0.5)
    gamma = christoffel(m, [0.3, -0.2])
    assert gamma.shape == (2, 2, 2)
    assert np.max(np.abs(gamma)) <= 1e-8


@pytest.mark.parametrize('tag', ['cylinder', 'torus2', 'sphere2'])
def test_triangle_inequality(tag):
    m = make_model(tag)
    rng = np.random.default_rng(7)
    lower = np.where(np.isfinite(m.lower), m.lower, 0.0)
    upper = np.where(np.isfinite(m.upper), m.upper, 1.0)
    if tag == 'sphere2':
        lower, upper = np.array([0.05, 0.0]), np.array([math.pi - 0.05, 2.0 * math.pi])
    p, q, r = (rng.uniform(lower, upper, size=(1000, 2)) for _ in range(3))
    pq = distance(m, p, q)
    qr = distance(m, q, r)
    pr = distance(m, p, r)
    assert np.all(pr <= pq + qr + 1e-9)
    assert np.all(pq >= 0.0)
