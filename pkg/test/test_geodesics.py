import math
import os

import numpy as np
import pytest

from beamlab.errors import DomainError, PreconditionError
from beamlab.geodesics import export_csv, exit_time, fermi_coordinates, fermi_point, integrate_geodesic, parallel_frame
from beamlab.manifold import load_custom, make_model

HERE = os.path.abspath(os.path.dirname(__file__))
EXAMPLES = os.path.join(HERE, '..', 'example')


def test_disc_diameter_exit_times():
    m = make_model('disc')
    path = integrate_geodesic(m, [0.0, 0.0], [1.0, 0.0])
    l_minus, l_plus, tangential = exit_time(path)
    assert abs(l_minus + 1.0) < 1e-10
    assert abs(l_plus - 1.0) < 1e-10
    assert tangential == (False, False)


def test_disc_chord_at_45_degrees():
    m = make_model('disc')
    s = math.sqrt(0.5)
    path = integrate_geodesic(m, [0.0, 0.0], [s, s])
    assert abs(path.length - 2.0) < 1e-10
    start = np.array([1.0 - 1e-9, 0.0])
    chord = integrate_geodesic(m, start, [-s, s])
    assert abs(chord.l_plus - math.sqrt(2.0)) < 1e-6


def test_cylinder_vertical_line():
    m = make_model('cylinder', a=1.0)
    path = integrate_geodesic(m, [math.pi, 0.5], [0.0, 1.0])
    assert abs(path.l_minus + 0.5) < 1e-10
    assert abs(path.l_plus - 0.5) < 1e-10
    assert not path.trapped


def test_torus_geodesic_is_trapped():
    m = make_model('torus2')
    path = integrate_geodesic(m, [1.0, 1.0], [0.6, 0.8], t_span=(-5.0, 5.0))
    assert path.trapped
    assert np.allclose(path.position(np.array(2.0)), m.reduce(np.array([2.2, 2.6])))


def test_sphere_equator_position():
    m = make_model('sphere2')
    path = integrate_geodesic(m, [math.pi / 2.0, 1.0], [0.0, 1.0], t_span=(0.0, 3.0))
    assert np.allclose(path.position(np.array(1.5)), [math.pi / 2.0, 2.5], atol=1e-10)
    parallel_frame(path)


def test_initial_speed_must_be_one():
    m = make_model('torus2')
    with pytest.raises(PreconditionError):
        integrate_geodesic(m, [1.0, 1.0], [1.0, 1.0])


def test_flat_fermi_coordinates():
    m = make_model('cylinder', a=1.0)
    path = integrate_geodesic(m, [math.pi, 0.5], [0.0, 1.0])
    t, y = fermi_coordinates(path, np.array([[math.pi + 0.1, 0.7]]))
    assert abs(t[0] - 0.2) < 1e-12
    assert abs(y[0, 0] - 0.1) < 1e-12
    back = fermi_point(path, t, y)
    assert np.allclose(back, [[math.pi + 0.1, 0.7]], atol=1e-12)


def test_fermi_outside_tube():
    m = make_model('cylinder', a=1.0)
    path = integrate_geodesic(m, [math.pi, 0.5], [0.0, 1.0])
    with pytest.raises(DomainError):
        fermi_coordinates(path, np.array([[math.pi + 2.0, 0.5]]))
    t, y = fermi_coordinates(path, np.array([[math.pi + 2.0, 0.5]]), strict=False)
    assert np.isnan(t[0])


def test_sphere_fermi_roundtrip():
    m = make_model('sphere2')
    path = integrate_geodesic(m, [math.pi / 2.0, 1.0], [0.0, 1.0], t_span=(-1.0, 1.0))
    point = fermi_point(path, np.array(0.3), np.array([0.2]))
    t, y = fermi_coordinates(path, point[None, :])
    assert abs(t[0] - 0.3) < 1e-8
    assert abs(y[0, 0] - 0.2) < 1e-8


def test_export_csv_columns(tmp_path):
    m = make_model('cylinder', a=1.0)
    path = integrate_geodesic(m, [math.pi, 0.5], [0.0, 1.0])
    f = tmp_path / 'path.csv'
    export_csv(path, str(f))
    lines = f.read_text().splitlines()
    assert lines[0] == 't,x0,x1,v0,v1,E1_0,E1_1'
    assert len(lines) == len(path.t) + 1


def test_curved_custom_geodesic_keeps_unit_speed():
    m = load_custom(os.path.join(EXAMPLES, 'wavy.json'))
    x0 = np.array([1.5, 0.5])
    v0 = np.array([1.0 / math.sqrt(float(m.metric(x0)[0, 0])), 0.0])
    path = integrate_geodesic(m, x0, v0, tol=1e-9)
    l_minus, l_plus, _ = exit_time(path)
    assert math.isfinite(l_minus) and math.isfinite(l_plus)
    assert -1.6 < l_minus < -1.5
    assert 1.5 < l_plus < 1.6
    speed = m.inner(m.reduce(path.x), path.v, path.v)
    assert np.max(np.abs(speed - 1.0)) <= 1e-8
    assert np.allclose(path.x[:, 1], 0.5, atol=1e-8)
    point = fermi_point(path, np.array(0.3), np.array([0.1]))
    t, y = fermi_coordinates(path, point[None, :])
    assert abs(t[0] - 0.3) < 1e-8
    assert abs(y[0, 0] - 0.1) < 1e-8
