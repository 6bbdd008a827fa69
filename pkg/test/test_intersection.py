import math

import numpy as np
import pytest

from beamlab.config import make_config
from beamlab.errors import PreconditionError, SearchFailure
from beamlab.experiments import h1_check
from beamlab.intersection import (angle_distance_constant, check_h_at_point, cylinder_h1_constants, cylinder_pair,
                                  estimate_c0, h1_survey, perturb_direction_avoid, witness_for_pair)
from beamlab.manifold import make_model
from beamlab.recovery import cylinder_witness


def test_disc_center_perpendicular_diameters():
    m = make_model('disc')
    witness = check_h_at_point(m, [0.0, 0.0], directions=36)
    assert abs(witness.theta - math.pi / 2.0) < 1e-9
    assert witness.separation > 0.1


def test_boundary_point_is_rejected():
    m = make_model('cylinder', a=1.0)
    with pytest.raises(PreconditionError):
        check_h_at_point(m, [1.0, 0.0])


def test_cylinder_witness_and_c0():
    m = make_model('cylinder', a=1.0)
    witness = cylinder_witness(m)
    assert abs(witness.theta - math.pi / 4.0) < 1e-12
    c0 = estimate_c0(witness, 0.5)
    assert 1.3 < c0 <= math.sqrt(2.0) * (1.0 + 1e-9)


def test_parallel_pair_fails():
    m = make_model('cylinder', a=1.0)
    with pytest.raises(SearchFailure):
        witness_for_pair(m, [math.pi, 0.5], [0.0, 1.0], [0.0, -1.0])


def test_cylinder_survey():
    m = make_model('cylinder', a=1.0)
    theta0, _, c0_bound, _ = cylinder_h1_constants(1.0)
    assert abs(theta0 - 0.25 * math.atan(math.pi)) < 1e-15
    survey = h1_survey(m, [[1.0, 0.3], [4.0, 0.6]], theta0=theta0, directions=90)
    assert survey.coverage == 1.0
    assert survey.theta_min >= theta0 - 1e-12
    assert survey.c0 <= 1.05 * c0_bound


def test_sphere_patch_angle_distance_constant():
    m = make_model('sphere-patch')
    bound = angle_distance_constant(m, [math.pi / 2.0, 1.0], math.pi / 4.0, 1.0)
    assert 0.0 < bound.constant <= 1.0 + 1e-9


def test_perturbation_blocked_on_round_sphere():
    m = make_model('sphere2')
    x = np.array([math.pi / 2.0, 1.0])
    with pytest.raises(SearchFailure):
        perturb_direction_avoid(m, x, np.array([1.0, 0.0]), np.array([0.0, 1.0]))


def test_perturbation_hypothesis_violated_on_three_sphere():
    m = make_model('sphere3')
    x = np.array([math.pi / 2.0, math.pi / 2.0, 1.0])
    report = perturb_direction_avoid(m, x, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    assert report.status == 'hypothesis-violated'
    assert report.conjugacy_order == 2


def test_perturbation_on_flat_three_torus():
    m = make_model('torus3')
    x = np.array([1.0, 1.0, 1.0])
    report = perturb_direction_avoid(m, x, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    assert report.status == 'ok'
    assert report.hypothesis_holds
    assert abs(report.intersections[0][0] - 2.0 * math.pi) < 1e-5
    assert all(check['disjoint'] for check in report.verification)


def test_cylinder_helix_closed_form():
    m = make_model('cylinder', a=1.0)
    theta = 0.4
    phi, s0 = math.pi, 0.5
    gamma, eta = cylinder_pair(m, [phi, s0], theta)
    tau = np.linspace(0.0, eta.l_plus, 25)
    expected = np.stack([phi - s0 * math.tan(theta) + tau * math.sin(theta), tau * math.cos(theta)], axis=-1)
    assert np.allclose(eta.position(tau), m.reduce(expected), atol=1e-12)
    assert abs(eta.l_plus - 1.0 / math.cos(theta)) < 1e-9
    assert np.allclose(eta.position(np.array(s0 / math.cos(theta))), [phi, s0], atol=1e-12)
    assert np.allclose(gamma.position(np.array(s0)), [phi, s0], atol=1e-12)


def test_c0_grows_under_refinement_up_to_the_angle_bound():
    m = make_model('cylinder', a=1.0)
    witness = cylinder_witness(m)
    ceiling = 1.0 / math.sin(witness.theta)
    estimates = [estimate_c0(witness, 0.5, spacing=h) for h in (0.04, 0.02, 0.01)]
    for coarse, fine in zip(estimates, estimates[1:]):
        assert coarse <= fine + 1e-9
    assert estimates[-1] <= ceiling * (1.0 + 1e-9)


def test_perturbed_directions_converge():
    m = make_model('torus3')
    x = np.array([1.0, 1.0, 1.0])
    v = np.array([0.0, 1.0, 0.0])
    report = perturb_direction_avoid(m, x, np.array([1.0, 0.0, 0.0]), v)
    size = np.linalg.norm(report.alpha)
    assert abs(size - 0.1) < 1e-12
    for n, vn in zip((1, 2, 4, 8, 16, 32), report.directions):
        assert abs(np.linalg.norm(vn) - 1.0) < 1e-12
        assert np.linalg.norm(vn - v) <= size / n + 1e-15


def test_perturbation_on_flat_two_torus():
    m = make_model('torus2')
    x = np.array([1.0, 1.0])
    report = perturb_direction_avoid(m, x, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert report.status == 'degenerate-dimension'
    assert not report.hypothesis_holds
    assert [check['n'] for check in report.verification] == [16, 32]
    assert all(check['misses_sampled_points'] for check in report.verification)


def test_h1_check_bounds_on_the_cylinder(monkeypatch):
    monkeypatch.delenv('BEAMLAB_OUTPUT_DIR', raising=False)
    outcome = h1_check(make_config('h1-check', {'samples': 2}))
    checks = {c['name']: c for c in outcome.checks}
    theta0, T, _, r_bound = cylinder_h1_constants(1.0)
    assert checks['T <= 1.05 a / cos(2 theta0)']['passed']
    assert checks['r < pi/2']['passed']
    assert checks['theta >= 0.95 theta0']['passed']
    assert outcome.summary['T'] <= 1.05 * T
    assert outcome.summary['r'] < r_bound
    assert outcome.summary['theta_min'] >= 0.95 * theta0
