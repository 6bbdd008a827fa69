import math

import numpy as np
import pytest
from scipy.integrate import quad

from beamlab.beams import build_beam
from beamlab.config import make_config
from beamlab.errors import GeometryError, PreconditionError
from beamlab.experiments import recover, recovery_point
from beamlab.geodesics import integrate_geodesic
from beamlab.manifold import make_model
from beamlab.potential import bump, constant
from beamlab.quadrature import box_grid
from beamlab.recovery import (boundary_concentration, cylinder_witness, error_decay, hessian_psi,
                              normalized_bump, quadruple_product_integral, recover_point_value,
                              recovery_grid, select_x0)

X0 = np.array([math.pi, 0.5])


@pytest.fixture(scope='module')
def witness():
    return cylinder_witness(make_model('cylinder', a=1.0), X0)


def _beams(witness, lam=40.0):
    return build_beam(witness.gamma, lam, 1.2), build_beam(witness.eta, lam, 1.2)


def test_flat_crossing_hessian(witness):
    beam_v, beam_w = _beams(witness)
    hessian = hessian_psi(beam_v, beam_w, X0, witness.t0, witness.tau0, witness.theta)
    assert abs(hessian.det - 2.0) < 1e-9
    assert abs(hessian.c - (2.0 - math.sqrt(2.0))) < 1e-9
    assert hessian.coercive
    assert abs(hessian.psi_at_x0) < 1e-12


def test_beams_must_meet(witness):
    beam_v, beam_w = _beams(witness)
    with pytest.raises(GeometryError):
        hessian_psi(beam_v, beam_w, X0, witness.t0 + 0.3, witness.tau0)


def test_constant_potential_is_recovered(witness):
    beam_v, beam_w = _beams(witness, 160.0)
    hessian = hessian_psi(beam_v, beam_w, X0, witness.t0, witness.tau0, witness.theta)
    grid = recovery_grid(beam_v, beam_w, X0, hessian)
    value = quadruple_product_integral(constant(0.7), beam_v, beam_w, grid, X0, 5.0)
    a0 = complex(beam_v.a0_at(np.array(witness.t0)))
    b0 = complex(beam_w.a0_at(np.array(witness.tau0)))
    estimate = recover_point_value(value, hessian, a0, b0)
    assert abs(estimate - 0.7) < 0.05


def test_recover_point_value_preconditions():
    with pytest.raises(PreconditionError):
        recover_point_value(1.0, np.diag([1.0, -1.0]), 1.0, 1.0)
    with pytest.raises(PreconditionError):
        recover_point_value(1.0, np.eye(2), 0.0, 1.0)


def test_error_decay_on_the_cylinder(witness):
    report = error_decay(bump(X0, 0.3), witness, [40.0, 80.0, 160.0, 320.0])
    assert report.status == 'fitted'
    assert report.slope <= -0.4
    assert report.rows[-1]['rel_error'] <= 0.2
    assert report.checks['leakage']['holds']
    assert report.checks['phase_invariance']
    assert report.checks['hessian_coercive']


def test_normalized_bump_trace():
    eta = normalized_bump(2)
    square, _ = quad(lambda s: float(eta(np.array([s, 0.0]))) ** 2, -1.0, 1.0, epsabs=1e-13)
    assert abs(square - 1.0) < 1e-9


def test_boundary_concentration_constant_case():
    def one(x):
        return np.ones(x.shape[:-1])

    result = boundary_concentration(one, one, one, mus=[1e-1, 10 ** -1.5, 1e-2, 10 ** -2.5, 1e-3])
    assert result.expected == 0.5
    assert result.relative_error <= 0.05


def test_boundary_shift_must_be_tangential():
    def one(x):
        return np.ones(x.shape[:-1])

    with pytest.raises(PreconditionError):
        boundary_concentration(one, one, one, shift=[0.0, 0.1])


def test_select_x0_picks_the_peak():
    grid = box_grid([0.0, 0.0], [2.0, 2.0], 0.1)
    p = bump([1.0, 1.0], 0.2)
    assert np.allclose(select_x0(p, grid), [1.0, 1.0])
    chosen = select_x0(p, grid, eps=0.5, accept=lambda x: x[0] > 1.05)
    assert chosen[0] > 1.05


def test_recovery_point_follows_the_potential():
    m = make_model('cylinder', a=1.0)
    grid = box_grid([0.0, 0.0], [2.0 * math.pi, 1.0], 0.05)
    x0, witness = recovery_point(m, bump([1.0, 0.5], 0.3), grid)
    assert abs(x0[0] - 1.0) < 0.05
    assert abs(x0[1] - 0.5) < 0.05
    assert np.allclose(witness.point, x0)


def test_recover_experiment_uses_the_potential_peak(monkeypatch):
    monkeypatch.delenv('BEAMLAB_OUTPUT_DIR', raising=False)
    config = make_config('recover', {'ladder': '20:160:4',
                                     'potential': {'kind': 'bump', 'center': [1.0, 0.5], 'width': 0.3}})
    outcome = recover(config)
    assert abs(outcome.summary['x0'][0] - 1.0) < 0.05
    assert outcome.summary['p_true'] > 0.9


def test_potential_vanishing_at_x0_is_recovered_as_zero(witness):
    def p(x):
        return (x[..., 0] - X0[0]) ** 2 + (x[..., 1] - X0[1]) ** 2

    estimates = []
    for lam in (80.0, 320.0):
        beam_v, beam_w = _beams(witness, lam)
        hessian = hessian_psi(beam_v, beam_w, X0, witness.t0, witness.tau0, witness.theta)
        grid = recovery_grid(beam_v, beam_w, X0, hessian)
        value = quadruple_product_integral(p, beam_v, beam_w, grid)
        a0 = complex(beam_v.a0_at(np.array(witness.t0)))
        b0 = complex(beam_w.a0_at(np.array(witness.tau0)))
        estimates.append(recover_point_value(value, hessian, a0, b0))
    assert 0.0 < estimates[1] < estimates[0]
    assert estimates[1] < 0.02
    assert 3.0 < estimates[0] / estimates[1] < 5.0


def test_disjoint_tubes_give_a_zero_integral():
    m = make_model('cylinder', a=1.0)
    gamma = integrate_geodesic(m, [math.pi, 0.5], [0.0, 1.0])
    eta = integrate_geodesic(m, [math.pi + 2.0, 0.5], [0.0, 1.0])
    beam_v, beam_w = build_beam(gamma, 40.0, 1.2), build_beam(eta, 40.0, 1.2)
    grid = box_grid([0.0, 0.0], [2.0 * math.pi, 1.0], 40.0 ** -0.5 / 8.0)
    assert quadruple_product_integral(constant(1.0), beam_v, beam_w, grid) == 0.0
