import math

import numpy as np
import pytest

from beamlab.errors import PreconditionError
from beamlab.stationary_phase import (PhaseModel, check_precondition, leading_term, oscillatory_integral,
                                      quadratic_phase, remainder_rate)

LADDER = [100.0, 464.1588833612779, 2154.4346900318847, 10000.0]


def _cubic(kappa):
    return lambda x: kappa * x[..., 0] ** 3


def test_pure_quadratic_leading_term():
    phase = quadratic_phase(np.eye(2), 0.5)
    value, _ = oscillatory_integral(phase, lambda x: np.ones(x.shape[:-1]), 100.0)
    assert abs(value - 2.0 * math.pi) <= 1e-3 * 2.0 * math.pi


def test_precondition_margin():
    assert check_precondition(quadratic_phase(np.eye(2), 0.5, cubic=_cubic(0.2))).holds
    bad = check_precondition(quadratic_phase(np.eye(2), 0.5, cubic=_cubic(2.0)))
    assert not bad.holds
    assert abs(bad.cubic_constant - 2.0) < 1e-9


def test_phase_must_be_critical():
    with pytest.raises(PreconditionError):
        PhaseModel(lambda x: x[..., 0] + 0.5 * np.sum(x * x, axis=-1), np.eye(2), 0.5)


def test_leading_term_needs_positive_hessian():
    with pytest.raises(PreconditionError):
        leading_term(np.diag([1.0, -1.0]), 1.0)


def test_hoelder_amplitude_rate():
    alpha = 0.5
    phase = quadratic_phase(np.eye(2), 0.5, cubic=_cubic(0.2))
    fit = remainder_rate(phase, lambda x: 1.0 + np.abs(x[..., 0]) ** alpha, LADDER)
    assert fit.status == 'fitted'
    assert -alpha / 2.0 - 0.35 <= fit.slope <= -alpha / 2.0 + 0.05


def test_smooth_amplitude_rate():
    phase = quadratic_phase(np.eye(2), 0.5, cubic=_cubic(0.2))
    fit = remainder_rate(phase, lambda x: np.cos(x[..., 0]) + x[..., 1], LADDER)
    assert fit.slope <= -0.45


def test_short_ladder_is_rejected():
    phase = quadratic_phase(np.eye(2), 0.5)
    with pytest.raises(PreconditionError):
        remainder_rate(phase, lambda x: np.ones(x.shape[:-1]), [100.0, 200.0, 300.0])


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def test_leading_term_is_rotation_invariant():
    hessian = np.diag([1.0, 4.0])
    rot = _rotation(0.7)
    turned = rot @ hessian @ rot.T
    assert abs(leading_term(turned, 1.0) - leading_term(hessian, 1.0)) < 1e-12

    def one(x):
        return np.ones(x.shape[:-1])

    plain, _ = oscillatory_integral(quadratic_phase(hessian, 1.0), one, 100.0)
    rotated, _ = oscillatory_integral(quadratic_phase(turned, 1.0), one, 100.0)
    assert abs(plain - rotated) <= 1e-6 * abs(plain)


def test_integral_is_linear_in_the_amplitude():
    phase = quadratic_phase(np.eye(2), 0.5, cubic=_cubic(0.2))

    def a(x):
        return np.cos(x[..., 0])

    def b(x):
        return 1.0 + x[..., 1] ** 2

    ia, _ = oscillatory_integral(phase, a, 200.0)
    ib, _ = oscillatory_integral(phase, b, 200.0)
    mixed, _ = oscillatory_integral(phase, lambda x: 2.0 * a(x) - 3.0 * b(x), 200.0)
    assert abs(mixed - (2.0 * ia - 3.0 * ib)) <= 1e-12 * max(abs(ia), abs(ib))
    assert abs(leading_term(np.eye(2), 2.0) - 2.0 * leading_term(np.eye(2), 1.0)) < 1e-12


def test_amplitude_away_from_the_minimum_is_exponentially_small():
    phase = quadratic_phase(np.eye(2), 0.5)

    def ring(x):
        z = (np.linalg.norm(x, axis=-1) - 0.4) / 0.1
        inside = np.abs(z) < 1.0
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - np.where(inside, z, 0.0) ** 2)), 0.0)

    for lam in (50.0, 200.0, 800.0):
        value, _ = oscillatory_integral(phase, ring, lam)
        assert abs(value) <= lam * math.exp(-0.5 * lam * 0.3 ** 2)
    assert abs(value) < 1e-12


@pytest.mark.parametrize('r, holds', [(1.0, True), (3.0, False)])
def test_precondition_on_a_cubic_perturbation(r, holds):
    pre = check_precondition(quadratic_phase(np.eye(2), r, cubic=_cubic(0.1)))
    assert pre.holds == holds
    assert abs(pre.cubic_constant - 0.1) < 1e-9
    assert abs(pre.margin - (0.25 - 0.1 * r)) < 1e-9
