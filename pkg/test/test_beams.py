import math

import numpy as np
import pytest

from beamlab.beams import (CutoffFunction, beam_grid, beam_norms, beam_phase, build_beam, default_cutoff_radius,
                           evaluate_beam, residual_norm, solve_riccati)
from beamlab.errors import PreconditionError, ResolutionError
from beamlab.geodesics import integrate_geodesic
from beamlab.laplacian import helmholtz_residual
from beamlab.manifold import make_model
from beamlab.quadrature import box_grid, log_slope


def _vertical(a=1.0):
    m = make_model('cylinder', a=a)
    return integrate_geodesic(m, [math.pi, 0.5 * a], [0.0, 1.0])


def test_flat_riccati_closed_form():
    riccati = solve_riccati(_vertical())
    t = np.linspace(-0.5, 0.5, 41)
    exact = (t + 1j) / (1.0 + t ** 2)
    assert np.max(np.abs(riccati.at(t)[0][:, 0, 0] - exact)) < 1e-7
    assert riccati.min_imag_eigenvalue > 0.0


def test_round_sphere_riccati_fixed_point():
    m = make_model('sphere2')
    path = integrate_geodesic(m, [math.pi / 2.0, 1.0], [0.0, 1.0], t_span=(-2.0, 2.0))
    riccati = solve_riccati(path)
    assert np.max(np.abs(riccati.h - 1j)) < 1e-8


def test_flat_amplitude_modulus():
    profile = build_beam(_vertical(), 40.0, math.pi)
    t = np.linspace(-0.5, 0.5, 11)
    assert np.max(np.abs(np.abs(profile.a0_at(t)) - (1.0 + t ** 2) ** -0.25)) < 1e-7


def test_riccati_datum_needs_positive_imaginary_part():
    with pytest.raises(PreconditionError):
        solve_riccati(_vertical(), h0=np.array([[1.0 + 0.0j]]))


def test_beam_peak_on_the_geodesic():
    profile = build_beam(_vertical(), 40.0, math.pi)
    value = evaluate_beam(profile, np.array([[math.pi, 0.5]]))[0]
    assert abs(abs(value) - 40.0 ** 0.125) < 1e-12
    far = evaluate_beam(profile, np.array([[math.pi + 3.0, 0.5]]))[0]
    assert far == 0.0


def test_beam_norm_ratios():
    profile = build_beam(_vertical(), 40.0, math.pi)
    norms = beam_norms(profile, beam_grid(profile, 40.0 ** -0.5 / 8.0))
    assert abs(norms.linf_ratio - 1.0) < 0.01
    assert norms.l2 > 0.0
    assert norms.l4 == norms.l4_ratio


def test_residual_grid_must_resolve_the_wavelength():
    profile = build_beam(_vertical(), 40.0, math.pi)
    with pytest.raises(ResolutionError):
        residual_norm(profile, box_grid([2.5, 0.0], [3.5, 1.0], 0.01))


def test_default_cutoff_radius():
    assert abs(default_cutoff_radius(1.0, math.pi, 1.0) - 1.0 / 6.0) < 1e-15
    assert CutoffFunction(0.1, 0.2)(np.array([0.15]))[0] > 0.0


def test_residual_ratio_decays_at_least_like_one_over_lam():
    profile = build_beam(_vertical(), 10.0, math.pi)
    ladder = [10.0, 20.0, 40.0]
    ratios = []
    for lam in ladder:
        p = profile.with_lambda(lam)
        ratios.append(residual_norm(p, beam_grid(p, 1.0 / (20.0 * lam)))[1])
    slope, _ = log_slope(ladder, ratios)
    assert slope <= -1.0


def test_l4_ratio_stays_bounded():
    profile = build_beam(_vertical(), 10.0, math.pi)
    ratios = []
    for lam in (10.0, 20.0, 40.0):
        p = profile.with_lambda(lam)
        ratios.append(beam_norms(p, beam_grid(p, lam ** -0.5 / 8.0)).l4_ratio)
    assert max(ratios) <= 2.0 * min(ratios)


def test_phase_gradient_on_the_geodesic_is_the_velocity():
    path = _vertical()
    profile = build_beam(path, 20.0, math.pi)
    h = 1e-4
    for t in (-0.3, 0.0, 0.2):
        x = path.position(np.array(t))
        grad = np.empty(2)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            ends = beam_phase(profile, np.stack([x + e, x - e])).real
            grad[k] = (ends[0] - ends[1]) / (2.0 * h)
        assert np.allclose(grad, path.velocity(np.array(t)), atol=1e-4)


def test_transverse_profile_is_gaussian():
    lam = 20.0
    profile = build_beam(_vertical(), lam, math.pi)
    y = np.array([0.0, 0.1, 0.2, 0.3, 0.5])
    points = np.stack([math.pi + y, np.full(y.shape, 0.5)], axis=-1)
    values = np.abs(evaluate_beam(profile, points))
    assert np.allclose(values / values[0], np.exp(-0.5 * lam * y ** 2), rtol=1e-9, atol=1e-15)


def test_residual_ignores_the_cutoff_radius():
    lam = 40.0
    ratios = []
    for delta1 in (2.0 * math.pi, math.pi):
        p = build_beam(_vertical(), lam, delta1)
        ratios.append(residual_norm(p, beam_grid(p, 1.0 / (20.0 * lam)))[1])
    assert abs(ratios[1] - ratios[0]) < 0.01 * ratios[0]


def test_helmholtz_residual_of_a_plane_wave():
    m = make_model('torus2')
    k = 5.0 * np.array([0.6, 0.8])
    grid = box_grid([1.0, 1.0], [2.0, 2.0], 0.01)

    def wave(x):
        return np.exp(1j * (x @ k))

    residual, size = helmholtz_residual(m, wave, grid, 5.0)
    assert residual < 1e-6 * 25.0 * size
    residual, size = helmholtz_residual(m, wave, grid, 4.0)
    assert abs(residual / size - 9.0) < 1e-4
