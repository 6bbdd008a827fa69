import numpy as np
import pytest

from beamlab.errors import PreconditionError
from beamlab.holder import (HolderFunction, c1_norm, embedding_constant, exponential_coefficients,
                            extend_by_zero, frequency_function, holder_norm, radial_polynomial)
from beamlab.quadrature import box_grid


def test_square_root_seminorm_is_one():
    x = np.linspace(-1.0, 1.0, 201)
    sup, seminorm, norm = holder_norm(HolderFunction(x, np.sqrt(np.abs(x)), 0.5))
    assert abs(sup - 1.0) < 1e-12
    assert abs(seminorm - 1.0) < 1e-6
    assert abs(norm - 2.0) < 1e-6


def test_sampled_scheme_finds_the_cusp():
    x = np.linspace(-1.0, 1.0, 3001)
    f = HolderFunction(x, np.sqrt(np.abs(x)), 0.5)
    _, seminorm, _ = holder_norm(f, seed=7)
    assert f.scheme == 'sampled'
    assert abs(seminorm - 1.0) < 1e-6


def test_frequency_of_a_bump_in_the_plane():
    grid = box_grid([-1.0, -1.0], [1.0, 1.0], 0.1)
    points = grid.points().reshape(-1, 2)
    values = np.exp(-np.sum(points ** 2, axis=1))
    assert frequency_function(HolderFunction(points, values, 0.5)) > 1.0


def test_extend_by_zero_keeps_the_seminorm_comparable():
    def f(x):
        return 1.0 - np.sum(x * x, axis=-1)

    inner, outer = extend_by_zero(f, 1.0, 2, 1.5, 0.1, 0.5)
    _, s_in, _ = holder_norm(inner)
    _, s_out, _ = holder_norm(outer)
    assert s_out >= s_in - 1e-12
    assert s_out <= 2.0 * s_in


def test_extend_by_zero_needs_vanishing_trace():
    with pytest.raises(PreconditionError):
        extend_by_zero(lambda x: np.ones(x.shape[:-1]), 1.0, 2, 1.5, 0.1, 0.5)


def test_admissible_polynomials():
    p = radial_polynomial(exponential_coefficients(1.0, 6), np.zeros(2))
    assert abs(float(p(np.array([0.0, 0.0]))) - 1.0) < 1e-15
    with pytest.raises(PreconditionError):
        radial_polynomial([1.0, 2.0], np.zeros(2))


def test_c1_norm_and_embedding_constant():
    grid = box_grid([0.0], [1.0], 0.01)
    x = grid.points()[..., 0]
    assert abs(c1_norm(2.0 * x, grid) - 4.0) < 1e-9
    assert embedding_constant(0.5, 0.3) == 1.0
    assert abs(embedding_constant(4.0, 0.5) - 2.0) < 1e-15


def test_frequency_is_scale_invariant():
    grid = box_grid([-1.0, -1.0], [1.0, 1.0], 0.1)
    points = grid.points().reshape(-1, 2)
    values = np.cos(3.0 * points[:, 0]) + points[:, 1] ** 2
    base = frequency_function(HolderFunction(points, values, 0.5))
    for s in (3.0, -0.25, 1e4):
        scaled = frequency_function(HolderFunction(points, s * values, 0.5))
        assert abs(scaled - base) <= 1e-12 * base
    assert frequency_function(HolderFunction(points, 0.0 * values, 0.5)) == 0.0
