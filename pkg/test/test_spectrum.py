import math

import numpy as np
import pytest

from beamlab.errors import CapabilityError, RangeError, SamplingError
from beamlab.manifold import make_model
from beamlab.spectrum import (build_bad_set, distance_to_spectrum, eigenvalue_hits, required_lambda_max,
                              resolvent_norm, sample_outside, spectrum, verify_polynomial_bound, weyl_count)


def test_torus_lattice_spectrum():
    table = spectrum(make_model('torus2'), 5.0)
    assert table.rows() == [(0.0, 1), (1.0, 4), (2.0, 4), (4.0, 4), (5.0, 8)]


def test_round_sphere_spectrum():
    table = spectrum(make_model('sphere2'), 12.0)
    assert table.rows() == [(0.0, 1), (2.0, 3), (6.0, 5), (12.0, 7)]


def test_spectrum_needs_an_explicit_model():
    with pytest.raises(CapabilityError):
        spectrum(make_model('cylinder'), 10.0)


def test_resolvent_norm():
    table = spectrum(make_model('torus2'), 100.0)
    assert resolvent_norm(table, 1.5) == 2.0
    assert resolvent_norm(table, 2.0) == math.inf
    assert eigenvalue_hits(table, [1.0, 1.1, math.sqrt(2.0)]) == [1.0, math.sqrt(2.0)]
    with pytest.raises(RangeError):
        distance_to_spectrum(spectrum(make_model('torus2'), 99.5), 99.2)


def test_weyl_count_small_cases():
    table = spectrum(make_model('sphere2'), 2.0)
    assert weyl_count(table, 1.0) == (3, 3.0)
    with pytest.raises(RangeError):
        weyl_count(table, 0.5)


@pytest.mark.parametrize('tag', ['torus2', 'sphere2'])
def test_weyl_band(tag):
    hs = [2.0 ** -k for k in (3, 4, 5, 6)]
    table = spectrum(make_model(tag), 2.0 / hs[-1] ** 2)
    ratios = [weyl_count(table, h)[1] for h in hs]
    assert max(ratios) <= 4.0 * min(ratios)


def test_bad_set_and_polynomial_bound():
    table = spectrum(make_model('torus2'), required_lambda_max(50.0))
    bad = build_bad_set(table, 0.5, 0.5, 50.0)
    assert bad.measure <= 0.5 + 1e-9
    assert bad.measure <= bad.squared_measure / 2.0 + 1e-9
    lams = sample_outside(bad, 200, seed=11)
    assert not any(bad.contains(lam) for lam in lams)
    bound = verify_polynomial_bound(table, bad, lams)
    assert bound.max_ratio <= bound.constant
    for lam in lams:
        level = int(math.floor(math.log2(lam * lam)))
        floor = min(bad.radius(level, 2), bad.radius(level + 1, 2))
        assert distance_to_spectrum(table, lam * lam) >= floor * (1.0 - 1e-12)


def test_samples_inside_the_bad_set_are_refused():
    table = spectrum(make_model('torus2'), required_lambda_max(10.0))
    bad = build_bad_set(table, 0.5, 0.5, 10.0)
    inside = 0.5 * (bad.intervals[0][0] + bad.intervals[0][1])
    with pytest.raises(SamplingError):
        verify_polynomial_bound(table, bad, [inside])


def test_bad_set_is_reproducible():
    table = spectrum(make_model('torus2'), required_lambda_max(20.0))
    bad = build_bad_set(table, 0.5, 0.5, 20.0)
    assert np.array_equal(sample_outside(bad, 50, seed=3), sample_outside(bad, 50, seed=3))
