"""
Potentials p = q1 - q2 for the recovery experiment.

Descriptions are small JSON documents:

    {"kind": "bump", "center": [3.14, 0.5], "width": 0.3, "amplitude": 1.0, "offset": 0.0}
    {"kind": "expression", "expr": "exp(-x0**2)", "coords": ["x0", "x1"]}
    {"kind": "constant", "value": 0.7}
"""
import json
import logging
import math

import numpy as np

from beamlab.errors import PreconditionError
from beamlab.holder import HolderFunction, embedding_constant, frequency_function

logger = logging.getLogger(__name__)


class PotentialField:
    """
    Callable p(x) on chart points (..., n) with a Hoelder exponent and a
    cached frequency N(p) once it has been measured.
    """

    def __init__(self, function, description, alpha=0.9, dim=None):
        if not 0.0 < alpha < 1.0:
            raise PreconditionError('Hoelder exponent must lie in (0, 1), got {0}'.format(alpha))
        self.function = function
        self.description = dict(description)
        self.alpha = alpha
        self.dim = dim
        self.frequency = None
        self.bound = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.function(x), dtype=float), x.shape[:-1]).copy()

    @property
    def kind(self):
        return self.description.get('kind')

    def measure_frequency(self, grid, m=None, **options):
        """
        N(p) from the samples on grid (chart distance, or the model's
        distance when m is given).
        """
        points = grid.points().reshape(-1, grid.dim)
        distance = None if m is None else m.distance
        f = HolderFunction(points, self(points), self.alpha, distance=distance)
        self.frequency = frequency_function(f, **options)
        return self.frequency

    def admissible(self, bound):
        """
        N(p) <= bound, for the measured N(p).
        """
        if self.frequency is None:
            raise PreconditionError('measure_frequency first')
        self.bound = bound
        return self.frequency <= bound

    def admissibility_bound(self, diameter):
        """
        2B with B = max(1, D^(1-alpha)).
        """
        return 2.0 * embedding_constant(diameter, self.alpha)

    def describe(self):
        out = dict(self.description)
        out['alpha'] = self.alpha
        if self.frequency is not None:
            out['frequency'] = self.frequency
        if self.bound is not None:
            out['admissible_bound'] = self.bound
        return out


def bump(center, width, amplitude=1.0, offset=0.0, alpha=0.9):
    """
    offset + amplitude exp(-|x - center|^2 / (2 width^2)).
    """
    center = np.asarray(center, dtype=float)
    if not width > 0:
        raise PreconditionError('bump width must be positive')

    def p(x):
        d = x - center
        return offset + amplitude * np.exp(-np.sum(d * d, axis=-1) / (2.0 * width * width))
    return PotentialField(p, {'kind': 'bump', 'center': center.tolist(), 'width': width,
                              'amplitude': amplitude, 'offset': offset}, alpha, len(center))


def constant(value, alpha=0.9):
    return PotentialField(lambda x: np.full(x.shape[:-1], float(value)),
                          {'kind': 'constant', 'value': float(value)}, alpha)


def expression(expr, coords, alpha=0.9):
    """
    Potential from a closed-form expression in the chart coordinates.
    """
    import sympy as sp

    symbols = sp.symbols(coords)
    local = dict(zip(coords, symbols))
    try:
        parsed = sp.sympify(expr, locals=local)
    except (sp.SympifyError, TypeError) as exc:
        raise PreconditionError('cannot parse potential {0!r}: {1}'.format(expr, exc))
    function = sp.lambdify(symbols, parsed, 'numpy')

    def p(x):
        return function(*[x[..., i] for i in range(len(coords))])
    return PotentialField(p, {'kind': 'expression', 'expr': expr, 'coords': list(coords)}, alpha, len(coords))


def from_description(source, alpha=0.9):
    """
    PotentialField from a dict or a JSON file name.
    """
    if isinstance(source, str):
        with open(source, 'r') as f:
            source = json.load(f)
    kind = source.get('kind')
    alpha = source.get('alpha', alpha)
    try:
        if kind == 'bump':
            return bump(source['center'], float(source['width']), float(source.get('amplitude', 1.0)),
                        float(source.get('offset', 0.0)), alpha)
        if kind == 'constant':
            return constant(float(source['value']), alpha)
        if kind == 'expression':
            return expression(source['expr'], source['coords'], alpha)
    except KeyError as exc:
        raise PreconditionError('{0} potential lacks {1}'.format(kind, exc))
    raise PreconditionError('unknown potential kind {0!r}'.format(kind))


def test_bump_peak_and_decay():
    p = bump([1.0, 2.0], 0.5, amplitude=2.0, offset=0.5)
    assert abs(p(np.array([1.0, 2.0])) - 2.5) < 1e-15
    far = p(np.array([[10.0, 2.0]]))
    assert abs(far[0] - 0.5) < 1e-12


def test_constant_shape():
    p = constant(0.7)
    assert p(np.zeros((3, 4, 2))).shape == (3, 4)
    assert math.isclose(float(p(np.zeros(2))), 0.7)
