"""
Hoelder norms of sampled functions, the frequency function N(p) and
extension by zero.

Seminorms are maxima over sampled pairs, so they bound the true seminorm
from below; every result records the pair scheme it used.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from beamlab.errors import PreconditionError
from beamlab.quadrature import box_grid

logger = logging.getLogger(__name__)

ALL_PAIRS_LIMIT = 2000
ROW_CHUNK = 512


@dataclass
class HolderFunction:
    """
    Samples values[i] = f(points[i]) with Hoelder exponent alpha in (0, 1).

    distance(p, q) defaults to the Euclidean chart distance and must
    broadcast like numpy arithmetic.
    """
    points: np.ndarray
    values: np.ndarray
    alpha: float
    distance: object = None
    sup: float = None
    seminorm: float = None
    scheme: str = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.values = np.asarray(self.values).ravel()
        self.points = self.points.reshape(-1, self.points.shape[-1])
        if self.points.shape[0] != self.values.shape[0]:
            raise PreconditionError('points and values differ in length')
        if not 0.0 < self.alpha < 1.0:
            raise PreconditionError('Hoelder exponent must lie in (0, 1), got {0}'.format(self.alpha))

    def dist(self, p, q):
        if self.distance is None:
            return np.linalg.norm(p - q, axis=-1)
        return self.distance(p, q)


def _ratio_max(f, rows, cols):
    d = f.dist(f.points[rows], f.points[cols])
    jump = np.abs(f.values[rows] - f.values[cols])
    ok = d > 0
    if not np.any(ok):
        return 0.0, None
    ratio = np.where(ok, jump / np.where(ok, d, 1.0) ** f.alpha, 0.0)
    k = int(np.argmax(ratio))
    return float(ratio[k]), k


def _all_pairs(f):
    best = 0.0
    n = f.points.shape[0]
    for start in range(0, n, ROW_CHUNK):
        stop = min(start + ROW_CHUNK, n)
        d = f.dist(f.points[start:stop, None, :], f.points[None, :, :])
        jump = np.abs(f.values[start:stop, None] - f.values[None, :])
        with np.errstate(divide='ignore', invalid='ignore'):
            ratio = np.where(d > 0, jump / d ** f.alpha, 0.0)
        best = max(best, float(np.max(ratio)))
    return best


def _sampled_pairs(f, count, seed, neighbours=8):
    rng = np.random.default_rng(seed)
    n, dim = f.points.shape
    tree = cKDTree(f.points)
    k = min(neighbours + 1, n)
    _, near = tree.query(f.points, k=k)
    rows = np.repeat(np.arange(n), k - 1)
    cols = near[:, 1:].ravel()
    best, _ = _ratio_max(f, rows, cols)

    extent = float(np.max(np.ptp(f.points, axis=0)))
    step = float(np.median(tree.query(f.points, k=2)[0][:, 1]))
    scales = np.geomspace(max(step, 1e-12), max(extent, step), 12)
    per_scale = max(count // len(scales), 1)
    top = []
    for s in scales:
        i = rng.integers(0, n, per_scale)
        direction = rng.normal(size=(per_scale, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        _, j = tree.query(f.points[i] + s * direction)
        value, where = _ratio_max(f, i, j)
        if where is not None:
            top.append((value, i[where], j[where]))
        best = max(best, value)
    top.sort(reverse=True)
    for _, i, j in top[:4]:
        _, ni = tree.query(f.points[i], k=k)
        _, nj = tree.query(f.points[j], k=k)
        rows, cols = np.meshgrid(np.atleast_1d(ni), np.atleast_1d(nj), indexing='ij')
        value, _ = _ratio_max(f, rows.ravel(), cols.ravel())
        best = max(best, value)
    return best


def holder_norm(f, scheme='auto', pairs=200000, seed=0):
    """
    (sup, seminorm, sup + seminorm) of the samples.

    scheme 'all' compares every pair; 'sampled' uses nearest neighbours and
    random pairs stratified over separation scales; 'auto' picks 'all' up
    to 2000 points.
    """
    if f.points.shape[0] < 2:
        raise PreconditionError('Hoelder norm needs at least two samples')
    if scheme == 'auto':
        scheme = 'all' if f.points.shape[0] <= ALL_PAIRS_LIMIT else 'sampled'
    if scheme == 'all':
        seminorm = _all_pairs(f)
    elif scheme == 'sampled':
        seminorm = _sampled_pairs(f, pairs, seed)
    else:
        raise PreconditionError('unknown pair scheme {0!r}'.format(scheme))
    sup = float(np.max(np.abs(f.values)))
    f.sup, f.seminorm, f.scheme = sup, seminorm, scheme
    return sup, seminorm, sup + seminorm


def frequency_function(p, **options):
    """
    N(p) = |p|_{C^{0,alpha}} / |p|_inf, and 0 for p = 0.
    """
    if not np.any(p.values != 0):
        return 0.0
    sup, _, norm = holder_norm(p, **options)
    return norm / sup


def c1_norm(values, grid, metric=None):
    """
    sup |f| + sup |grad f|_g on a grid, gradient by central differences.
    metric maps points (..., n) to (..., n, n); None means Euclidean.
    """
    values = np.asarray(values, dtype=float)
    grads = np.gradient(values, *grid.axes, edge_order=2)
    if grid.dim == 1:
        grads = [grads]
    grad = np.stack(grads, axis=-1)
    if metric is None:
        size = np.sqrt(np.sum(grad * grad, axis=-1))
    else:
        ginv = np.linalg.inv(metric(grid.points()))
        size = np.sqrt(np.einsum('...i,...ij,...j->...', grad, ginv, grad))
    return float(np.max(np.abs(values)) + np.max(size))


def embedding_constant(diameter, alpha):
    """
    B with |f|_{C^{0,alpha}} <= B |f|_{C^1} on a convex chart of the given diameter.
    """
    return max(1.0, diameter ** (1.0 - alpha))


def check_admissible_coefficients(coefficients):
    """
    Coefficients a_0..a_N of sum a_k r^k with a_k >= 0 and k a_k <= a_{k-1}.
    """
    a = np.asarray(coefficients, dtype=float)
    if np.any(a < 0.0):
        raise PreconditionError('coefficients must be nonnegative')
    k = np.arange(1, len(a))
    bad = np.nonzero(k * a[1:] > a[:-1] * (1.0 + 1e-12))[0]
    if bad.size:
        raise PreconditionError('k a_k <= a_(k-1) fails at k = {0}'.format(int(bad[0]) + 1))
    return a


def exponential_coefficients(a0, degree):
    """
    a_k = a0 / k!, the extremal admissible family.
    """
    return np.array([a0 / math.factorial(k) for k in range(degree + 1)])


def radial_polynomial(coefficients, center):
    """
    p(x) = sum a_k |x - center|^k.
    """
    a = check_admissible_coefficients(coefficients)
    center = np.asarray(center, dtype=float)

    def p(x):
        r = np.linalg.norm(np.asarray(x, dtype=float) - center, axis=-1)
        return np.polynomial.polynomial.polyval(r, a)
    return p


def extend_by_zero(f, radius, dim, half_width, spacing, alpha, center=None, shell_samples=256):
    """
    Sample f on the ball of the given radius and on the enclosing box with f
    set to zero outside the ball; returns both HolderFunctions. f must
    vanish on the sphere.
    """
    if half_width < radius:
        raise PreconditionError('box must contain the ball')
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if dim == 1:
        shell = center + radius * np.array([[-1.0], [1.0]])
    else:
        rng = np.random.default_rng(0)
        shell = rng.normal(size=(shell_samples, dim))
        shell = center + radius * shell / np.linalg.norm(shell, axis=1, keepdims=True)
    trace = float(np.max(np.abs(f(shell))))
    if trace > 1e-8:
        raise PreconditionError('function does not vanish on the sphere (max {0:.3e})'.format(trace))
    grid = box_grid(center - half_width, center + half_width, spacing)
    points = grid.points().reshape(-1, dim)
    inside = np.linalg.norm(points - center, axis=1) <= radius
    values = np.zeros(points.shape[0], dtype=np.result_type(f(points[:1]), float))
    values[inside] = f(points[inside])
    return (HolderFunction(points[inside], values[inside], alpha),
            HolderFunction(points, values, alpha))


def test_holder_constant():
    f = HolderFunction(np.linspace(0.0, 1.0, 11), np.full(11, 3.0), 0.5)
    assert holder_norm(f) == (3.0, 0.0, 3.0)


def test_holder_identity_on_interval():
    x = np.linspace(0.0, 1.0, 101)
    sup, seminorm, norm = holder_norm(HolderFunction(x, x, 0.3))
    assert abs(seminorm - 1.0) < 1e-12
    assert abs(norm - 2.0) < 1e-12


def test_frequency_function_conventions():
    x = np.linspace(0.0, 1.0, 21)
    assert frequency_function(HolderFunction(x, np.zeros(21), 0.5)) == 0.0
    assert frequency_function(HolderFunction(x, np.full(21, -2.0), 0.5)) == 1.0
