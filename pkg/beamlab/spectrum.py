"""
Exact Laplace spectra of the closed model manifolds, resolvent norms,
Weyl counts and the excluded frequency set J.

J is assembled level by level: on [2^l, 2^(l+1)) the semiclassical
parameter is h = 2^(-l/2) and every eigenvalue mu of the level excludes
the lam^2-interval (mu - R_l, mu + R_l) with R_l = delta' h^(n + eps).
delta' comes from the measured Weyl constant so that |J| <= delta.
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from beamlab.errors import CapabilityError, PreconditionError, RangeError, SamplingError
from beamlab.workers import ordered_map

logger = logging.getLogger(__name__)

HIT_TOL = 1e-12
WEYL_WINDOW = (0.75, 2.25)

PolynomialBound = namedtuple('PolynomialBound', 'max_ratio witness constant ratios')


@dataclass(frozen=True)
class SpectrumTable:
    """
    Distinct eigenvalues of -Delta below lambda_max, sorted, with multiplicities.
    """
    tag: str
    dim: int
    values: np.ndarray
    multiplicities: np.ndarray
    lambda_max: float

    def __len__(self):
        return len(self.values)

    def expanded(self):
        return np.repeat(self.values, self.multiplicities)

    def rows(self):
        return [(float(v), int(k)) for v, k in zip(self.values, self.multiplicities)]


def _torus_slice(args):
    first, scales, bounds, lambda_max = args
    rest = np.meshgrid(*[np.arange(-b, b + 1) for b in bounds[1:]], indexing='ij')
    total = (scales[0] * first) ** 2
    for k, s in zip(rest, scales[1:]):
        total = total + (s * k) ** 2
    total = np.atleast_1d(total).ravel()
    return total[total <= lambda_max * (1.0 + 1e-12)]


def _torus_spectrum(m, lambda_max, workers):
    scales = [2.0 * math.pi / p for p in m.periods]
    bounds = [int(math.floor(math.sqrt(lambda_max) / s)) for s in scales]
    jobs = [(k, scales, bounds, lambda_max) for k in range(-bounds[0], bounds[0] + 1)]
    values = np.concatenate(ordered_map(_torus_slice, jobs, workers))
    scale = max(1.0, lambda_max)
    values, counts = np.unique(np.round(values / scale, 12) * scale, return_counts=True)
    return values, counts


def sphere_multiplicity(l, n):
    """
    Dimension of the degree-l spherical harmonics on S^n.
    """
    return (2 * l + n - 1) * math.factorial(l + n - 2) // (math.factorial(l) * math.factorial(n - 1))


def _sphere_spectrum(m, lambda_max):
    n = m.dim
    values, counts = [], []
    l = 0
    while l * (l + n - 1) <= lambda_max:
        values.append(float(l * (l + n - 1)))
        counts.append(sphere_multiplicity(l, n))
        l += 1
    return np.array(values), np.array(counts)


def spectrum(m, lambda_max, workers=1):
    """
    Every eigenvalue of -Delta_g up to lambda_max on a flat torus or a
    round sphere.
    """
    if not lambda_max >= 0.0:
        raise PreconditionError('lambda_max must be nonnegative')
    if m.tag == 'flat-torus':
        values, counts = _torus_spectrum(m, float(lambda_max), workers)
    elif m.tag == 'round-sphere' and m.closed:
        values, counts = _sphere_spectrum(m, float(lambda_max))
    else:
        raise CapabilityError('no explicit spectrum for {0!r}'.format(m))
    logger.debug('%d distinct eigenvalues below %g', len(values), lambda_max)
    return SpectrumTable(m.tag, m.dim, values, counts, float(lambda_max))


def distance_to_spectrum(table, lam2):
    """
    dist(lam2, Spec); lam2 must be far enough below lambda_max that no
    unlisted eigenvalue can be closer.
    """
    lam2 = float(lam2)
    i = np.searchsorted(table.values, lam2)
    near = table.values[max(i - 1, 0):i + 1]
    dist = float(np.min(np.abs(near - lam2)))
    if lam2 + dist > table.lambda_max:
        raise RangeError('lam^2 = {0:g} too close to the table limit {1:g}'.format(lam2, table.lambda_max))
    return dist


def resolvent_norm(table, lam2):
    """
    ||(-Delta - lam2)^-1||_{L2 -> L2} = 1/dist(lam2, Spec); math.inf when
    lam2 is an eigenvalue.
    """
    dist = distance_to_spectrum(table, lam2)
    if dist <= HIT_TOL:
        logger.warning('lam^2 = %g is an eigenvalue', lam2)
        return math.inf
    return 1.0 / dist


def eigenvalue_hits(table, lams, tol=HIT_TOL):
    """
    The lam with lam^2 on the spectrum.
    """
    return [float(lam) for lam in lams if distance_to_spectrum(table, lam * lam) <= tol]


def _count_between(table, lo, hi):
    lo_i = np.searchsorted(table.values, lo * (1.0 - 1e-12), side='left')
    hi_i = np.searchsorted(table.values, hi * (1.0 + 1e-12), side='right')
    return int(np.sum(table.multiplicities[lo_i:hi_i]))


def weyl_count(table, h):
    """
    (#Spec(-h^2 Delta) in [1, 2] with multiplicity, count h^n).
    """
    if not h > 0:
        raise PreconditionError('h must be positive')
    if table.lambda_max < 2.0 / h ** 2 * (1.0 - 1e-12):
        raise RangeError('table stops at {0:g}, weyl count needs {1:g}'.format(table.lambda_max, 2.0 / h ** 2))
    count = _count_between(table, 1.0 / h ** 2, 2.0 / h ** 2)
    return count, count * h ** table.dim


def weyl_constant(table, levels, window=WEYL_WINDOW):
    """
    Per dyadic level l (h = 2^(-l/2)): (l, count in h^2 z in window, count h^n).
    """
    rows = []
    for l in levels:
        h2 = 2.0 ** -l
        if table.lambda_max < window[1] / h2:
            raise RangeError('table stops at {0:g}, level {1} needs {2:g}'.format(table.lambda_max, l, window[1] / h2))
        count = _count_between(table, window[0] / h2, window[1] / h2)
        rows.append((l, count, count * h2 ** (table.dim / 2.0)))
    return rows


def top_level(lam_hi):
    return int(math.floor(math.log2(lam_hi * lam_hi)))


def required_lambda_max(lam_hi):
    """
    Table size build_bad_set needs for lam up to lam_hi.
    """
    return WEYL_WINDOW[1] * 2.0 ** (top_level(lam_hi) + 1)


def merge_intervals(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def _measure(intervals):
    return float(sum(b - a for a, b in intervals))


@dataclass
class BadSet:
    """
    Excluded frequencies: merged open intervals in lam (and in lam^2).
    """
    intervals: list
    squared: list
    delta: float
    eps: float
    delta_prime: float
    weyl: float
    lam_range: tuple
    per_level: dict = field(default_factory=dict)

    @property
    def eps_prime(self):
        return 2.0 + self.eps

    @property
    def measure(self):
        return _measure(self.intervals)

    @property
    def squared_measure(self):
        return _measure(self.squared)

    def radius(self, level, dim):
        """
        Excluded lam^2 half-width at a dyadic level.
        """
        return self.delta_prime * 2.0 ** (-level * (dim + self.eps) / 2.0)

    def contains(self, lam):
        lam = float(lam)
        starts = [a for a, _ in self.intervals]
        i = np.searchsorted(starts, lam, side='right') - 1
        return i >= 0 and self.intervals[i][0] < lam < self.intervals[i][1]

    def as_dict(self):
        return {'intervals': [list(i) for i in self.intervals],
                'measure': self.measure, 'squared_measure': self.squared_measure,
                'delta': self.delta, 'eps': self.eps, 'eps_prime': self.eps_prime,
                'delta_prime': self.delta_prime, 'weyl_constant': self.weyl,
                'lam_range': list(self.lam_range),
                'intervals_per_level': {str(k): v for k, v in sorted(self.per_level.items())}}


def build_bad_set(table, delta, eps, lam_hi, lam_lo=1.0):
    """
    J inside [lam_lo, lam_hi] with measured |J| <= delta.
    """
    if not (delta > 0 and eps > 0):
        raise PreconditionError('delta and eps must be positive')
    if not 1.0 <= lam_lo < lam_hi:
        raise PreconditionError('lam range must satisfy 1 <= lo < hi')
    n = table.dim
    top = top_level(lam_hi) + 1
    if table.lambda_max < required_lambda_max(lam_hi):
        raise RangeError('table stops at {0:g}, bad set needs {1:g}'.format(table.lambda_max, required_lambda_max(lam_hi)))
    weyl = max(max(row[2] for row in weyl_constant(table, range(top + 1))), 1e-12)
    delta_prime = delta * (1.0 - 2.0 ** (-eps / 2.0)) / weyl
    logger.info('bad set: W = %.4g, delta\' = %.4g', weyl, delta_prime)
    lo2, hi2 = lam_lo * lam_lo, lam_hi * lam_hi
    squared = []
    per_level = {}
    for l in range(top + 1):
        radius = delta_prime * 2.0 ** (-l * (n + eps) / 2.0)
        inside = (table.values >= 2.0 ** l) & (table.values < 2.0 ** (l + 1))
        pieces = [(max(mu - radius, lo2), min(mu + radius, hi2)) for mu in table.values[inside]]
        pieces = [(a, b) for a, b in pieces if b > a]
        per_level[l] = len(pieces)
        squared.extend(pieces)
    squared = merge_intervals(squared)
    intervals = merge_intervals([(math.sqrt(a), math.sqrt(b)) for a, b in squared])
    bad = BadSet(intervals, squared, float(delta), float(eps), delta_prime, weyl,
                 (float(lam_lo), float(lam_hi)), per_level)
    logger.debug('bad set: %d intervals, |J| = %.3e', len(intervals), bad.measure)
    return bad


def sample_outside(bad, count, seed=0):
    """
    count uniform draws from the bad set's lam range minus J, sorted.
    """
    rng = np.random.default_rng(seed)
    lo, hi = bad.lam_range
    out = []
    while len(out) < count:
        for lam in rng.uniform(lo, hi, 2 * count):
            if not bad.contains(lam):
                out.append(float(lam))
    return sorted(out[:count])


def verify_polynomial_bound(table, bad, lams, eps=None):
    """
    Largest resolvent_norm(lam^2) lam^-(n + eps) over samples avoiding J,
    its argmax, and the construction constant 2^((n + eps)/2)/delta'
    every ratio must stay below.
    """
    eps = bad.eps if eps is None else eps
    n = table.dim
    ratios = []
    for lam in lams:
        if bad.contains(lam):
            raise SamplingError('sample lam = {0:g} lies in J'.format(lam))
        ratios.append(resolvent_norm(table, lam * lam) * lam ** -(n + eps))
    if not ratios:
        raise SamplingError('no samples')
    k = int(np.argmax(ratios))
    constant = 2.0 ** ((n + eps) / 2.0) / bad.delta_prime
    return PolynomialBound(float(ratios[k]), float(lams[k]), constant, ratios)


def export_spectrum_csv(table, file_name):
    import csv

    with open(file_name, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['eigenvalue', 'multiplicity'])
        for value, count in table.rows():
            writer.writerow(['{0:.12g}'.format(value), count])


def test_merge_intervals():
    assert merge_intervals([(3.0, 4.0), (0.0, 1.0), (0.5, 2.0)]) == [(0.0, 2.0), (3.0, 4.0)]
    assert merge_intervals([]) == []


def test_sphere_multiplicity():
    assert [sphere_multiplicity(l, 2) for l in range(4)] == [1, 3, 5, 7]
    assert [sphere_multiplicity(l, 3) for l in range(4)] == [1, 4, 9, 16]
