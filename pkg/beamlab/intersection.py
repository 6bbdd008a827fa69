"""
Numerical evidence for the two-geodesic intersection conditions.

A witness at x0 is a pair of non-tangential geodesics through x0 that
meet only there, verified on a product grid of parameters. Everything
here is evidence at a stated resolution, never a proof.
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize, minimize_scalar

from beamlab.errors import (DegenerateInputError, GeometryError, IntegrationError,
                            PreconditionError, SearchFailure)
from beamlab.geodesics import integrate_geodesic
from beamlab.jacobi import jacobi_along, order_of_conjugacy
from beamlab.manifold import orthonormal_frame, unit_directions
from beamlab.workers import ordered_map

logger = logging.getLogger(__name__)

AngleBound = namedtuple('AngleBound', 'constant resolution theta rho')

ROW_CHUNK = 256
INTERSECTION_TOL = 1e-7
NEAR_KERNEL_TOL = 1e-4


@dataclass
class GeodesicPairWitness:
    gamma: object
    eta: object
    point: np.ndarray
    t0: float
    tau0: float
    theta: float
    lengths: tuple
    resolution: float
    separation: float
    exclusion: float
    c0: float = None
    r: float = None

    def summary(self):
        return {'point': [float(c) for c in self.point], 'theta': self.theta,
                'lengths': list(self.lengths), 'resolution': self.resolution,
                'separation': self.separation, 'exclusion': self.exclusion,
                'c0': self.c0, 'r': self.r}


@dataclass
class PerturbationReport:
    status: str
    hypothesis_holds: bool
    conjugacy_order: int
    intersections: list = field(default_factory=list)
    alpha: np.ndarray = None
    directions: list = field(default_factory=list)
    verification: list = field(default_factory=list)


@dataclass
class SurveyReport:
    witnesses: list
    skipped: list
    failed: list
    T: float
    theta_min: float
    r: float
    c0: float

    @property
    def coverage(self):
        total = len(self.witnesses) + len(self.failed)
        return len(self.witnesses) / total if total else 0.0

    @property
    def incomplete(self):
        return len(self.failed) > 0


def pairwise_distance(m, p, q):
    """
    d(p_a, q_b) for point arrays p (N, n), q (M, n), chunked over rows.
    """
    out = np.empty((p.shape[0], q.shape[0]))
    for start in range(0, p.shape[0], ROW_CHUNK):
        stop = start + ROW_CHUNK
        out[start:stop] = m.distance(p[start:stop, None, :], q[None, :, :])
    return out


def param_grid(path, spacing, lo=None, hi=None):
    """
    Multiples of spacing inside [lo, hi] (default the exit interval), so
    halving the spacing gives a superset.
    """
    lo = path.l_minus if lo is None else lo
    hi = path.l_plus if hi is None else hi
    return spacing * np.arange(math.ceil(lo / spacing - 1e-9), math.floor(hi / spacing + 1e-9) + 1)


def _acute_angle(m, x0, v, w):
    c = float(m.inner(x0, v, w))
    return math.acos(min(abs(c), 1.0)), c


def _usable_line(m, x0, v, spacing):
    try:
        path = integrate_geodesic(m, x0, v)
    except IntegrationError as exc:
        logger.warning('direction %s dropped: %s', v, exc)
        return None
    if path.trapped or any(path.tangential):
        return None
    ts = param_grid(path, spacing)
    far = np.abs(ts) > 20.0 * spacing
    if np.any(far):
        back = m.distance(path.position(ts[far]), x0[None, :])
        if float(np.min(back)) <= 10.0 * spacing:
            return None
    return path


def _pair_distances(m, gamma, eta, spacing):
    ts = param_grid(gamma, spacing)
    taus = param_grid(eta, spacing)
    return ts, taus, pairwise_distance(m, gamma.position(ts), eta.position(taus))


def _reverse(m, x0, path):
    return integrate_geodesic(m, x0, -path.v[np.argmin(np.abs(path.t))])


def _try_pair(m, x0, gamma, eta, theta, resolution):
    """
    (witness, None) if x0 is the only grid meeting point of the pair, else
    (None, near-miss) or (None, None) when the pair is too short to test.
    """
    v = gamma.v[np.argmin(np.abs(gamma.t))]
    w = eta.v[np.argmin(np.abs(eta.t))]
    if float(m.inner(x0, v, w)) < 0.0:
        eta = _reverse(m, x0, eta)
    spacing = min(resolution, 0.01 * min(gamma.length, eta.length))
    exclusion = 20.0 * spacing / math.sin(theta)
    if exclusion >= 0.5 * min(gamma.length, eta.length):
        return None, None
    ts, taus, dist = _pair_distances(m, gamma, eta, spacing)
    far = np.maximum(np.abs(ts)[:, None], np.abs(taus)[None, :]) > exclusion
    if not np.any(far):
        return None, None
    masked = np.where(far, dist, np.inf)
    k = np.unravel_index(np.argmin(masked), masked.shape)
    separation = float(masked[k])
    if separation > 10.0 * spacing:
        logger.debug('witness at %s: theta %.4f, separation %.3g', x0, theta, separation)
        return GeodesicPairWitness(gamma, eta, x0, 0.0, 0.0, theta, (gamma.length, eta.length),
                                   spacing, separation, exclusion), None
    return None, {'theta': theta, 'distance': separation, 't': float(ts[k[0]]), 'tau': float(taus[k[1]])}


def check_h_at_point(m, x0, directions=None, angle_range=None, resolution=0.01,
                     max_pairs=400, workers=1):
    """
    Search line pairs through x0 for a witness: both non-tangential, neither
    returning to x0, and x0 their only common point on a product grid.

    Pairs are tried widest angle first, then shortest. On failure a
    SearchFailure carries the closest near-misses.
    """
    x0 = m.check_point(x0)
    if not m.closed and float(m.boundary_level(x0)) > -1e-9:
        raise PreconditionError('x0 must be an interior point')
    lo_angle, hi_angle = angle_range if angle_range is not None else (0.0, math.pi / 2.0)
    vectors = unit_directions(m, x0, directions, half=True)
    lines = ordered_map(lambda v: _usable_line(m, x0, v, resolution), list(vectors), workers)
    usable = [p for p in lines if p is not None]
    report = {'point': [float(c) for c in x0], 'directions': len(vectors),
              'usable_lines': len(usable), 'resolution': resolution, 'near_misses': []}
    if len(usable) < 2:
        raise SearchFailure('no pair of non-tangential geodesics through {0}'.format(list(x0)), report)

    pairs = []
    for i in range(len(usable)):
        for j in range(i + 1, len(usable)):
            theta, _ = _acute_angle(m, x0, usable[i].v[np.argmin(np.abs(usable[i].t))],
                                    usable[j].v[np.argmin(np.abs(usable[j].t))])
            if lo_angle <= theta <= hi_angle and theta > 0.0:
                pairs.append((-theta, max(usable[i].length, usable[j].length), i, j))
    pairs.sort()

    misses = []
    for neg_theta, _, i, j in pairs[:max_pairs]:
        witness, miss = _try_pair(m, x0, usable[i], usable[j], -neg_theta, resolution)
        if witness is not None:
            return witness
        if miss is not None:
            misses.append(miss)
    misses.sort(key=lambda e: -e['distance'])
    report['near_misses'] = misses[:5]
    report['pairs_tried'] = min(len(pairs), max_pairs)
    raise SearchFailure('no witness at {0} with resolution {1}'.format(list(x0), resolution), report)


def witness_for_pair(m, x0, v, w, resolution=0.01):
    """
    Verify a given pair of directions at x0 the way check_h_at_point does.
    """
    x0 = m.check_point(x0)
    gamma = _usable_line(m, x0, np.asarray(v, dtype=float), resolution)
    eta = _usable_line(m, x0, np.asarray(w, dtype=float), resolution)
    report = {'point': [float(c) for c in x0], 'resolution': resolution, 'near_misses': []}
    if gamma is None or eta is None:
        raise SearchFailure('given directions do not both give usable geodesics', report)
    theta, _ = _acute_angle(m, x0, v, w)
    if theta <= 0.0:
        raise SearchFailure('given directions are parallel', report)
    witness, miss = _try_pair(m, x0, gamma, eta, theta, resolution)
    if witness is None:
        report['near_misses'] = [miss] if miss else []
        raise SearchFailure('given pair meets again away from {0}'.format(list(x0)), report)
    return witness


def estimate_c0(witness, r_candidate, spacing=None):
    """
    max(|t - t0|, |tau - tau0|) / d(gamma(t), eta(tau)) over grid pairs with d < r_candidate.
    """
    m = witness.gamma.manifold
    if not r_candidate < m.injectivity_radius / 2.0:
        raise PreconditionError('r must stay below Inj/2 = {0:g}'.format(m.injectivity_radius / 2.0))
    spacing = witness.resolution if spacing is None else spacing
    ts, taus, dist = _pair_distances(m, witness.gamma, witness.eta, spacing)
    offset = np.maximum(np.abs(ts - witness.t0)[:, None], np.abs(taus - witness.tau0)[None, :])
    near = (dist > 1e-12) & (dist < r_candidate)
    if not np.any(near):
        raise DegenerateInputError('no grid pairs closer than r = {0:g}'.format(r_candidate))
    c0 = float(np.max(offset[near] / dist[near]))
    witness.c0, witness.r = c0, r_candidate
    return c0


def _plane_direction(m, x0, v, theta):
    e = orthonormal_frame(m, x0, v)[:, 0]
    return math.cos(theta) * v + math.sin(theta) * e


def angle_distance_constant(m, x0, theta, rho, v=None, resolution=0.01):
    """
    min d(gamma(t), eta(tau)) / (|t| sin theta) over a grid of |t|, |tau| <= rho
    for two geodesics through x0 at angle theta; the t = 0 row is left out.
    """
    x0 = m.check_point(x0)
    if m.curvature is not None and m.curvature > 0 and not rho < math.pi / math.sqrt(m.curvature):
        raise PreconditionError('rho must stay below pi/sqrt(kappa)')
    if v is None:
        v = unit_directions(m, x0, 8)[0]
    w = _plane_direction(m, x0, v, theta)
    gamma = integrate_geodesic(m, x0, v, t_span=(-rho, rho))
    eta = integrate_geodesic(m, x0, w, t_span=(-rho, rho))
    ts = param_grid(gamma, resolution, -rho, rho)
    taus = param_grid(eta, resolution, -rho, rho)
    ts = ts[ts != 0.0]
    dist = pairwise_distance(m, gamma.position(ts), eta.position(taus))
    ratio = np.min(dist, axis=1) / (np.abs(ts) * math.sin(theta))
    constant = float(np.min(ratio))
    if constant <= 0.0:
        raise GeometryError('geodesics meet again inside the window (constant {0:g})'.format(constant))
    return AngleBound(constant, resolution, theta, rho)


def _intersections(m, ray, line, spacing, exclusion):
    """
    Points where ray (t > exclusion) meets line, refined to INTERSECTION_TOL.
    """
    ts = param_grid(ray, spacing, exclusion, ray.t[-1])
    rs = param_grid(line, spacing, line.t[0], line.t[-1])
    dist = pairwise_distance(m, ray.position(ts), line.position(rs))
    labels, count = ndimage.label(dist < 3.0 * spacing)
    found = []
    for k in range(1, count + 1):
        cells = np.argwhere(labels == k)
        best = cells[np.argmin(dist[labels == k])]

        def gap(z):
            return float(m.distance(ray.position(np.array(z[0])), line.position(np.array(z[1])))) ** 2

        res = minimize(gap, [ts[best[0]], rs[best[1]]], method='Nelder-Mead',
                       options={'xatol': 1e-12, 'fatol': 1e-24, 'maxiter': 2000})
        tc = float(res.x[0])
        if tc < 0.5 * exclusion or any(abs(tc - f[0]) < 1e-6 for f in found):
            continue
        if math.sqrt(max(res.fun, 0.0)) < INTERSECTION_TOL:
            found.append((float(res.x[0]), float(res.x[1]), ray.position(np.array(res.x[0]))))
    return found


def _blocked_subspace(m, jac, ray, line, t, r):
    """
    Orthonormal basis (columns) of the first-order directions alpha that keep
    the ray on the line near the intersection at (t, r).
    """
    b = jac.at(t)[2]
    u, s, vt = np.linalg.svd(b)
    near = np.abs(jac.t - t) <= 0.1
    scale = float(np.max(jac.singular_values[near, 0])) if np.any(near) else float(s[0])
    kernel = s < NEAR_KERNEL_TOL * max(scale, np.finfo(float).tiny)
    columns = [vt[i] for i in np.nonzero(kernel)[0]]
    if m.dim >= 3:
        x, _, e = ray.state_at(np.array(t))
        g = m.metric(m.reduce(x))
        w = e.T @ g @ line.velocity(np.array(r))
        keep = ~kernel
        columns.append(vt[keep].T @ ((u[:, keep].T @ w) / s[keep]))
    if not columns:
        return np.zeros((m.dim - 1, 0))
    q, rr = np.linalg.qr(np.stack(columns, axis=-1))
    return q[:, np.abs(np.diag(rr)) > 1e-12]


def _candidate_alphas(k, count=360):
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        angles = math.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    raise PreconditionError('direction perturbation is implemented for n <= 3')


def _min_gap_to_point(m, path, point, lo, hi, spacing):
    ts = param_grid(path, spacing, lo, hi)
    d = m.distance(path.position(ts), point[None, :])
    i = int(np.argmin(d))
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, len(ts) - 1)]
    res = minimize_scalar(lambda s: float(m.distance(path.position(np.array(s)), point)),
                          bounds=(a, b), method='bounded', options={'xatol': 1e-12})
    return float(min(res.fun, d[i]))


def perturb_direction_avoid(m, x, u, v, steps=(1, 2, 4, 8, 16, 32), alpha_size=0.1,
                            length=None, spacing=0.02, verify_last=2):
    """
    Tilt v off every first-order bad plane of the intersections of the ray
    gamma_{x,v} with the geodesic gamma_{x,u}, returning the directions
    v_n = cos(|alpha|/n) v + sin(|alpha|/n) alpha_hat and checks on the
    last few of them.
    """
    x = m.check_point(x)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = m.dim
    if length is None:
        length = 2.0 * m.diameter
    order = order_of_conjugacy(m, x, directions=64, length=length)
    holds = n >= 3 and order <= n - 3
    if n >= 3 and not holds:
        logger.info('order of conjugacy %d exceeds n - 3 = %d', order, n - 3)
        return PerturbationReport('hypothesis-violated', False, order)

    line = integrate_geodesic(m, x, u, t_span=(-length, length))
    ray = integrate_geodesic(m, x, v, t_span=(0.0, length))
    exclusion = 20.0 * spacing
    hits = _intersections(m, ray, line, spacing, exclusion)
    jac = jacobi_along(ray) if hits else None
    blocked = [_blocked_subspace(m, jac, ray, line, t, r) for t, r, _ in hits]

    best, score = None, -1.0
    for cand in _candidate_alphas(n - 1):
        angles = [math.acos(min(np.linalg.norm(q.T @ cand), 1.0)) if q.shape[1] else math.pi / 2.0
                  for q in blocked]
        margin = min(angles, default=math.pi / 2.0)
        if margin > score:
            best, score = cand, margin
    if score <= 1e-9:
        raise SearchFailure('every perturbation direction is blocked',
                            {'intersections': [(t, r) for t, r, _ in hits]})

    frame = ray.frame[0]
    alpha_hat = frame @ best
    directions = [math.cos(alpha_size / k) * v + math.sin(alpha_size / k) * alpha_hat for k in steps]
    status = 'ok' if holds else 'degenerate-dimension'
    report = PerturbationReport(status, holds, order, [(t, r, p) for t, r, p in hits],
                                alpha_size * alpha_hat, directions)
    for k, vn in list(zip(steps, directions))[-verify_last:]:
        perturbed = integrate_geodesic(m, x, vn, t_span=(0.0, length))
        gaps = [_min_gap_to_point(m, perturbed, p, exclusion, length, spacing) for _, _, p in hits]
        crossings = _intersections(m, perturbed, line, spacing, exclusion)
        report.verification.append({'n': k, 'min_gap': min(gaps, default=math.inf),
                                    'misses_sampled_points': all(g > INTERSECTION_TOL for g in gaps),
                                    'disjoint': not crossings})
    return report


def cylinder_h1_constants(a):
    """
    (theta0, T, c0, r bound) for the flat cylinder of height a.
    """
    theta0 = 0.25 * math.atan(math.pi / a)
    return theta0, a / math.cos(2.0 * theta0), 1.0 / math.sin(theta0), math.pi / 2.0


def cylinder_pair(m, x0, theta):
    """
    Vertical geodesic and helix of angle theta through x0 = (angle, height),
    both started on the lower boundary circle. They reach x0 at t = height
    and tau = height / cos(theta).
    """
    phi, s0 = float(x0[0]), float(x0[1])
    gamma = integrate_geodesic(m, [phi, 0.0], [0.0, 1.0])
    eta = integrate_geodesic(m, [phi - s0 * math.tan(theta), 0.0], [math.sin(theta), math.cos(theta)])
    return gamma, eta


def _survey_point(m, x, angle_range, r, search):
    if not m.closed and float(m.boundary_level(m.reduce(x))) > -1e-9:
        return 'skipped', {'point': [float(c) for c in x], 'reason': 'boundary'}
    try:
        witness = check_h_at_point(m, x, angle_range=angle_range, **search)
    except SearchFailure as exc:
        return 'failed', exc.report
    radius = r if r is not None else min(0.5 * witness.separation, 0.499 * m.injectivity_radius)
    estimate_c0(witness, radius)
    return 'witness', witness


def h1_survey(m, points, theta0=None, r=None, workers=1, **search):
    """
    Run the witness search and c0 estimate at each sample point and collect
    the global constants (T, theta0, r, c0) over the witnesses.
    """
    angle_range = (theta0, min(2.0 * theta0, math.pi / 2.0)) if theta0 is not None else None
    results = ordered_map(lambda x: _survey_point(m, np.asarray(x, dtype=float), angle_range, r, search),
                          list(points), workers)
    witnesses = [w for kind, w in results if kind == 'witness']
    skipped = [w for kind, w in results if kind == 'skipped']
    failed = [w for kind, w in results if kind == 'failed']
    report = SurveyReport(
        witnesses, skipped, failed,
        T=max((max(w.lengths) for w in witnesses), default=math.nan),
        theta_min=min((w.theta for w in witnesses), default=math.nan),
        r=min((w.r for w in witnesses), default=math.nan),
        c0=max((w.c0 for w in witnesses), default=math.nan))
    if report.incomplete:
        logger.warning('%d of %d sample points without witness', len(failed), len(points))
    return report
