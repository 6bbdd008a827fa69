"""
Recovery of p(x0) from two Gaussian beams crossing at x0.

With phases phi, psi of the beams v, w and Psi = 2 Im(phi + psi),

    I(lam) = lam^{n/2} int p |v|^2 |w|^2 dV_g
          -> (2 pi)^{n/2} p(x0) |a0(x0)|^2 |b0(x0)|^2 / sqrt(det Psi''(x0))

where the beams are taken without their lam^{(n-1)/8} normalisation.
recover_point_value inverts the leading term; error_decay measures how
fast the inversion converges along a lam ladder.

boundary_concentration checks the half-space limit

    int f |v_mu|^2 dx -> f(0)/2,
    v_mu = mu^{-alpha(n-1)/2 - 1/2} eta(x/mu^alpha) exp((i/mu)(tau'.x' + i x_n)).
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.integrate import quad

from beamlab.beams import beam_phase, build_beam, evaluate_beam
from beamlab.errors import (CapabilityError, GeometryError, PreconditionError,
                            ResolutionError, SupportError)
from beamlab.intersection import estimate_c0, witness_for_pair
from beamlab.quadrature import Grid, log_slope, odd_count, require_resolution, simpson_with_error
from beamlab.workers import ordered_map

logger = logging.getLogger(__name__)

MEETING_TOL = 1e-7
LEAKAGE_TOL = 1e-6
TAIL = math.log(1e10)


@dataclass
class HessianPsi:
    """
    Psi''(x0) in chart coordinates with the metric at x0; eigenvalues are
    relative to g, det is the determinant of the (1,1) tensor.
    """
    matrix: np.ndarray
    metric: np.ndarray
    eigenvalues: np.ndarray
    theta: float
    bound: float
    psi_at_x0: float = 0.0
    gradient_at_x0: float = 0.0

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def c(self):
        return float(self.eigenvalues[0])

    @property
    def det(self):
        return float(np.prod(self.eigenvalues))

    @property
    def coercive(self):
        return self.c >= 0.9 * self.bound

    def describe(self):
        return {'eigenvalues': [float(e) for e in self.eigenvalues], 'det': self.det,
                'c': self.c, 'theta': self.theta, 'lower_bound': self.bound,
                'coercive': self.coercive, 'psi_at_x0': self.psi_at_x0,
                'gradient_at_x0': self.gradient_at_x0}


def psi_values(beam_v, beam_w, x):
    """
    Psi = 2 Im(phi + psi) at points x; NaN outside either tube.
    """
    return 2.0 * (beam_phase(beam_v, x).imag + beam_phase(beam_w, x).imag)


def hessian_psi(beam_v, beam_w, x0, t0=0.0, tau0=0.0, theta=None):
    """
    Psi''(x0) = 2 sum over both beams of (g E) Im H (g E)^T at the crossing
    (times t0 on v's geodesic and tau0 on w's), with the coercivity check
    c >= 0.9 min(eig Im H) sin^2 theta.
    """
    m = beam_v.path.manifold
    x0 = m.reduce(np.asarray(x0, dtype=float))
    gap = max(float(np.linalg.norm(m.chart_difference(beam.path.position(np.array(t)), x0)))
              for beam, t in ((beam_v, t0), (beam_w, tau0)))
    if gap > MEETING_TOL:
        raise GeometryError('beams do not meet at x0 (gap {0:.2e})'.format(gap))
    g = m.metric(x0)
    q = np.zeros((m.dim, m.dim))
    velocities = []
    smallest = math.inf
    for beam, t in ((beam_v, t0), (beam_w, tau0)):
        _, vel, e = beam.path.state_at(np.array(t))
        h = beam.h_at(np.array(t))
        ge = g @ e
        q += 2.0 * ge @ h.imag @ ge.T
        smallest = min(smallest, float(np.min(np.linalg.eigvalsh(h.imag))))
        velocities.append(vel)
    q = 0.5 * (q + q.T)
    if theta is None:
        theta = math.acos(min(abs(float(velocities[0] @ g @ velocities[1])), 1.0))
    if theta <= 1e-9:
        raise PreconditionError('beams are parallel at x0')
    eigenvalues = linalg.eigh(q, g, eigvals_only=True)
    hess = HessianPsi(q, g, eigenvalues, theta, smallest * math.sin(theta) ** 2)

    step = 1e-5
    hess.psi_at_x0 = float(psi_values(beam_v, beam_w, x0[None, :])[0])
    grad = []
    for i in range(m.dim):
        e = np.zeros(m.dim)
        e[i] = step
        pair = psi_values(beam_v, beam_w, np.stack([x0 + e, x0 - e]))
        grad.append((pair[0] - pair[1]) / (2.0 * step))
    hess.gradient_at_x0 = float(np.max(np.abs(grad)))
    if abs(hess.psi_at_x0) > 1e-8:
        raise GeometryError('Psi(x0) = {0:.2e} is not zero'.format(hess.psi_at_x0))
    if not hess.coercive:
        logger.warning('Psi\'\'(x0) smallest eigenvalue %.4g below 0.9 x %.4g', hess.c, hess.bound)
    return hess


def _distance_from(m, x0, points):
    try:
        return m.distance(x0, points)
    except CapabilityError:
        d = m.chart_difference(x0, points)
        return np.sqrt(np.einsum('...i,ij,...j->...', d, m.metric(x0), d))


def _density(beam_v, beam_w, points, factors=(1.0, 1.0)):
    """
    |v|^2 |w|^2 dV_g with the beams' lam normalisation removed; zero outside M.
    """
    m = beam_v.path.manifold
    v = factors[0] * evaluate_beam(beam_v, points) / beam_v.lam ** beam_v.exponent
    w = factors[1] * evaluate_beam(beam_w, points) / beam_w.lam ** beam_w.exponent
    weight = m.volume_density(points)
    if not m.closed:
        weight = np.where(m.contains(points), weight, 0.0)
    return np.abs(v * np.conj(v)) * np.abs(w * np.conj(w)) * weight


def recovery_grid(beam_v, beam_w, x0, hessian, per_width=8):
    """
    Chart box around x0 where lam^{n/2} e^{-lam Psi} is not negligible,
    capped by the overlap of the two tubes, spacing lam^{-1/2}/per_width.
    """
    m = beam_v.path.manifold
    lam = max(beam_v.lam, beam_w.lam)
    reach = math.sqrt(4.0 * TAIL / (lam * max(hessian.c, 1e-12)))
    tube = max(beam_v.cutoff.support * beam_v.delta1, beam_w.cutoff.support * beam_w.delta1)
    reach = min(reach, 2.2 * tube / math.sin(hessian.theta))
    scale = 1.0 / math.sqrt(float(np.min(np.linalg.eigvalsh(hessian.metric))))
    spacing = lam ** -0.5 / per_width
    axes = []
    for i in range(m.dim):
        half = reach * scale
        lo, hi = x0[i] - half, x0[i] + half
        if m.periods[i] is not None:
            half = min(half, m.periods[i] / 2.0)
            lo, hi = x0[i] - half, x0[i] + half
        else:
            lo, hi = max(lo, m.lower[i]), min(hi, m.upper[i])
        axes.append(np.linspace(lo, hi, odd_count(hi - lo, spacing)))
    return Grid(tuple(axes))


def _integral_with_error(p, beam_v, beam_w, grid, factors=(1.0, 1.0)):
    points = grid.points()
    n = grid.dim
    lam = beam_v.lam
    density = _density(beam_v, beam_w, points, factors)
    value, error = simpson_with_error(lam ** (n / 2.0) * p(points) * density, grid)
    return float(value), float(error), density


def support_leakage(beam_v, beam_w, grid, x0, radius):
    """
    Share of int |v|^2 |w|^2 lying outside the ball B_radius(x0).
    """
    m = beam_v.path.manifold
    points = grid.points()
    density = _density(beam_v, beam_w, points)
    outside = _distance_from(m, x0, points) > radius
    total = float(np.sum(density))
    return float(np.sum(density[outside])) / total if total > 0 else 0.0


def quadruple_product_integral(p, beam_v, beam_w, grid, x0=None, radius=None, factors=(1.0, 1.0)):
    """
    lam^{n/2} int p |v|^2 |w|^2 dV_g on grid; with x0 and radius given the
    product must be supported in B_radius(x0).
    """
    require_resolution(grid, max(beam_v.lam, beam_w.lam) ** -0.5, 8, 'quadruple product')
    if x0 is not None and radius is not None:
        share = support_leakage(beam_v, beam_w, grid, np.asarray(x0, dtype=float), radius)
        if share > LEAKAGE_TOL:
            raise SupportError('{0:.2e} of the beam product lies outside B({1:g})'.format(share, radius))
    value, _, _ = _integral_with_error(p, beam_v, beam_w, grid, factors)
    return value


def recover_point_value(value, hessian, a0, b0):
    """
    p(x0) ~ I sqrt(det Psi''(x0)) / ((2 pi)^{n/2} |a0|^2 |b0|^2).

    hessian is a HessianPsi or a matrix in g-orthonormal coordinates.
    """
    if isinstance(hessian, HessianPsi):
        det, n = hessian.det, hessian.dim
    else:
        hessian = np.asarray(hessian, dtype=float)
        det, n = float(np.linalg.det(hessian)), hessian.shape[0]
    if not det > 0.0:
        raise PreconditionError('det Psi\'\'(x0) must be positive, got {0:g}'.format(det))
    if abs(a0) == 0.0 or abs(b0) == 0.0:
        raise PreconditionError('beam amplitudes must not vanish at x0')
    return value * math.sqrt(det) / ((2.0 * math.pi) ** (n / 2.0) * abs(a0) ** 2 * abs(b0) ** 2)


def psi_lower_bound(beam_v, beam_w, hessian, x0, grid, radius):
    """
    (holds, min Psi/|z|^2) over grid points with 0 < |z|_g <= radius; the
    bound asked for is Psi >= (c/4)|z|^2.
    """
    m = beam_v.path.manifold
    points = grid.points().reshape(-1, grid.dim)
    z = m.chart_difference(x0, points)
    size2 = np.einsum('...i,ij,...j->...', z, hessian.metric, z)
    keep = (size2 > 1e-12) & (size2 <= radius * radius)
    if not np.any(keep):
        return True, math.inf
    psi = psi_values(beam_v, beam_w, points[keep])
    ok = np.isfinite(psi)
    ratio = float(np.min(psi[ok] / size2[keep][ok])) if np.any(ok) else math.inf
    return ratio >= hessian.c / 4.0, ratio


def select_x0(p, grid, eps=0.0, accept=None):
    """
    Grid argmax of |p|; with accept given, the first point (by decreasing
    |p|) within eps of the maximum that accept(x) takes.
    """
    points = grid.points().reshape(-1, grid.dim)
    size = np.abs(p(points))
    order = np.argsort(-size, kind='stable')
    if accept is None:
        return points[order[0]]
    top = size[order[0]]
    for i in order:
        if size[i] < top - eps:
            break
        if accept(points[i]):
            return points[i]
    raise PreconditionError('no acceptable point within {0:g} of sup |p|'.format(eps))


def cylinder_witness(m, x0=(math.pi, 0.5), theta=math.pi / 4.0, resolution=0.01):
    """
    Vertical geodesic and helix of angle theta through x0 on the flat cylinder.
    """
    v = np.array([0.0, 1.0])
    w = np.array([math.sin(theta), math.cos(theta)])
    return witness_for_pair(m, x0, v, w, resolution)


@dataclass
class RecoveryReport:
    x0: list
    witness: dict
    hessian: HessianPsi
    a0: complex
    b0: complex
    p_true: float
    rows: list = field(default_factory=list)
    used: list = field(default_factory=list)
    slope: float = math.nan
    intercept: float = math.nan
    status: str = 'fitted'
    checks: dict = field(default_factory=dict)


def _rung(p, beam_v, beam_w, x0, hessian, a0, b0, p_true, lam, per_width, radius):
    bv, bw = beam_v.with_lambda(lam), beam_w.with_lambda(lam)
    grid = recovery_grid(bv, bw, x0, hessian, per_width)
    require_resolution(grid, lam ** -0.5, 8, 'recovery rung')
    value, error, density = _integral_with_error(p, bv, bw, grid)
    total = float(np.sum(density))
    outside = _distance_from(bv.path.manifold, x0, grid.points()) > radius
    leakage = float(np.sum(density[outside])) / total if total > 0 else 0.0
    estimate = recover_point_value(value, hessian, a0, b0)
    scale = recover_point_value(1.0, hessian, a0, b0)
    row = {'lam': lam, 'integral': value, 'quadrature_error': error, 'det_hessian': hessian.det,
           'abs_a0': abs(a0), 'abs_b0': abs(b0), 'p_hat': estimate, 'p_true': p_true,
           'abs_error': abs(estimate - p_true), 'error_floor': error * scale,
           'rel_error': abs(estimate - p_true) / abs(p_true) if p_true != 0 else math.nan,
           'leakage': leakage, 'grid': list(grid.shape)}
    logger.debug('lam %g: p_hat %.6g (true %.6g)', lam, estimate, p_true)
    return row


def error_decay(p, witness, ladder, delta1=1.2, per_width=8, cutoff=None, workers=1):
    """
    Run the recovery along the lam ladder at the witness point and fit the
    log-log slope of |p_hat(x0) - p(x0)|. Rungs at their quadrature floor
    are dropped from the fit.
    """
    ladder = [float(lam) for lam in ladder]
    if len(ladder) < 4 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise PreconditionError('ladder needs at least 4 increasing rungs')
    m = witness.gamma.manifold
    x0 = np.asarray(witness.point, dtype=float)
    beam_v = build_beam(witness.gamma, ladder[0], delta1, cutoff=cutoff)
    beam_w = build_beam(witness.eta, ladder[0], delta1, cutoff=cutoff)
    hessian = hessian_psi(beam_v, beam_w, x0, witness.t0, witness.tau0, witness.theta)
    a0 = complex(beam_v.a0_at(np.array(witness.t0)))
    b0 = complex(beam_w.a0_at(np.array(witness.tau0)))
    if witness.c0 is None:
        estimate_c0(witness, min(0.49 * m.injectivity_radius, witness.separation))
    radius = (1.0 + 2.0 * witness.c0) * delta1
    p_true = float(p(x0[None, :])[0])
    rows = ordered_map(lambda lam: _rung(p, beam_v, beam_w, x0, hessian, a0, b0, p_true, lam, per_width, radius),
                       ladder, workers)
    report = RecoveryReport([float(c) for c in x0], witness.summary(), hessian, a0, b0, p_true, rows)
    report.used = [i for i, row in enumerate(rows)
                   if row['abs_error'] > 10.0 * row['error_floor'] and row['abs_error'] > 1e-14]
    errors = [row['abs_error'] for row in rows]
    if any(b > a for a, b in zip(errors, errors[1:])):
        logger.warning('recovery error is not monotone over the ladder')
    if len(report.used) < len(rows):
        logger.warning('dropped %d rungs at the quadrature floor', len(rows) - len(report.used))
    if len(report.used) >= 2:
        report.slope, report.intercept = log_slope([ladder[i] for i in report.used],
                                                   [errors[i] for i in report.used])
    else:
        report.status = 'floor'

    first = beam_v.with_lambda(ladder[0]), beam_w.with_lambda(ladder[0])
    grid = recovery_grid(first[0], first[1], x0, hessian, per_width)
    holds, ratio = psi_lower_bound(first[0], first[1], hessian, x0, grid,
                                   min(first[0].cutoff.plateau * delta1, 0.5))
    plain = _integral_with_error(p, first[0], first[1], grid)[0]
    turned = _integral_with_error(p, first[0], first[1], grid, (np.exp(0.7j), np.exp(-1.3j)))[0]
    report.checks = {
        'hessian_coercive': hessian.coercive,
        'psi_lower_bound': {'holds': bool(holds), 'min_ratio': ratio, 'required': hessian.c / 4.0},
        'leakage': {'max': max(row['leakage'] for row in rows), 'radius': radius,
                    'holds': max(row['leakage'] for row in rows) <= LEAKAGE_TOL},
        'phase_invariance': abs(plain - turned) <= 1e-12 * max(abs(plain), 1e-300),
    }
    return report


def normalized_bump(dim):
    """
    eta(x) = N prod_i beta(x_i), beta(s) = exp(-1/(1 - s^2)) on (-1, 1),
    with N chosen so that int eta(x', 0)^2 dx' = 1.
    """
    def beta(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        inside = np.abs(s) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    square, _ = quad(lambda s: float(beta(s)) ** 2, -1.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    norm = 1.0 / (float(beta(0.0)) * square ** ((dim - 1) / 2.0))

    def eta(x):
        return norm * np.prod(beta(x), axis=-1)
    return eta


@dataclass
class BoundaryReport:
    mus: list
    values: list
    errors: list
    expected: float
    limit: float
    last: float

    @property
    def relative_error(self):
        if self.expected == 0.0:
            return abs(self.limit)
        return abs(self.limit - self.expected) / abs(self.expected)


def _boundary_value(q, u3, u4, mu, alpha, dim, eta, shift, tangential_spacing, normal_spacing):
    width = mu ** alpha
    t_limit, n_limit = width / 20.0, mu / 20.0
    ht = width / 40.0 if tangential_spacing is None else tangential_spacing
    hn = mu / 40.0 if normal_spacing is None else normal_spacing
    if ht > t_limit * (1.0 + 1e-12) or hn > n_limit * (1.0 + 1e-12):
        raise ResolutionError('boundary grid at mu = {0:g} needs spacing <= {1:.3e} tangentially and '
                              '<= {2:.3e} normally'.format(mu, t_limit, n_limit))
    depth = min(20.0 * mu, width)
    axes = [np.linspace(-width, width, odd_count(2.0 * width, ht)) for _ in range(dim - 1)]
    axes.append(np.linspace(0.0, depth, odd_count(depth, hn)))
    grid = Grid(tuple(axes))
    x = grid.points()
    size = mu ** (-alpha * (dim - 1) - 1.0) * eta(x / width) ** 2 * np.exp(-2.0 * x[..., -1] / mu)
    y = x + shift
    f = q(y) * u3(y) * u4(y)
    value, error = simpson_with_error(f * size, grid)
    return float(value), float(error)


def boundary_concentration(q, u3, u4, mus=None, alpha=1.0 / 3.0, dim=2, shift=None,
                           tangential_spacing=None, normal_spacing=None, workers=1):
    """
    int q u3 u4 |v_mu|^2 dx over the half space along the mu ladder (default
    10^-1 ... 10^-3 in half decades), Richardson-extrapolated with error
    exponent 2 alpha, against the limit q(0) u3(0) u4(0)/2.

    shift translates the tangential origin of the functions (the family
    moves with it).
    """
    if mus is None:
        mus = [10.0 ** -e for e in (1.0, 1.5, 2.0, 2.5, 3.0)]
    mus = sorted((float(mu) for mu in mus), reverse=True)
    eta = normalized_bump(dim)
    shift = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float)
    if abs(shift[-1]) > 0.0:
        raise PreconditionError('only tangential shifts keep the half space')
    results = ordered_map(lambda mu: _boundary_value(q, u3, u4, mu, alpha, dim, eta, shift,
                                                     tangential_spacing, normal_spacing), mus, workers)
    values = [r[0] for r in results]
    errors = [r[1] for r in results]
    origin = shift[None, :]
    expected = 0.5 * float(q(origin)[0] * u3(origin)[0] * u4(origin)[0])
    last = values[-1]
    if len(values) >= 2:
        ratio = (mus[-2] / mus[-1]) ** (2.0 * alpha)
        limit = last + (last - values[-2]) / (ratio - 1.0)
    else:
        limit = last
    return BoundaryReport(mus, values, errors, expected, limit, last)


def test_recover_point_value_inverts_leading_term():
    det = 4.0
    value = (2.0 * math.pi) * 0.7 / math.sqrt(det)
    assert abs(recover_point_value(value, np.diag([2.0, 2.0]), 1.0, 1.0) - 0.7) < 1e-12
    assert recover_point_value(0.0, np.eye(2), 1.0, 1.0) == 0.0
