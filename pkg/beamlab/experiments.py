"""
One pipeline per subcommand. Each takes an ExperimentConfig and returns
an Outcome with the CSV columns and rows, a JSON summary, the list of
checks and (for ladder runs) an SVG plot.
"""
import logging
import math
import os
from collections import namedtuple

import numpy as np

from beamlab import report
from beamlab.beams import beam_grid, beam_norms, build_beam, export_field_csv, residual_norm
from beamlab.errors import BeamlabError, UsageError
from beamlab.geodesics import export_csv, integrate_geodesic
from beamlab.holder import HolderFunction, holder_norm
from beamlab.intersection import (angle_distance_constant, cylinder_h1_constants, cylinder_pair,
                                  h1_survey, pairwise_distance, param_grid)
from beamlab.jacobi import conjugate_points, jacobi_along, order_of_conjugacy
from beamlab.manifold import make_model
from beamlab.potential import bump, from_description
from beamlab.quadrature import box_grid, log_slope
from beamlab.recovery import boundary_concentration, cylinder_witness, error_decay, select_x0
from beamlab.spectrum import (build_bad_set, eigenvalue_hits, export_spectrum_csv, required_lambda_max,
                              resolvent_norm, sample_outside, spectrum, top_level, verify_polynomial_bound,
                              weyl_count)
from beamlab.stationary_phase import (check_precondition, leading_term, oscillatory_integral,
                                      quadratic_phase, remainder_rate)

logger = logging.getLogger(__name__)

Outcome = namedtuple('Outcome', 'columns rows summary checks plot')

X0_SLACK = 0.05


def _model(config):
    return make_model(config.model, a=config.a)


def _export(config, file_name, write, *args):
    """
    Side tables next to the report, for runs with an output directory.
    """
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        write(*args, os.path.join(config.out, file_name))


def resolvent(config):
    m = _model(config)
    lo, hi = config.lam_range
    logger.info('enumerating the spectrum of %s', m)
    table = spectrum(m, required_lambda_max(hi), config.workers)
    _export(config, 'resolvent_spectrum.csv', export_spectrum_csv, table)
    logger.info('building bad set')
    bad = build_bad_set(table, config.delta, config.eps, hi, lo)
    lams = sample_outside(bad, config.samples, config.seed)
    bound = verify_polynomial_bound(table, bad, lams)
    n = table.dim
    rows, short = [], 0
    for lam, ratio in zip(lams, bound.ratios):
        level = int(math.floor(math.log2(lam * lam)))
        floor = min(bad.radius(level, n), bad.radius(level + 1, n))
        dist = 1.0 / resolvent_norm(table, lam * lam)
        short += dist < floor * (1.0 - 1e-12)
        rows.append({'lam': lam, 'lam2': lam * lam, 'resolvent_norm': 1.0 / dist,
                     'ratio': ratio, 'excluded_radius': floor})
    edges = []
    for a, b in bad.intervals[:5]:
        edge = b * (1.0 + 1e-9)
        if edge < hi and not bad.contains(edge):
            edges.append({'lam': edge, 'ratio': resolvent_norm(table, edge * edge) * edge ** -(n + bad.eps)})
    hits = eigenvalue_hits(table, lams)
    summary = {'model': m.describe(), 'lambda_max': table.lambda_max, 'levels': top_level(hi) + 1,
               'bad_set': bad.as_dict(), 'max_ratio': bound.max_ratio, 'witness_lam': bound.witness,
               'construction_constant': bound.constant, 'endpoint_ratios': edges, 'eigenvalue_hits': hits}
    checks = [
        report.check('measure(J) <= delta', bad.measure <= bad.delta + 1e-9, bad.measure, bad.delta),
        report.check('|J| <= |J~|/2', bad.measure <= bad.squared_measure / 2.0 + 1e-9,
                     bad.measure, bad.squared_measure / 2.0),
        report.check('resolvent <= C lam^(n+eps)', bound.max_ratio <= bound.constant, bound.max_ratio, bound.constant),
        report.check('dist >= r(h) off J', short == 0, short, 0),
    ]
    return Outcome(['lam', 'lam2', 'resolvent_norm', 'ratio', 'excluded_radius'], rows, summary, checks, None)


def weyl(config):
    m = _model(config)
    hs = sorted({config.h} | {2.0 ** -k for k in (3, 4, 5, 6)}, reverse=True)
    table = spectrum(m, 2.0 / min(hs) ** 2, config.workers)
    rows = []
    for h in hs:
        count, ratio = weyl_count(table, h)
        rows.append({'h': h, 'count': count, 'ratio': ratio})
    band = [row['ratio'] for row in rows if row['h'] in {2.0 ** -k for k in (3, 4, 5, 6)}]
    spread = max(band) / min(band) if min(band) > 0 else math.inf
    checks = [report.check('count h^n within a factor 4 band', spread <= 4.0, spread, 4.0)]
    if config.model == 'torus2':
        inside = all(math.pi / 2.0 <= r <= 2.0 * math.pi for r in band)
        checks.append(report.check('count h^2 in [pi/2, 2 pi]', inside, band, [math.pi / 2.0, 2.0 * math.pi]))
    summary = {'model': m.describe(), 'lambda_max': table.lambda_max, 'band_spread': spread}
    return Outcome(['h', 'count', 'ratio'], rows, summary, checks, None)


def beam(config):
    m = _model(config)
    if m.tag != 'flat-cylinder':
        raise UsageError('model: the beam experiment runs on the cylinder')
    x0 = np.array([math.pi, 0.5 * m.a])
    path = integrate_geodesic(m, x0, [0.0, 1.0])
    profile = build_beam(path, config.ladder[0], math.pi)
    _export(config, 'beam_geodesic.csv', export_csv, path)
    _export(config, 'beam_field.csv', export_field_csv, profile, beam_grid(profile, config.ladder[0] ** -0.5 / 4.0))
    ts = np.linspace(0.0, 3.0, 301)
    ts = ts[(ts >= profile.t_range[0]) & (ts <= profile.t_range[1])]
    exact = (ts + 1j) / (1.0 + ts ** 2)
    riccati_gap = float(np.max(np.abs(profile.h_at(ts)[..., 0, 0] - exact)))
    rows = []
    for lam in config.ladder:
        p = profile.with_lambda(lam)
        norms = beam_norms(p, beam_grid(p, lam ** -0.5 / 8.0))
        residual, ratio = residual_norm(p, beam_grid(p, 1.0 / (20.0 * lam)))
        logger.info('lam %g: L4 %.4g, residual ratio %.3e', lam, norms.l4, ratio)
        rows.append({'lam': lam, 'l2': norms.l2, 'l4': norms.l4, 'linf': norms.linf,
                     'l4_ratio': norms.l4_ratio, 'linf_ratio': norms.linf_ratio,
                     'residual': residual, 'ratio': ratio})
    slope, _ = log_slope([r['lam'] for r in rows], [r['ratio'] for r in rows])
    l4 = [r['l4_ratio'] for r in rows]
    linf = [r['linf_ratio'] for r in rows]
    checks = [
        report.check('flat Riccati closed form', riccati_gap <= 1e-7, riccati_gap, 1e-7),
        report.check('Im H positive', profile.riccati.min_imag_eigenvalue > 0.0, profile.riccati.min_imag_eigenvalue, 0.0),
        report.check('L4 ratio within a factor 2', max(l4) <= 2.0 * min(l4), max(l4) / min(l4), 2.0),
        report.check('Linf ratio within a factor 2', max(linf) <= 2.0 * min(linf), max(linf) / min(linf), 2.0),
        report.check('residual ratio slope <= -1', slope <= -1.0, slope, -1.0),
    ]
    summary = {'model': m.describe(), 'profile': profile.describe(), 'residual_slope': slope,
               'riccati_gap': riccati_gap}
    plot = report.loglog_svg([('residual ratio', [r['lam'] for r in rows], [r['ratio'] for r in rows])],
                             'Beam residual', 'lam', 'rho(lam)', 'slope {0:.3f}'.format(slope))
    return Outcome(['lam', 'l2', 'l4', 'linf', 'l4_ratio', 'linf_ratio', 'residual', 'ratio'],
                   rows, summary, checks, plot)


def _amplitude_norm(a, r, alpha):
    grid = box_grid([-r, -r], [r, r], 2.0 * r / 40.0)
    points = grid.points().reshape(-1, 2)
    points = points[np.linalg.norm(points, axis=1) <= r]
    return holder_norm(HolderFunction(points, a(points), alpha))[2]


def stationary_phase(config):
    alpha = config.alpha
    r = 0.5
    pure = quadratic_phase(np.eye(2), r)
    phase = quadratic_phase(np.eye(2), r, cubic=lambda x: 0.2 * x[..., 0] ** 3)
    pre = check_precondition(phase)

    def one(x):
        return np.ones(x.shape[:-1])

    def rough(x):
        return 1.0 + np.abs(x[..., 0]) ** alpha

    def smooth(x):
        return np.cos(x[..., 0]) + x[..., 1]

    value, _ = oscillatory_integral(pure, one, config.ladder[0])
    exact = leading_term(np.eye(2), 1.0)
    fits = {
        'hoelder': remainder_rate(phase, rough, config.ladder, alpha=alpha,
                                  amplitude_norm=_amplitude_norm(rough, r, alpha), workers=config.workers),
        'smooth': remainder_rate(phase, smooth, config.ladder, workers=config.workers),
    }
    rows = []
    for name, fit in fits.items():
        for i, lam in enumerate(fit.lams):
            rows.append({'amplitude': name, 'lam': lam, 'remainder': fit.remainders[i],
                         'quadrature_error': fit.errors[i], 'used': i in fit.used})
    slope = fits['hoelder'].slope
    checks = [
        report.check('C r <= c/4', pre.holds, pre.margin, 0.0),
        report.check('quadratic phase leading term', abs(value - exact) <= 1e-3 * exact, value, exact),
        report.check('hoelder remainder slope', -alpha / 2.0 - 0.35 <= slope <= -alpha / 2.0 + 0.05,
                     slope, [-alpha / 2.0 - 0.35, -alpha / 2.0 + 0.05]),
        report.check('smooth remainder slope', fits['smooth'].slope <= -0.45, fits['smooth'].slope, -0.45),
    ]
    summary = {'alpha': alpha, 'cubic_constant': pre.cubic_constant, 'margin': pre.margin,
               'slopes': {k: f.slope for k, f in fits.items()}, 'status': {k: f.status for k, f in fits.items()},
               'hoelder_constants': fits['hoelder'].constants}
    plot = report.loglog_svg([(k, f.lams, f.remainders) for k, f in fits.items()], 'Stationary phase remainder',
                             'lam', '|I - leading|', 'hoelder slope {0:.3f}, expected {1:.3f}'.format(slope, -alpha / 2.0))
    return Outcome(['amplitude', 'lam', 'remainder', 'quadrature_error', 'used'], rows, summary, checks, plot)


def recovery_point(m, p, grid, slack=X0_SLACK):
    """
    x0 and its witness pair: the grid argmax of |p|, or the first point
    within slack * sup|p| of it that carries a witness.
    """
    found = {}

    def carries_witness(x):
        try:
            found['witness'] = cylinder_witness(m, x)
        except BeamlabError as exc:
            logger.debug('no witness at %s: %s', list(x), exc)
            return False
        return True

    top = float(np.max(np.abs(p(grid.points()))))
    x0 = select_x0(p, grid, slack * top, accept=carries_witness)
    return x0, found['witness']


def recover(config):
    m = _model(config)
    if m.tag != 'flat-cylinder':
        raise UsageError('model: the recovery experiment runs on the cylinder')
    alpha = config.alpha
    p = from_description(config.potential, alpha) if config.potential else bump([math.pi, 0.5 * m.a], 0.3, alpha=alpha)
    grid = box_grid([0.0, 0.0], [2.0 * math.pi, m.a], 0.05)
    x0, witness = recovery_point(m, p, grid)
    logger.info('recovering p at %s', [float(c) for c in x0])
    frequency = p.measure_frequency(grid, m, seed=config.seed)
    admissible = p.admissible(p.admissibility_bound(m.diameter))
    result = error_decay(p, witness, config.ladder, workers=config.workers)
    last = result.rows[-1]
    checks = [
        report.check('Psi\'\' coercive', result.checks['hessian_coercive'], result.hessian.c, 0.9 * result.hessian.bound),
        report.check('Psi >= (c/4)|z|^2', result.checks['psi_lower_bound']['holds'],
                     result.checks['psi_lower_bound']['min_ratio'], result.checks['psi_lower_bound']['required']),
        report.check('beam product inside B((1+2c0)delta1)', result.checks['leakage']['holds'],
                     result.checks['leakage']['max'], 1e-6),
        report.check('unimodular phase invariance', result.checks['phase_invariance']),
        report.check('error slope <= -0.4', result.status == 'fitted' and result.slope <= -0.4, result.slope, -0.4),
    ]
    if result.p_true != 0.0:
        checks.append(report.check('relative error at the top rung', last['rel_error'] <= 0.2, last['rel_error'], 0.2))
    summary = {'model': m.describe(), 'x0': result.x0, 'witness': result.witness,
               'hessian': result.hessian.describe(), 'a0': result.a0, 'b0': result.b0,
               'p_true': result.p_true, 'slope': result.slope, 'status': result.status,
               'potential': p.describe(), 'frequency': frequency, 'admissible': admissible}
    plot = report.loglog_svg([('|p_hat - p|', [r['lam'] for r in result.rows], [r['abs_error'] for r in result.rows])],
                             'Recovery error', 'lam', 'error', 'slope {0:.3f}'.format(result.slope))
    columns = ['lam', 'integral', 'quadrature_error', 'det_hessian', 'abs_a0', 'abs_b0', 'p_hat', 'p_true',
               'abs_error', 'rel_error', 'leakage']
    return Outcome(columns, result.rows, summary, checks, plot)


def _cylinder_bound_violations(m, x0, theta, spacing=0.01):
    s0 = float(x0[1])
    gamma, eta = cylinder_pair(m, x0, theta)
    ts = param_grid(gamma, spacing)
    taus = param_grid(eta, spacing)
    dist = pairwise_distance(m, gamma.position(ts), eta.position(taus))
    bound = math.sin(theta) * np.maximum(np.abs(ts - s0)[:, None], np.abs(taus - s0 / math.cos(theta))[None, :])
    return int(np.sum(dist < bound - 1e-6))


def h1_check(config):
    m = _model(config)
    rng = np.random.default_rng(config.seed)
    if m.tag == 'flat-cylinder':
        points = np.stack([rng.uniform(0.0, 2.0 * math.pi, config.samples),
                           rng.uniform(0.1 * m.a, 0.9 * m.a, config.samples)], axis=-1)
        theta0, T, c0_bound, r_bound = cylinder_h1_constants(m.a)
    else:
        lo = np.where(np.isfinite(m.lower), m.lower, -1.0)
        hi = np.where(np.isfinite(m.upper), m.upper, 1.0)
        points = lo + (hi - lo) * (0.1 + 0.8 * rng.uniform(size=(config.samples, m.dim)))
        points = points[m.boundary_level(points) < -1e-6] if not m.closed else points
        theta0, T, c0_bound, r_bound = None, None, None, None
    survey = h1_survey(m, points, theta0=theta0, workers=config.workers)
    rows = [dict(w.summary(), kind='witness') for w in survey.witnesses]
    rows += [dict(f, kind='failed') for f in survey.failed]
    checks = [report.check('survey complete', not survey.incomplete, survey.coverage, 1.0)]
    summary = {'model': m.describe(), 'coverage': survey.coverage, 'T': survey.T,
               'theta_min': survey.theta_min, 'r': survey.r, 'c0': survey.c0, 'skipped': len(survey.skipped)}
    if m.tag == 'flat-cylinder':
        violations = sum(_cylinder_bound_violations(m, x, theta0) for x in points)
        checks.append(report.check('c0 <= 1.05 / sin(theta0)', survey.c0 <= 1.05 * c0_bound, survey.c0, 1.05 * c0_bound))
        checks.append(report.check('d >= sin(theta) max offset', violations == 0, violations, 0))
        checks.append(report.check('T <= 1.05 a / cos(2 theta0)', survey.T <= 1.05 * T, survey.T, 1.05 * T))
        checks.append(report.check('r < pi/2', survey.r < r_bound, survey.r, r_bound))
        checks.append(report.check('theta >= 0.95 theta0', survey.theta_min >= 0.95 * theta0,
                                   survey.theta_min, 0.95 * theta0))
        summary.update({'theta0': theta0, 'T_bound': T, 'c0_bound': c0_bound, 'r_bound': r_bound})
    if m.tag == 'sphere-polar-patch':
        constants = [angle_distance_constant(m, x, math.pi / 4.0, 1.0).constant for x in points[:5]]
        checks.append(report.check('angle-distance constant positive', min(constants) > 0.0, min(constants), 0.0))
        summary['angle_distance_constants'] = constants
    columns = ['kind', 'point', 'theta', 'separation', 'c0', 'r', 'distance', 't', 'tau']
    return Outcome(columns, rows, summary, checks, None)


def _equator_start(m):
    if m.tag == 'round-sphere':
        x = np.full(m.dim, math.pi / 2.0)
        x[-1] = 1.0
    else:
        x = np.full(m.dim, 1.0)
    v = np.zeros(m.dim)
    v[-1] = 1.0
    return x, v / float(m.norm(x, v))


def _dexp_error(m, path, solution, s, eps=1e-5):
    """
    Largest relative gap between B(s) columns pushed by the frame and a
    central difference of the exponential map.
    """
    x = path.position(np.array(0.0))
    v = path.velocity(np.array(0.0))
    e0 = path.frame[np.argmin(np.abs(path.t))]
    es = path.state_at(np.array(s))[2]
    b = solution.at(s)[2]
    worst = 0.0
    for j in range(e0.shape[1]):
        plus = m.exp_map(x, s * (v + eps * e0[:, j]))
        minus = m.exp_map(x, s * (v - eps * e0[:, j]))
        fd = m.chart_difference(minus, plus) / (2.0 * eps)
        jac = es @ b[:, j]
        worst = max(worst, float(np.linalg.norm(fd - jac) / np.linalg.norm(jac)))
    return worst


def conjugate(config):
    m = _model(config)
    x, v = _equator_start(m)
    length = 1.5 * m.diameter if math.isfinite(m.diameter) else 10.0
    path = integrate_geodesic(m, x, v, t_span=(0.0, length))
    solution = jacobi_along(path)
    _export(config, 'conjugate_geodesic.csv', export_csv, path)
    points = conjugate_points(solution)
    order = order_of_conjugacy(m, x, directions=config.samples, length=length, workers=config.workers)
    rows = [{'kind': 'conjugate', 't': t, 'order': k} for t, k in points]
    gaps = []
    for s in (0.5, 1.0, 2.0):
        if s < length:
            gap = _dexp_error(m, path, solution, s)
            gaps.append(gap)
            rows.append({'kind': 'dexp', 't': s, 'rel_error': gap})
    checks = [report.check('Jacobi fields match d exp', max(gaps) <= 1e-3, max(gaps), 1e-3)]
    if m.tag == 'round-sphere':
        first = points[0] if points else (math.nan, 0)
        checks.append(report.check('first conjugate time pi', abs(first[0] - math.pi) <= 1e-6, first[0], math.pi))
        checks.append(report.check('conjugate order n-1', first[1] == m.dim - 1 and order == m.dim - 1,
                                   [first[1], order], m.dim - 1))
    elif m.flat:
        checks.append(report.check('no conjugate points', order == 0 and not points, order, 0))
    summary = {'model': m.describe(), 'start': x, 'direction': v, 'length': length,
               'order_of_conjugacy': order, 'conjugate_points': points}
    return Outcome(['kind', 't', 'order', 'rel_error'], rows, summary, checks, None)


def boundary(config):
    if config.model != 'halfplane':
        raise UsageError('model: the boundary experiment runs on the half plane')
    mus = sorted((1.0 / lam for lam in config.ladder), reverse=True)
    alpha = config.alpha

    def one(x):
        return np.ones(x.shape[:-1])

    def tilted(x):
        return 1.0 + x[..., 0]

    def vanishing(x):
        return x[..., -1] * np.exp(-np.sum(x * x, axis=-1))

    cases = {
        'constant': boundary_concentration(one, one, one, mus, alpha, workers=config.workers),
        'tilted-u3': boundary_concentration(one, tilted, one, mus, alpha, workers=config.workers),
        'vanishing-q': boundary_concentration(vanishing, one, one, mus, alpha, workers=config.workers),
        'shifted': boundary_concentration(one, tilted, one, mus, alpha, shift=[0.3, 0.0], workers=config.workers),
    }
    rows = []
    for name, res in cases.items():
        for mu, value, err in zip(res.mus, res.values, res.errors):
            rows.append({'case': name, 'mu': mu, 'value': value, 'quadrature_error': err,
                         'expected': res.expected})
    checks = [
        report.check('limit 1/2 for q = 1', cases['constant'].relative_error <= 0.05, cases['constant'].limit, 0.5),
        report.check('limit u3(0)/2', cases['tilted-u3'].relative_error <= 0.05, cases['tilted-u3'].limit, 0.5),
        report.check('limit 0 when q(0) = 0', abs(cases['vanishing-q'].limit) <= 0.025, cases['vanishing-q'].limit, 0.0),
        report.check('tangential translation', cases['shifted'].relative_error <= 0.05,
                     cases['shifted'].limit, cases['shifted'].expected),
    ]
    summary = {name: {'limit': res.limit, 'last': res.last, 'expected': res.expected}
               for name, res in cases.items()}
    series = [(name, res.mus, [abs(v - res.expected) for v in res.values]) for name, res in cases.items()
              if name != 'vanishing-q']
    plot = report.loglog_svg(series, 'Boundary concentration', 'mu', '|value - limit|')
    return Outcome(['case', 'mu', 'value', 'quadrature_error', 'expected'], rows, summary, checks, plot)


EXPERIMENTS = {
    'resolvent': resolvent,
    'weyl': weyl,
    'beam': beam,
    'stationary-phase': stationary_phase,
    'recover': recover,
    'h1-check': h1_check,
    'conjugate': conjugate,
    'boundary': boundary,
}
