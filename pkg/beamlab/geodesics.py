"""
Unit-speed geodesics with their parallel frames, boundary exit times and
Fermi coordinates.

Flat models and the round spheres are integrated in closed form; every
other model goes through scipy's embedded Runge-Kutta 4(5) on the state
(x, x', E_1, ..., E_{n-1}).
"""
import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from beamlab.errors import AccuracyError, DomainError, IntegrationError, PreconditionError
from beamlab.manifold import RoundSphere, orthonormal_frame

logger = logging.getLogger(__name__)

TANGENCY_TOL = 1e-6
SAMPLE_STEP = 0.01
SCAN_CHUNK = 4096


def default_t_max(m):
    """
    Trapping cutoff: 50 diameters, or 100 for unbounded models.
    """
    return 50.0 * m.diameter if math.isfinite(m.diameter) else 100.0


@dataclass(frozen=True)
class GeodesicPath:
    """
    A unit-speed geodesic sampled on [t[0], t[-1]] with its parallel frame.

    x holds unwrapped chart coordinates (periodic axes are not reduced).
    l_minus <= 0 <= l_plus are the exit times; an infinite value means no
    exit was found before the trapping cutoff. tangential holds the
    (past, future) tangency flags of finite exits.
    """
    manifold: object
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    frame: np.ndarray
    l_minus: float
    l_plus: float
    tangential: tuple = (False, False)
    exit_faces: tuple = (None, None)
    evaluator: object = field(default=None, repr=False, compare=False)

    @property
    def length(self):
        return self.l_plus - self.l_minus

    @property
    def trapped(self):
        return math.isinf(self.l_minus) or math.isinf(self.l_plus)

    def state_at(self, t):
        """
        (x, x', frame) at the times t (any shape), from the dense solution.
        """
        return self.evaluator(np.asarray(t, dtype=float))

    def position(self, t):
        return self.manifold.reduce(self.state_at(t)[0])

    def velocity(self, t):
        return self.state_at(t)[1]


def _flat_evaluator(x0, v0, frame):
    def evaluate(t):
        x = x0 + t[..., None] * v0
        v = np.broadcast_to(v0, x.shape).copy()
        e = np.broadcast_to(frame, t.shape + frame.shape).copy()
        return x, v, e
    return evaluate


def _sphere_evaluator(m, x0, v0, frame):
    p, jac = m.embed_with_jacobian(x0)
    w = jac @ v0
    f = jac @ frame

    def evaluate(t):
        c, s = np.cos(t)[..., None], np.sin(t)[..., None]
        x = m.from_embedding(c * p + s * w)
        _, jt = m.embed_with_jacobian(x)
        scale = np.einsum('...ij,...ij->...j', jt, jt)
        with np.errstate(divide='ignore', invalid='ignore'):
            v = np.einsum('...ij,...i->...j', jt, -s * p + c * w) / scale
            e = np.einsum('...ij,ia->...ja', jt, f) / scale[..., None]
        return x, v, e
    return evaluate


def _face_levels(m, x):
    xr = m.reduce(x)
    return np.stack([face.level(xr) for face in m.faces])


def _scan_exit(m, evaluate, sign, limit, step):
    """
    First time s in (0, limit] where sign*s leaves M; the crossing is
    bracketed on a step grid and refined by brentq.
    """
    if m.closed:
        return math.inf, None
    start = 0.0
    while start < limit:
        count = min(SCAN_CHUNK, int(math.ceil((limit - start) / step)))
        s = start + step * np.arange(count + 1)
        s[-1] = min(s[-1], limit)
        levels = _face_levels(m, evaluate(sign * s)[0])
        outside = np.nonzero(np.max(levels[:, 1:], axis=0) > 1e-12)[0]
        if outside.size:
            i = outside[0]
            k = int(np.argmax(levels[:, i + 1]))
            face = m.faces[k]

            def level(tau):
                return float(face.level(m.reduce(evaluate(np.array(sign * tau))[0])))

            if level(s[i]) >= 0.0:
                return float(s[i]), k
            return brentq(level, s[i], s[i + 1], xtol=1e-13, rtol=4 * np.finfo(float).eps), k
        start = float(s[-1])
    return math.inf, None


def _geodesic_rhs(m):
    n = m.dim

    def rhs(t, y):
        x, v = y[:n], y[n:2 * n]
        e = y[2 * n:].reshape(n, n - 1)
        gamma = m.christoffel(x)
        acc = -np.einsum('kij,i,j->k', gamma, v, v)
        de = -np.einsum('kij,i,ja->ka', gamma, v, e)
        return np.concatenate([v, acc, de.ravel()])
    return rhs


def _face_event(m, face):
    n = m.dim

    def event(t, y):
        return float(face.level(m.reduce(y[:n])))
    event.terminal = True
    event.direction = 1.0
    return event


def _ode_leg(m, y0, sign, limit, tol, max_step):
    """
    Integrate one direction; returns (solution, exit time or inf, face index).
    """
    events = [_face_event(m, face) for face in m.faces] or None
    sol = solve_ivp(_geodesic_rhs(m), (0.0, sign * limit), y0, method='RK45',
                    rtol=tol, atol=tol, max_step=max_step, dense_output=True, events=events)
    if sol.status == -1:
        raise IntegrationError('geodesic integration failed: {0}'.format(sol.message),
                               diagnostics={'t': float(sol.t[-1]), 'nfev': int(sol.nfev),
                                            'message': sol.message})
    if sol.status == 1:
        for k, hits in enumerate(sol.t_events):
            if len(hits):
                return sol, abs(float(hits[0])), k
    return sol, math.inf, None


def _ode_evaluator(n, forward, backward):
    def evaluate(t):
        flat = np.atleast_1d(t).ravel()
        state = np.empty((flat.size, n * (n + 1)))
        ahead = flat >= 0.0
        if np.any(ahead):
            state[ahead] = forward.sol(flat[ahead]).T
        if np.any(~ahead):
            state[~ahead] = backward.sol(flat[~ahead]).T
        state = state.reshape(np.shape(t) + (n * (n + 1),))
        x = state[..., :n]
        v = state[..., n:2 * n]
        e = state[..., 2 * n:].reshape(np.shape(t) + (n, n - 1))
        return x, v, e
    return evaluate


def _two_sided_grid(lo, hi, step):
    back = np.linspace(lo, 0.0, int(math.ceil(-lo / step)) + 1) if lo < 0 else np.zeros(1)
    ahead = np.linspace(0.0, hi, int(math.ceil(hi / step)) + 1) if hi > 0 else np.zeros(1)
    return np.concatenate([back[:-1], ahead])


def _is_tangential(m, face_index, x, v):
    if face_index is None:
        return False
    normal = m.face_normal(m.faces[face_index], m.reduce(x))
    return bool(abs(float(m.inner(m.reduce(x), v, normal))) < TANGENCY_TOL)


def integrate_geodesic(m, x0, v0, t_span=None, tol=1e-9, t_max=None, frame=None,
                       max_step=0.1, step=SAMPLE_STEP):
    """
    Maximally extended unit-speed geodesic through x0 with x'(0) = v0.

    Exits are searched up to t_max in both directions; t_span optionally
    clips the sampled range. Closed models integrate over t_span, which
    defaults to (-t_max, t_max).
    """
    x0 = m.check_point(x0)
    v0 = np.asarray(v0, dtype=float)
    speed = float(m.norm(x0, v0))
    if abs(speed - 1.0) > 1e-8:
        raise PreconditionError('initial velocity must have unit length, got |v0| = {0:.3e}'.format(speed))
    if not m.closed and not bool(m.contains(x0)):
        raise DomainError('geodesic start lies outside M')
    t_max = default_t_max(m) if t_max is None else float(t_max)
    if t_span is None:
        t_span = (-t_max, t_max)
    lo, hi = float(t_span[0]), float(t_span[1])
    if lo > 0.0 or hi < 0.0:
        raise PreconditionError('t_span must contain 0, got {0}'.format(t_span))
    if frame is None:
        frame = orthonormal_frame(m, x0, v0)
    frame = np.asarray(frame, dtype=float)
    n = m.dim
    limit_ahead = t_max if not m.closed else max(hi, step)
    limit_back = t_max if not m.closed else max(-lo, step)

    if m.flat or isinstance(m, RoundSphere):
        if m.flat:
            evaluate = _flat_evaluator(x0, v0, frame)
        else:
            evaluate = _sphere_evaluator(m, x0, v0, frame)
        l_plus, face_plus = _scan_exit(m, evaluate, 1.0, limit_ahead, step)
        back, face_minus = _scan_exit(m, evaluate, -1.0, limit_back, step)
        l_minus = -back
    else:
        y0 = np.concatenate([x0, v0, frame.ravel()])
        forward, l_plus, face_plus = _ode_leg(m, y0, 1.0, limit_ahead, tol, max_step)
        backward, back, face_minus = _ode_leg(m, y0, -1.0, limit_back, tol, max_step)
        l_minus = -back
        evaluate = _ode_evaluator(n, forward, backward)

    if m.closed:
        l_minus, l_plus = -math.inf, math.inf
    lo, hi = max(lo, l_minus), min(hi, l_plus)
    t = _two_sided_grid(lo, hi, step)
    x, v, e = evaluate(t)

    tangential = (
        math.isfinite(l_minus) and _is_tangential(m, face_minus, *evaluate(np.array(l_minus))[:2]),
        math.isfinite(l_plus) and _is_tangential(m, face_plus, *evaluate(np.array(l_plus))[:2]),
    )
    names = tuple(m.faces[k].name if k is not None else None for k in (face_minus, face_plus))

    drift = 0.0
    if not (m.flat or isinstance(m, RoundSphere)):
        drift = float(np.max(np.abs(m.inner(m.reduce(x), v, v) - 1.0)))
        if drift > 1e-6:
            raise AccuracyError('unit speed drifted by {0:.2e} along the geodesic'.format(drift))
    logger.debug('geodesic from %s: exits (%g, %g), speed drift %.1e', x0, l_minus, l_plus, drift)
    return GeodesicPath(m, t, x, v, e, l_minus, l_plus, tangential, names, evaluate)


def exit_time(path):
    """
    (l_minus, l_plus, (past tangential, future tangential)).
    """
    return path.l_minus, path.l_plus, path.tangential


def parallel_frame(path, tol=1e-6):
    """
    Frame samples after checking that {x', E_1, ..., E_{n-1}} stays g-orthonormal.
    """
    m = path.manifold
    full = np.concatenate([path.v[..., None], path.frame], axis=-1)
    ok = np.all(np.isfinite(full), axis=(-1, -2))
    gram = np.einsum('...ia,...ij,...jb->...ab', full[ok], m.metric(m.reduce(path.x[ok])), full[ok])
    drift = float(np.max(np.abs(gram - np.eye(m.dim)))) if gram.size else 0.0
    if drift > tol:
        raise AccuracyError('parallel frame drifted by {0:.2e}'.format(drift))
    return path.frame


def fermi_point(path, t, y):
    """
    exp_{gamma(t)}(sum_a y_a E_a(t)); t has shape (...) and y shape (..., n-1).
    """
    x, _, e = path.state_at(t)
    w = np.einsum('...ia,...a->...i', e, np.asarray(y, dtype=float))
    return path.manifold.reduce(path.manifold.exp_map(x, w))


def _flat_fermi(path, points, lo, hi):
    m = path.manifold
    x0 = path.state_at(np.array(0.0))[0]
    v0 = path.v[0]
    e = path.frame[0]
    shifts = [np.zeros(m.dim)]
    for i, p in enumerate(m.periods):
        if p is not None:
            shifts = [s + k * p * np.eye(m.dim)[i] for s in shifts for k in range(-2, 3)]
    best_t = np.full(points.shape[:-1], np.nan)
    best_y = np.full(points.shape[:-1] + (m.dim - 1,), np.nan)
    best_size = np.full(points.shape[:-1], np.inf)
    for shift in shifts:
        d = points + shift - x0
        t = d @ v0
        y = d @ e
        size = np.linalg.norm(y, axis=-1)
        take = (size < best_size) & (t >= lo - 1e-9) & (t <= hi + 1e-9)
        best_t = np.where(take, t, best_t)
        best_y = np.where(take[..., None], y, best_y)
        best_size = np.where(take, size, best_size)
    return best_t, best_y, best_size


def _newton_fermi(path, point, lo, hi, tol=1e-12, max_iter=50):
    m = path.manifold
    samples = path.position(path.t)
    gaps = np.linalg.norm(m.chart_difference(samples, point), axis=-1)
    i = int(np.argmin(gaps))
    g = m.metric(m.reduce(path.x[i]))
    d = m.chart_difference(m.reduce(path.x[i]), point)
    guess = np.concatenate([[path.t[i]], path.frame[i].T @ g @ d])
    h = 1e-6

    def residual(z):
        return m.chart_difference(point, fermi_point(path, np.array(z[0]), z[1:]))

    for _ in range(max_iter):
        f = residual(guess)
        if np.linalg.norm(f) < tol:
            break
        jac = np.empty((m.dim, m.dim))
        for k in range(m.dim):
            dz = np.zeros(m.dim)
            dz[k] = h
            jac[:, k] = (residual(guess + dz) - residual(guess - dz)) / (2.0 * h)
        try:
            guess = guess - np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            raise DomainError('Fermi coordinates are singular near this point')
    else:
        raise DomainError('Fermi coordinate solve did not converge')
    if not lo - 1e-9 <= guess[0] <= hi + 1e-9:
        raise DomainError('closest geodesic parameter {0:.4f} outside the window'.format(guess[0]))
    return guess[0], guess[1:]


def fermi_coordinates(path, x, t_window=None, strict=True):
    """
    Invert fermi_point: (t, y) with fermi_point(path, t, y) = x.

    Raises DomainError when x is not within Inj/2 of the geodesic over the
    window (default: the sampled range). With strict=False such points get
    NaN coordinates instead.
    """
    m = path.manifold
    lo, hi = t_window if t_window is not None else (path.t[0], path.t[-1])
    points = m.reduce(np.asarray(x, dtype=float))
    if m.flat:
        t, y, size = _flat_fermi(path, points, lo, hi)
    else:
        flat_pts = points.reshape(-1, m.dim)
        solved = [_tolerant(_newton_fermi, strict, m.dim, path, p, lo, hi) for p in flat_pts]
        t = np.array([s[0] for s in solved]).reshape(points.shape[:-1])
        y = np.array([s[1] for s in solved]).reshape(points.shape[:-1] + (m.dim - 1,))
        size = np.sqrt(np.sum(y * y, axis=-1))
    outside = ~np.isfinite(size) | (size >= m.injectivity_radius / 2.0)
    if np.any(outside):
        if strict:
            raise DomainError('point outside the tubular neighbourhood of radius Inj/2')
        t = np.where(outside, np.nan, t)
        y = np.where(outside[..., None], np.nan, y)
    return t, y


def _tolerant(solve, strict, n, *args):
    try:
        return solve(*args)
    except DomainError:
        if strict:
            raise
        return math.nan, np.full(n - 1, np.nan)


def shoot(m, x, w, tol=1e-10):
    """
    exp_x(w) by integrating the geodesic equation for unit time.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    n = m.dim
    flat_x = np.broadcast_to(x, np.broadcast(x, w).shape).reshape(-1, n)
    flat_w = np.broadcast_to(w, np.broadcast(x, w).shape).reshape(-1, n)

    def rhs(t, y):
        gamma = m.christoffel(y[:n])
        return np.concatenate([y[n:], -np.einsum('kij,i,j->k', gamma, y[n:], y[n:])])

    out = np.empty_like(flat_x)
    for i in range(flat_x.shape[0]):
        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([flat_x[i], flat_w[i]]),
                        method='RK45', rtol=tol, atol=tol)
        if sol.status == -1:
            raise IntegrationError('exponential map integration failed: {0}'.format(sol.message),
                                   diagnostics={'nfev': int(sol.nfev)})
        out[i] = sol.y[:n, -1]
    return out.reshape(np.broadcast(x, w).shape)


def export_csv(path, file_name):
    """
    Write t, x, x' and frame columns of a path.
    """
    n = path.manifold.dim
    header = (['t'] + ['x{0}'.format(i) for i in range(n)] + ['v{0}'.format(i) for i in range(n)]
              + ['E{0}_{1}'.format(a + 1, i) for a in range(n - 1) for i in range(n)])
    with open(file_name, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for t, x, v, e in zip(path.t, path.x, path.v, path.frame):
            writer.writerow(['{0:.12g}'.format(c) for c in np.concatenate([[t], x, v, e.T.ravel()])])
