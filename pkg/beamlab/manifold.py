"""
Model Riemannian manifolds given by a single chart.

Every model exposes the metric, its first derivatives, Christoffel
symbols, curvature, volume density and (for the built-ins) a closed-form
distance and exponential map. Points are numpy coordinate arrays; all
evaluators broadcast over leading axes, so x may have shape (..., n).
"""
import json
import logging
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from beamlab.errors import CapabilityError, DomainError, PreconditionError

logger = logging.getLogger(__name__)

Tangent = namedtuple('Tangent', 'base vector')

FD_STEP = 1e-5
CURVATURE_FD_STEP = 1e-4


@dataclass(frozen=True)
class BoundaryFace:
    """
    One face of the boundary as a level set: level(x) < 0 inside M,
    level(x) = 0 on the face. gradient(x) is d(level).
    """
    name: str
    level: object
    gradient: object


def coordinate_face(axis, value, side):
    """
    Face x[axis] = value. side 'lower' keeps x[axis] >= value inside M,
    'upper' keeps x[axis] <= value.
    """
    if side not in ('lower', 'upper'):
        raise PreconditionError("face side must be 'lower' or 'upper', got {0!r}".format(side))
    sign = -1.0 if side == 'lower' else 1.0

    def level(x):
        return sign * (np.asarray(x)[..., axis] - value)

    def gradient(x):
        g = np.zeros(np.shape(x))
        g[..., axis] = sign
        return g

    return BoundaryFace('x{0}={1:g}'.format(axis, value), level, gradient)


def circle_face(radius):
    """
    Round boundary |x| = radius of a flat ball; level is scaled so that its
    gradient has unit length on the face.
    """
    def level(x):
        x = np.asarray(x)
        return (np.sum(x * x, axis=-1) - radius * radius) / (2.0 * radius)

    def gradient(x):
        return np.asarray(x) / radius

    return BoundaryFace('|x|={0:g}'.format(radius), level, gradient)


class ChartedManifold:
    """
    A Riemannian manifold (possibly with boundary) covered by one chart.

    lower/upper bound the chart box (infinite entries allowed); periodic
    axes carry a period and are reduced to [lower, lower + period).
    faces lists the boundary; an empty list means the model is closed.
    """
    tag = 'custom'
    flat = False
    curvature = None
    open_box = False

    def __init__(self, dim, lower, upper, periods=None, faces=(),
                 injectivity_radius=math.inf, diameter=math.inf, params=None):
        if dim < 1:
            raise PreconditionError('dimension must be positive, got {0}'.format(dim))
        self.dim = int(dim)
        self.lower = np.array(lower, dtype=float)
        self.upper = np.array(upper, dtype=float)
        if periods is None:
            periods = [None] * self.dim
        for p in periods:
            if p is not None and not p > 0:
                raise PreconditionError('periods must be positive, got {0}'.format(p))
        self.periods = tuple(periods)
        self.faces = tuple(faces)
        self.injectivity_radius = float(injectivity_radius)
        self.diameter = float(diameter)
        self.params = dict(params or {})

    def __repr__(self):
        return '{0}({1})'.format(self.tag, ', '.join('{0}={1}'.format(k, v) for k, v in sorted(self.params.items())))

    @property
    def closed(self):
        return len(self.faces) == 0

    def describe(self):
        """
        JSON-friendly summary used in reports.
        """
        return {'tag': self.tag, 'dim': self.dim, 'params': self.params,
                'closed': self.closed, 'injectivity_radius': self.injectivity_radius,
                'diameter': self.diameter}

    # chart bookkeeping

    def reduce(self, x):
        """
        Map periodic coordinates into [lower, lower + period).
        """
        x = np.array(x, dtype=float)
        for i, p in enumerate(self.periods):
            if p is not None:
                x[..., i] = np.mod(x[..., i] - self.lower[i], p) + self.lower[i]
        return x

    def check_point(self, x):
        """
        Reduce x and raise DomainError if it leaves the chart box.
        """
        x = self.reduce(x)
        for i, p in enumerate(self.periods):
            if p is not None:
                continue
            c = x[..., i]
            if self.open_box:
                bad = (c <= self.lower[i]) | (c >= self.upper[i])
            else:
                bad = (c < self.lower[i] - 1e-12) | (c > self.upper[i] + 1e-12)
            if np.any(bad):
                raise DomainError('point outside the chart domain of {0} on axis {1}'.format(self.tag, i))
        return x

    def chart_difference(self, x, y):
        """
        y - x with periodic axes wrapped to the nearest image.
        """
        d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        d = np.array(d)
        for i, p in enumerate(self.periods):
            if p is not None:
                d[..., i] = d[..., i] - p * np.round(d[..., i] / p)
        return d

    def contains(self, x, tol=1e-9):
        """
        True where x lies in M (inside or on every face).
        """
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for face in self.faces:
            inside &= face.level(x) <= tol
        return inside

    def boundary_level(self, x):
        """
        Largest face level at x (<= 0 inside M); -inf for closed models.
        """
        x = np.asarray(x, dtype=float)
        if self.closed:
            return np.full(x.shape[:-1], -np.inf)
        return np.max(np.stack([f.level(x) for f in self.faces]), axis=0)

    def face_normal(self, face, x):
        """
        Outward g-unit normal of face at x.
        """
        grad = face.gradient(x)
        ginv = np.linalg.inv(self.metric(x))
        up = np.einsum('...ij,...j->...i', ginv, grad)
        return up / np.sqrt(np.einsum('...i,...i->...', grad, up))[..., None]

    # metric quantities

    def metric(self, x):
        raise NotImplementedError

    def metric_derivative(self, x):
        """
        dg[..., k, i, j] = d_k g_ij by central differences.
        """
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (self.dim, self.dim, self.dim))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = FD_STEP
            out[..., k, :, :] = (self.metric(x + e) - self.metric(x - e)) / (2.0 * FD_STEP)
        return out

    def christoffel(self, x):
        """
        Gamma[..., k, i, j] = Gamma^k_ij.
        """
        x = np.asarray(x, dtype=float)
        if self.flat:
            return np.zeros(x.shape[:-1] + (self.dim, self.dim, self.dim))
        ginv = np.linalg.inv(self.metric(x))
        dg = self.metric_derivative(x)
        lowered = (np.einsum('...ilj->...lij', dg) + np.einsum('...jli->...lij', dg) - dg) / 2.0
        return np.einsum('...kl,...lij->...kij', ginv, lowered)

    def riemann(self, x):
        """
        R[..., l, i, j, k] = R^l_ijk with R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z.
        """
        x = np.asarray(x, dtype=float)
        n = self.dim
        if self.curvature is not None:
            g = self.metric(x)
            delta = np.eye(n)
            return self.curvature * (np.einsum('li,...jk->...lijk', delta, g)
                                     - np.einsum('lj,...ik->...lijk', delta, g))
        gamma = self.christoffel(x)
        dgamma = np.empty(x.shape[:-1] + (n, n, n, n))
        for a in range(n):
            e = np.zeros(n)
            e[a] = CURVATURE_FD_STEP
            dgamma[..., a, :, :, :] = (self.christoffel(x + e) - self.christoffel(x - e)) / (2.0 * CURVATURE_FD_STEP)
        return (np.einsum('...iljk->...lijk', dgamma) - np.einsum('...jlik->...lijk', dgamma)
                + np.einsum('...lim,...mjk->...lijk', gamma, gamma)
                - np.einsum('...ljm,...mik->...lijk', gamma, gamma))

    def curvature_block(self, x, v, frame):
        """
        K_ab = <R(E_a, v)v, E_b> for the columns E_a of frame (n x (n-1)).
        """
        if self.flat:
            k = frame.shape[-1]
            return np.zeros(np.shape(frame)[:-2] + (k, k))
        g = self.metric(x)
        r = self.riemann(x)
        lowered = np.einsum('...lm,...lijk->...mijk', g, r)
        return np.einsum('...ia,...j,...k,...mb,...mijk->...ab', frame, v, v, frame, lowered)

    def volume_density(self, x):
        return np.sqrt(np.linalg.det(self.metric(x)))

    def inner(self, x, u, w):
        return np.einsum('...i,...ij,...j->...', u, self.metric(x), w)

    def norm(self, x, u):
        return np.sqrt(self.inner(x, u, u))

    # geometry with closed forms on the built-ins

    def distance(self, p, q):
        raise CapabilityError('distance is not available for {0} models'.format(self.tag))

    def exp_map(self, x, w):
        """
        exp_x(w); generic models shoot the geodesic equation.
        """
        from beamlab.geodesics import shoot
        return shoot(self, x, w)


class FlatModel(ChartedManifold):
    flat = True
    curvature = 0.0

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def metric_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim, self.dim, self.dim))

    def distance(self, p, q):
        return np.linalg.norm(self.chart_difference(p, q), axis=-1)

    def exp_map(self, x, w):
        return self.reduce(np.asarray(x, dtype=float) + np.asarray(w, dtype=float))


class EuclideanDisc(FlatModel):
    tag = 'euclidean-disc'

    def __init__(self, radius=1.0):
        FlatModel.__init__(self, 2, [-math.inf, -math.inf], [math.inf, math.inf],
                           faces=[circle_face(radius)], injectivity_radius=math.inf,
                           diameter=2.0 * radius, params={'radius': radius})
        self.radius = radius

    def check_point(self, x):
        """
        The chart is the whole plane; points must also lie in the closed disc.
        """
        x = FlatModel.check_point(self, x)
        if np.any(self.boundary_level(x) > 1e-12):
            raise DomainError('point outside the disc of radius {0:g}'.format(self.radius))
        return x


class EuclideanHalfSpace(FlatModel):
    tag = 'halfplane'

    def __init__(self, dim=2):
        lower = [-math.inf] * dim
        upper = [math.inf] * dim
        FlatModel.__init__(self, dim, lower, upper, faces=[coordinate_face(dim - 1, 0.0, 'lower')],
                           params={'dim': dim})


class FlatCylinder(FlatModel):
    """
    S^1 x [0, a] with coordinates (angle, height); the natural extension
    lets the height run over the real line.
    """
    tag = 'flat-cylinder'

    def __init__(self, a=1.0):
        if not a > 0:
            raise PreconditionError('cylinder height must be positive, got {0}'.format(a))
        FlatModel.__init__(self, 2, [0.0, -math.inf], [2.0 * math.pi, math.inf],
                           periods=[2.0 * math.pi, None],
                           faces=[coordinate_face(1, 0.0, 'lower'), coordinate_face(1, a, 'upper')],
                           injectivity_radius=math.pi, diameter=math.hypot(math.pi, a),
                           params={'a': a})
        self.a = a

    def distance(self, p, q):
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        best = None
        for k in range(-2, 3):
            cand = np.hypot(d[..., 0] + 2.0 * math.pi * k, d[..., 1])
            best = cand if best is None else np.minimum(best, cand)
        return best


class FlatTorus(FlatModel):
    tag = 'flat-torus'

    def __init__(self, dim=2, periods=None):
        if periods is None:
            periods = [2.0 * math.pi] * dim
        periods = [float(p) for p in periods]
        if len(periods) != dim:
            raise PreconditionError('flat-torus needs one period per axis')
        FlatModel.__init__(self, dim, [0.0] * dim, periods, periods=periods,
                           injectivity_radius=min(periods) / 2.0,
                           diameter=math.sqrt(sum((p / 2.0) ** 2 for p in periods)),
                           params={'dim': dim, 'periods': periods})


def _sphere_embedding(angles):
    """
    Unit sphere S^k in R^{k+1} from hyperspherical angles (..., k), with the
    Jacobian (..., k+1, k). The first angle is the polar angle from the last
    ambient axis; the last angle is periodic.
    """
    k = angles.shape[-1]
    a = angles[..., 0]
    if k == 1:
        p = np.stack([np.cos(a), np.sin(a)], axis=-1)
        jac = np.stack([-np.sin(a), np.cos(a)], axis=-1)[..., None]
        return p, jac
    q, jq = _sphere_embedding(angles[..., 1:])
    s, c = np.sin(a), np.cos(a)
    p = np.concatenate([s[..., None] * q, c[..., None]], axis=-1)
    first = np.concatenate([c[..., None] * q, -s[..., None]], axis=-1)[..., None]
    rest = np.concatenate([s[..., None, None] * jq, np.zeros(jq.shape[:-2] + (1, k - 1))], axis=-2)
    return p, np.concatenate([first, rest], axis=-1)


def _sphere_angles(p):
    """
    Inverse of _sphere_embedding for unit vectors p (..., k+1).
    """
    k = p.shape[-1] - 1
    if k == 1:
        return np.mod(np.arctan2(p[..., 1], p[..., 0]), 2.0 * math.pi)[..., None]
    rho = np.linalg.norm(p[..., :-1], axis=-1)
    a = np.arctan2(rho, p[..., -1])
    safe = np.where(rho > 0, rho, 1.0)
    rest = _sphere_angles(p[..., :-1] / safe[..., None])
    return np.concatenate([a[..., None], rest], axis=-1)


class RoundSphere(ChartedManifold):
    """
    Unit round sphere in hyperspherical coordinates (r, phi_1, ..., phi_{n-1}),
    r the distance from the pole. The chart misses the coordinate singular set.
    """
    tag = 'round-sphere'
    curvature = 1.0
    open_box = True

    def __init__(self, dim=2, faces=(), params=None):
        lower = [0.0] * dim
        upper = [math.pi] * (dim - 1) + [2.0 * math.pi]
        periods = [None] * (dim - 1) + [2.0 * math.pi]
        ChartedManifold.__init__(self, dim, lower, upper, periods=periods, faces=faces,
                                 injectivity_radius=math.pi, diameter=math.pi,
                                 params=params or {'dim': dim})

    def _scales(self, x):
        s2 = np.sin(x) ** 2
        scales = np.ones(x.shape)
        for i in range(1, self.dim):
            scales[..., i] = scales[..., i - 1] * s2[..., i - 1]
        return scales

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        scales = self._scales(x)
        return scales[..., :, None] * np.eye(self.dim)

    def metric_derivative(self, x):
        x = np.asarray(x, dtype=float)
        n = self.dim
        s2 = np.sin(x) ** 2
        s2x = np.sin(2.0 * x)
        out = np.zeros(x.shape[:-1] + (n, n, n))
        for i in range(1, n):
            for k in range(i):
                term = s2x[..., k]
                for j in range(i):
                    if j != k:
                        term = term * s2[..., j]
                out[..., k, i, i] = term
        return out

    def embed(self, x):
        x = np.asarray(x, dtype=float)
        return _sphere_embedding(x)[0]

    def embed_with_jacobian(self, x):
        return _sphere_embedding(np.asarray(x, dtype=float))

    def from_embedding(self, p):
        return self.reduce(_sphere_angles(np.asarray(p, dtype=float)))

    def distance(self, p, q):
        chord = np.linalg.norm(self.embed(p) - self.embed(q), axis=-1)
        return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))

    def exp_map(self, x, w):
        x = np.asarray(x, dtype=float)
        p, jac = _sphere_embedding(x)
        ambient = np.einsum('...ij,...j->...i', jac, np.asarray(w, dtype=float))
        size = np.linalg.norm(ambient, axis=-1)
        safe = np.where(size > 0, size, 1.0)
        q = np.cos(size)[..., None] * p + (np.sin(size) / safe)[..., None] * ambient
        return self.from_embedding(q)


class SpherePolarPatch(RoundSphere):
    """
    Polar-coordinate patch (r, phi) of the unit 2-sphere, cut to the band
    r_min <= r <= r_max.
    """
    tag = 'sphere-polar-patch'

    def __init__(self, r_min=0.25, r_max=math.pi - 0.25):
        if not 0.0 < r_min < r_max < math.pi:
            raise PreconditionError('sphere patch needs 0 < r_min < r_max < pi')
        faces = [coordinate_face(0, r_min, 'lower'), coordinate_face(0, r_max, 'upper')]
        RoundSphere.__init__(self, 2, faces=faces, params={'r_min': r_min, 'r_max': r_max})


class CustomManifold(ChartedManifold):
    """
    Metric given by closed-form expressions over the chart coordinates.
    Derivatives use central differences.
    """
    tag = 'custom'

    def __init__(self, dim, lower, upper, metric_exprs, coords=None, periods=None,
                 faces=(), injectivity_radius=None, diameter=math.inf):
        import sympy as sp

        if injectivity_radius is None:
            raise PreconditionError('custom models need an injectivity_radius')
        ChartedManifold.__init__(self, dim, lower, upper, periods=periods, faces=faces,
                                 injectivity_radius=injectivity_radius, diameter=diameter,
                                 params={'metric': metric_exprs})
        names = coords or ['x{0}'.format(i) for i in range(dim)]
        if len(names) != dim or len(metric_exprs) != dim or any(len(row) != dim for row in metric_exprs):
            raise PreconditionError('custom metric must be a {0}x{0} array of expressions'.format(dim))
        symbols = sp.symbols(names)
        local = dict(zip(names, symbols))
        self._entries = []
        for i in range(dim):
            row = []
            for j in range(dim):
                expr = sp.sympify(str(metric_exprs[i][j]), locals=local)
                row.append(sp.lambdify(symbols, expr, 'numpy'))
            self._entries.append(row)

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        coords = [x[..., i] for i in range(self.dim)]
        g = np.empty(x.shape[:-1] + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                g[..., i, j] = np.broadcast_to(self._entries[i][j](*coords), x.shape[:-1])
        return 0.5 * (g + np.swapaxes(g, -1, -2))


def load_custom(source):
    """
    Build a CustomManifold from a JSON file name or an already parsed dict:
    {dim, box, periods, boundary_faces, metric, coords, injectivity_radius}.
    """
    if isinstance(source, str):
        with open(source, 'r') as f:
            source = json.load(f)
    try:
        dim = int(source['dim'])
        box = source['box']
        metric_exprs = source['metric']
    except KeyError as exc:
        raise PreconditionError('custom manifold description lacks {0}'.format(exc))
    lower = [float(b[0]) for b in box]
    upper = [float(b[1]) for b in box]
    faces = [coordinate_face(int(f['axis']), float(f['value']), f['side'])
             for f in source.get('boundary_faces', [])]
    return CustomManifold(dim, lower, upper, metric_exprs, coords=source.get('coords'),
                          periods=source.get('periods'), faces=faces,
                          injectivity_radius=source.get('injectivity_radius'),
                          diameter=source.get('diameter', math.inf))


def make_model(tag, **params):
    """
    Built-in model by tag; a tag ending in .json loads a custom model.
    """
    if tag.endswith('.json'):
        return load_custom(tag)
    if tag in ('disc', 'euclidean-disc'):
        return EuclideanDisc(radius=params.get('radius', 1.0))
    if tag in ('cylinder', 'flat-cylinder'):
        return FlatCylinder(a=params.get('a', 1.0))
    if tag in ('torus2', 'torus3'):
        return FlatTorus(dim=int(tag[-1]), periods=params.get('periods'))
    if tag == 'flat-torus':
        return FlatTorus(dim=params.get('dim', 2), periods=params.get('periods'))
    if tag in ('sphere2', 'sphere3'):
        return RoundSphere(dim=int(tag[-1]))
    if tag == 'round-sphere':
        return RoundSphere(dim=params.get('dim', 2))
    if tag in ('sphere-patch', 'sphere-polar-patch'):
        return SpherePolarPatch(r_min=params.get('r_min', 0.25), r_max=params.get('r_max', math.pi - 0.25))
    if tag == 'halfplane':
        return EuclideanHalfSpace(dim=params.get('dim', 2))
    raise CapabilityError('unknown model tag {0!r}'.format(tag))


def metric_at(m, x):
    return m.metric(m.check_point(x))


def christoffel(m, x):
    return m.christoffel(m.check_point(x))


def volume_density(m, x):
    return m.volume_density(m.check_point(x))


def distance(m, p, q):
    return m.distance(m.reduce(p), m.reduce(q))


def orthonormal_frame(m, x, v):
    """
    g-orthonormal basis of v-perp at x as the columns of an n x (n-1) array,
    by Gram-Schmidt against the coordinate axes.
    """
    g = m.metric(x)
    basis = [np.asarray(v, dtype=float) / math.sqrt(float(np.asarray(v) @ g @ np.asarray(v)))]
    for i in range(m.dim):
        if len(basis) == m.dim:
            break
        e = np.zeros(m.dim)
        e[i] = 1.0
        for b in basis:
            e = e - float(b @ g @ e) * b
        size = math.sqrt(max(float(e @ g @ e), 0.0))
        if size > 1e-6:
            basis.append(e / size)
    return np.stack(basis[1:], axis=-1)


def fibonacci_sphere(count):
    """
    Deterministic near-uniform unit vectors in R^3.
    """
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    rho = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def unit_directions(m, x, count=None, half=False):
    """
    Unit tangent vectors at x: uniform angles in n = 2 (360 default),
    Fibonacci sphere in n = 3 (256 default). half keeps one of each +-v pair.
    """
    if m.dim == 2:
        count = count or 360
        span = math.pi if half else 2.0 * math.pi
        angles = span * np.arange(count) / count
        u = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    elif m.dim == 3:
        count = count or 256
        u = fibonacci_sphere(2 * count if half else count)
        if half:
            u = u[u[:, 2] > 0][:count]
    else:
        raise CapabilityError('direction sampling is implemented for n = 2 and n = 3')
    chol = np.linalg.cholesky(m.metric(x))
    return np.linalg.solve(chol.T, u.T).T


def test_metric_positive_on_samples():
    rng = np.random.default_rng(3)
    for m in [FlatTorus(2), FlatCylinder(1.0), RoundSphere(2), RoundSphere(3), SpherePolarPatch()]:
        x = m.lower + (np.minimum(m.upper, 5.0) - np.maximum(m.lower, -5.0)) * rng.uniform(0.05, 0.95, (50, m.dim))
        x = np.where(np.isfinite(m.lower), x, rng.uniform(-1.0, 1.0, (50, m.dim)))
        g = m.metric(x)
        assert np.allclose(g, np.swapaxes(g, -1, -2), atol=0.0)
        assert np.all(np.linalg.eigvalsh(g)[..., 0] > 0)


def test_sphere_patch_christoffel():
    m = SpherePolarPatch()
    r = 0.7
    gamma = m.christoffel(np.array([r, 1.0]))
    assert abs(gamma[0, 1, 1] + math.sin(r) * math.cos(r)) < 1e-12
    assert abs(gamma[1, 0, 1] - math.cos(r) / math.sin(r)) < 1e-12
    assert abs(gamma[1, 1, 0] - math.cos(r) / math.sin(r)) < 1e-12


def test_sphere_embedding_roundtrip():
    m = RoundSphere(3)
    x = np.array([0.9, 1.2, 4.0])
    assert np.allclose(m.from_embedding(m.embed(x)), x, atol=1e-12)
