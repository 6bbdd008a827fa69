"""
Gaussian beam quasimodes along a geodesic.

A beam is fixed by its path, the Riccati solution H(t) of
H' + H^2 + K(t) = 0 in the parallel frame, the leading amplitude
a0(t) = exp(-1/2 int_0^t tr H) and a cutoff of radius delta1 in the
transverse Fermi coordinate y:

    v(x) = lam^{(n-1)/8} exp(i lam (t + <H(t) y, y>/2)) a0(t) chi(|y|/delta1)
"""
import dataclasses
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp

from beamlab.errors import AccuracyError, IntegrationError, NumericalDegeneracyError, PreconditionError
from beamlab.geodesics import fermi_coordinates
from beamlab.laplacian import helmholtz_residual
from beamlab.quadrature import box_grid, require_resolution, simpson_nd

logger = logging.getLogger(__name__)

BeamNorms = namedtuple('BeamNorms', 'l2 l4 linf l4_ratio linf_ratio')

SYMMETRY_TOL = 1e-9
AMPLITUDE_TOL = 1e-7
EXTENSION = 0.05


def _mollifier(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z[inside] ** 2))
    return out


_RAMP_U = np.linspace(0.0, 1.0, 4097)
_RAMP_MASS = cumulative_simpson(_mollifier(2.0 * _RAMP_U - 1.0), x=_RAMP_U, initial=0.0)
_RAMP = np.clip(1.0 - _RAMP_MASS / _RAMP_MASS[-1], 0.0, 1.0)


@dataclass(frozen=True)
class CutoffFunction:
    """
    Smooth chi with chi = 1 on [0, plateau] and chi = 0 on [support, inf).

    Between the two radii chi is one minus the normalized primitive of the
    mollifier exp(-1/(1 - z^2)), stretched from [-1, 1] onto
    [plateau, support] and tabulated once on 4097 nodes.
    """
    plateau: float = 0.25
    support: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.plateau < self.support:
            raise PreconditionError('cutoff needs 0 < plateau < support')

    def __call__(self, s):
        u = (np.asarray(s, dtype=float) - self.plateau) / (self.support - self.plateau)
        return np.interp(u, _RAMP_U, _RAMP, left=1.0, right=0.0)


@dataclass(frozen=True)
class RiccatiSolution:
    t: np.ndarray
    h: np.ndarray
    trace_integral: np.ndarray
    evaluator: object = field(default=None, repr=False, compare=False)

    def at(self, t):
        """
        (H(t), int_0^t tr H) from the dense solution.
        """
        return self.evaluator(np.asarray(t, dtype=float))

    @property
    def min_imag_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(self.h.imag)))


def _curvature_function(path):
    m = path.manifold
    k = m.dim - 1
    if m.curvature is not None:
        block = m.curvature * np.eye(k)
        return lambda t: block

    def block(t):
        x, v, e = path.state_at(np.array(t))
        return m.curvature_block(m.reduce(x), v, e)
    return block


def solve_riccati(path, h0=None, t_span=None, tol=1e-10, max_step=0.01, step=0.005):
    """
    Solve H' + H^2 + K(t) = 0 from H(0) = h0 (default iI) in both directions
    over t_span (default the sampled range of the path), together with
    int_0^t tr H.
    """
    k = path.manifold.dim - 1
    h0 = 1j * np.eye(k) if h0 is None else np.asarray(h0, dtype=complex)
    if np.max(np.abs(h0 - h0.T)) > SYMMETRY_TOL:
        raise PreconditionError('initial Riccati datum must be symmetric')
    if np.min(np.linalg.eigvalsh(h0.imag)) <= 0.0:
        raise PreconditionError('initial Riccati datum needs positive definite imaginary part')
    lo, hi = t_span if t_span is not None else (float(path.t[0]), float(path.t[-1]))
    curvature = _curvature_function(path)

    def rhs(t, y):
        h = y[:-1].reshape(k, k)
        return np.concatenate([(-h @ h - curvature(t)).ravel(), [np.trace(h)]])

    y0 = np.concatenate([h0.ravel(), [0.0]]).astype(complex)
    legs = []
    for end in (hi, lo):
        if end == 0.0:
            legs.append(None)
            continue
        sol = solve_ivp(rhs, (0.0, end), y0, method='RK45', rtol=tol, atol=tol,
                        max_step=max_step, dense_output=True)
        if sol.status == -1:
            raise IntegrationError('Riccati integration failed: {0}'.format(sol.message),
                                   diagnostics={'t': float(sol.t[-1]), 'nfev': int(sol.nfev)})
        legs.append(sol)
    forward, backward = legs

    def evaluate(t):
        flat = np.atleast_1d(t).ravel()
        state = np.empty((flat.size, k * k + 1), dtype=complex)
        state[:] = y0
        ahead = flat > 0.0
        behind = flat < 0.0
        if forward is not None and np.any(ahead):
            state[ahead] = forward.sol(np.minimum(flat[ahead], hi)).T
        if backward is not None and np.any(behind):
            state[behind] = backward.sol(np.maximum(flat[behind], lo)).T
        state = state.reshape(np.shape(t) + (k * k + 1,))
        return state[..., :-1].reshape(np.shape(t) + (k, k)), state[..., -1]

    n_back = int(math.ceil(-lo / step)) if lo < 0 else 0
    n_ahead = int(math.ceil(hi / step)) if hi > 0 else 0
    t = np.concatenate([np.linspace(lo, 0.0, n_back + 1)[:-1], np.linspace(0.0, hi, n_ahead + 1)])
    h, integral = evaluate(t)
    symmetry = float(np.max(np.abs(h - np.swapaxes(h, -1, -2))))
    smallest = float(np.min(np.linalg.eigvalsh(0.5 * (h.imag + np.swapaxes(h.imag, -1, -2)))))
    if symmetry > SYMMETRY_TOL:
        raise NumericalDegeneracyError('Riccati solution lost symmetry ({0:.2e})'.format(symmetry),
                                       diagnostics={'symmetry_defect': symmetry})
    if smallest < 1e-12:
        raise NumericalDegeneracyError('Im H lost positivity ({0:.2e})'.format(smallest),
                                       diagnostics={'min_imag_eigenvalue': smallest})
    logger.debug('riccati on [%g, %g]: min eig Im H %.4g', lo, hi, smallest)
    return RiccatiSolution(t, h, integral, evaluate)


def amplitude_a0(t, trace_h):
    """
    exp(-1/2 int_0^t tr H) by cumulative Simpson on the samples t (which must
    contain 0).
    """
    t = np.asarray(t, dtype=float)
    trace_h = np.asarray(trace_h, dtype=complex)
    zero = np.nonzero(t == 0.0)[0]
    if not zero.size:
        raise PreconditionError('amplitude samples must include t = 0')
    real = cumulative_simpson(trace_h.real, x=t, initial=0.0)
    imag = cumulative_simpson(trace_h.imag, x=t, initial=0.0)
    integral = real + 1j * imag
    integral = integral - integral[zero[0]]
    return np.exp(-0.5 * integral)


@dataclass(frozen=True)
class BeamProfile:
    path: object
    lam: float
    t: np.ndarray
    h: np.ndarray
    a0: np.ndarray
    delta1: float
    cutoff: CutoffFunction = CutoffFunction()
    riccati: object = field(default=None, repr=False, compare=False)

    @property
    def dim(self):
        return self.path.manifold.dim

    @property
    def t_range(self):
        return float(self.t[0]), float(self.t[-1])

    @property
    def exponent(self):
        return (self.dim - 1) / 8.0

    def with_lambda(self, lam):
        return dataclasses.replace(self, lam=float(lam))

    def h_at(self, t):
        return self.riccati.at(t)[0]

    def a0_at(self, t):
        return np.exp(-0.5 * self.riccati.at(t)[1])

    def describe(self):
        return {'lam': self.lam, 'delta1': self.delta1, 't_range': list(self.t_range),
                'cutoff': [self.cutoff.plateau, self.cutoff.support],
                'min_imag_eigenvalue': self.riccati.min_imag_eigenvalue}


def build_beam(path, lam, delta1, h0=None, cutoff=None, extension=EXTENSION):
    """
    Beam along path, with H and a0 continued a little past the exit times
    so finite differences near the boundary see a smooth field.
    """
    if not lam >= 1.0:
        raise PreconditionError('lam must be at least 1, got {0}'.format(lam))
    if not delta1 > 0.0:
        raise PreconditionError('cutoff radius must be positive')
    lo = max(float(path.t[0]) - extension, path.l_minus - extension)
    hi = min(float(path.t[-1]) + extension, path.l_plus + extension)
    riccati = solve_riccati(path, h0, t_span=(lo, hi))
    a0 = amplitude_a0(riccati.t, np.trace(riccati.h, axis1=-2, axis2=-1))
    direct = np.exp(-0.5 * riccati.trace_integral)
    drift = float(np.max(np.abs(a0 - direct)))
    if drift > AMPLITUDE_TOL:
        raise AccuracyError('amplitude quadrature and ODE disagree by {0:.2e}'.format(drift))
    return BeamProfile(path, float(lam), riccati.t, riccati.h, a0, float(delta1),
                       cutoff or CutoffFunction(), riccati)


def beam_coordinates(profile, x):
    """
    Fermi (t, y) of x relative to the beam's path; NaN where undefined.
    """
    return fermi_coordinates(profile.path, x, t_window=profile.t_range, strict=False)


def beam_phase(profile, x):
    """
    Complex phase t + <H(t) y, y>/2 (NaN off the tube).
    """
    t, y = beam_coordinates(profile, x)
    ok = np.isfinite(t)
    phase = np.full(t.shape, np.nan, dtype=complex)
    h = profile.h_at(t[ok])
    phase[ok] = t[ok] + 0.5 * np.einsum('...a,...ab,...b->...', y[ok], h, y[ok])
    return phase


def evaluate_beam(profile, x):
    """
    Beam values at points x (..., n); zero outside the cutoff support and
    off the parameter range.
    """
    t, y = beam_coordinates(profile, x)
    size = np.sqrt(np.sum(np.where(np.isfinite(y), y, 0.0) ** 2, axis=-1))
    live = np.isfinite(t) & (size < profile.cutoff.support * profile.delta1)
    out = np.zeros(t.shape, dtype=complex)
    if not np.any(live):
        return out
    tl, yl = t[live], y[live]
    h, integral = profile.riccati.at(tl)
    phase = tl + 0.5 * np.einsum('...a,...ab,...b->...', yl, h, yl)
    chi = profile.cutoff(size[live] / profile.delta1)
    out[live] = (profile.lam ** profile.exponent * np.exp(1j * profile.lam * phase)
                 * np.exp(-0.5 * integral) * chi)
    return out


def transverse_width(profile):
    """
    Largest |y| at which the Gaussian factor can still exceed 1e-8 of its
    axis value, capped by the cutoff support.
    """
    smallest = profile.riccati.min_imag_eigenvalue
    reach = math.sqrt(2.0 * math.log(1e8) / (profile.lam * smallest))
    return min(reach, profile.cutoff.support * profile.delta1)


def beam_grid(profile, spacing):
    """
    Chart box around the beam's tube with at most the given spacing.
    """
    m = profile.path.manifold
    ts = np.linspace(*profile.t_range, 201)
    x = profile.path.state_at(ts)[0]
    g_min = float(np.min(np.linalg.eigvalsh(m.metric(m.reduce(x)))))
    pad = transverse_width(profile) / math.sqrt(g_min)
    lo = np.maximum(np.min(x, axis=0) - pad, m.lower)
    hi = np.minimum(np.max(x, axis=0) + pad, m.upper)
    return box_grid(lo, hi, spacing)


def _inside_weight(m, points):
    weight = m.volume_density(points)
    if not m.closed:
        weight = np.where(m.contains(points), weight, 0.0)
    return weight


def beam_norms(profile, grid):
    """
    L2, L4 and L-infinity norms of the beam over the grid (Simpson, dV_g),
    with the ratios L4 / 1 and Linf / lam^{(n-1)/8}.
    """
    require_resolution(grid, profile.lam ** -0.5, 8, 'beam norms')
    m = profile.path.manifold
    points = grid.points()
    values = np.abs(evaluate_beam(profile, points))
    weight = _inside_weight(m, points)
    l2 = math.sqrt(max(float(simpson_nd(values ** 2 * weight, grid)), 0.0))
    l4 = max(float(simpson_nd(values ** 4 * weight, grid)), 0.0) ** 0.25
    linf = float(np.max(np.where(weight > 0, values, 0.0)))
    return BeamNorms(l2, l4, linf, l4, linf / profile.lam ** profile.exponent)


def residual_norm(profile, grid):
    """
    (||(-Delta_g - lam^2) v||, ratio residual / (lam^2 ||v||)) over the
    interior grid nodes; the grid must resolve the wavelength, spacing
    at most 1/(20 lam).
    """
    require_resolution(grid, 1.0 / profile.lam, 20, 'beam residual')
    m = profile.path.manifold
    residual, size = helmholtz_residual(m, lambda x: evaluate_beam(profile, x), grid, profile.lam)
    ratio = residual / (profile.lam ** 2 * size) if size > 0 else math.inf
    return residual, ratio


def default_cutoff_radius(r, injectivity_radius, c0):
    """
    min(rho/2, rho/(2(1 + 2 c0))) with rho = min(r, Inj/c0).
    """
    rho = min(r, injectivity_radius / c0)
    return min(rho / 2.0, rho / (2.0 * (1.0 + 2.0 * c0)))


def export_field_csv(profile, grid, file_name):
    """
    Chart coordinates with Re v and Im v on every grid node.
    """
    import csv

    points = grid.points().reshape(-1, grid.dim)
    values = evaluate_beam(profile, points)
    with open(file_name, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['x{0}'.format(i) for i in range(grid.dim)] + ['re_v', 'im_v'])
        for p, v in zip(points, values):
            writer.writerow(['{0:.10g}'.format(c) for c in p] + ['{0:.10g}'.format(v.real), '{0:.10g}'.format(v.imag)])


def test_cutoff_plateau_and_support():
    chi = CutoffFunction()
    s = np.array([0.0, 0.1, 0.25, 0.3, 0.49, 0.5, 2.0])
    values = chi(s)
    assert np.all(values[:3] == 1.0)
    assert np.all(values[-2:] == 0.0)
    assert np.all((values >= 0.0) & (values <= 1.0))
    ramp = chi(np.linspace(0.25, 0.5, 257))
    assert np.all(np.diff(ramp) <= 1e-15)
    assert abs(chi(np.array(0.375)) - 0.5) < 1e-6
