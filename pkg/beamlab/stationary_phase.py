"""
Stationary phase with a non-degenerate minimum at the origin:

    lam^{n/2} int_{B_r} exp(-lam Psi(x)) a(x) dx  ->  (2 pi)^{n/2} a(0) / sqrt(det Psi''(0))

with the quantitative hypothesis C r <= c/4 on the cubic remainder and a
remainder that decays like lam^{-alpha/2} for C^{0,alpha} amplitudes.
"""
import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from beamlab.errors import PreconditionError
from beamlab.quadrature import box_grid, log_slope, require_resolution, simpson_with_error
from beamlab.workers import ordered_map

logger = logging.getLogger(__name__)

Precondition = namedtuple('Precondition', 'holds margin cubic_constant')

CORE_EXCLUSION = 1e-3


@dataclass(frozen=True)
class PhaseModel:
    """
    Phase psi (points (..., n) -> values) with psi(0) = 0, grad psi(0) = 0
    and Hessian hessian at 0, considered on the ball of radius r.
    """
    psi: object
    hessian: np.ndarray
    r: float

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        object.__setattr__(self, 'hessian', h)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or np.max(np.abs(h - h.T)) > 1e-12:
            raise PreconditionError('phase Hessian must be a symmetric square matrix')
        origin = np.zeros(self.dim)
        if abs(float(self.psi(origin))) > 1e-10:
            raise PreconditionError('phase must vanish at the origin')
        step = 1e-6
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step
            slope = (float(self.psi(e)) - float(self.psi(-e))) / (2.0 * step)
            if abs(slope) > 1e-8:
                raise PreconditionError('phase must be critical at the origin')

    @property
    def dim(self):
        return self.hessian.shape[0]

    @property
    def c(self):
        return float(np.linalg.eigvalsh(self.hessian)[0])


def quadratic_phase(hessian, r, cubic=None):
    """
    Psi(x) = <hessian x, x>/2 (+ cubic(x) if given).
    """
    hessian = np.asarray(hessian, dtype=float)

    def psi(x):
        x = np.asarray(x, dtype=float)
        value = 0.5 * np.einsum('...i,ij,...j->...', x, hessian, x)
        return value + cubic(x) if cubic is not None else value
    return PhaseModel(psi, hessian, r)


def _sample_points(phase, per_axis=41, ray_samples=200):
    n, r = phase.dim, phase.r
    grid = box_grid(-r * np.ones(n), r * np.ones(n), 2.0 * r / (per_axis - 1))
    pts = grid.points().reshape(-1, n)
    size = np.linalg.norm(pts, axis=1)
    pts = pts[(size <= r) & (size >= CORE_EXCLUSION)]
    s = np.linspace(CORE_EXCLUSION, r, ray_samples)
    rays = []
    for i in range(n):
        for sign in (1.0, -1.0):
            ray = np.zeros((ray_samples, n))
            ray[:, i] = sign * s
            rays.append(ray)
    return np.concatenate([pts] + rays)


def check_precondition(phase):
    """
    Estimate C = max |Psi(x) - <Psi''(0) x, x>/2| / |x|^3 over the ball
    (|x| >= 1e-3) and report whether C r <= c/4, with margin c/4 - C r.
    """
    pts = _sample_points(phase)
    quad = 0.5 * np.einsum('...i,ij,...j->...', pts, phase.hessian, pts)
    cubic = np.abs(phase.psi(pts) - quad) / np.linalg.norm(pts, axis=1) ** 3
    constant = float(np.max(cubic))
    margin = phase.c / 4.0 - constant * phase.r
    return Precondition(margin >= 0.0, margin, constant)


def leading_term(hessian, a0):
    """
    (2 pi)^{n/2} a0 / sqrt(det hessian).
    """
    hessian = np.asarray(hessian, dtype=float)
    try:
        chol = np.linalg.cholesky(hessian)
    except np.linalg.LinAlgError:
        raise PreconditionError('Hessian is not positive definite')
    n = hessian.shape[0]
    root_det = float(np.prod(np.diag(chol)))
    return (2.0 * math.pi) ** (n / 2.0) * a0 / root_det


def oscillatory_integral(phase, a, lam, per_width=16, tail=150.0):
    """
    lam^{n/2} int_{B_r} exp(-lam Psi) a dx by Simpson on a box of half-width
    min(r, sqrt(tail/(lam c))); returns (value, Richardson error estimate).
    """
    width = lam ** -0.5
    n = phase.dim
    half = min(phase.r, math.sqrt(tail / (lam * phase.c)))
    grid = box_grid(-half * np.ones(n), half * np.ones(n), width / per_width)
    require_resolution(grid, width, 8, 'oscillatory integral')
    x = grid.points()
    inside = np.linalg.norm(x, axis=-1) <= phase.r
    values = np.where(inside, lam ** (n / 2.0) * np.exp(-lam * phase.psi(x)) * a(x), 0.0)
    value, error = simpson_with_error(values, grid)
    return value, error


@dataclass
class RateFit:
    lams: list
    remainders: list
    errors: list
    used: list
    slope: float = math.nan
    intercept: float = math.nan
    constants: list = field(default_factory=list)
    status: str = 'fitted'


def remainder_rate(phase, a, ladder, alpha=None, amplitude_norm=None, workers=1, **options):
    """
    Fit the log-log slope of |integral - leading term| over the ladder.
    Rungs below ten times their quadrature error (or at round-off) are
    dropped; if fewer than two survive the fit is reported as 'floor'.
    """
    ladder = [float(lam) for lam in ladder]
    if len(ladder) < 4 or max(ladder) < 10.0 * min(ladder):
        raise PreconditionError('ladder needs at least 4 rungs spanning a decade')
    pre = check_precondition(phase)
    if not pre.holds:
        raise PreconditionError('C r <= c/4 fails (margin {0:.3g})'.format(pre.margin))
    origin = np.zeros(phase.dim)
    leading = leading_term(phase.hessian, np.asarray(a(origin)).item())
    results = ordered_map(lambda lam: oscillatory_integral(phase, a, lam, **options), ladder, workers)
    remainders = [abs(value - leading) for value, _ in results]
    errors = [err for _, err in results]
    floor = 1e-12 * max(abs(leading), 1.0)
    used = [i for i, (rem, err) in enumerate(zip(remainders, errors)) if rem > 10.0 * err and rem > floor]
    fit = RateFit(ladder, remainders, errors, used)
    if len(used) < len(ladder):
        logger.warning('dropped %d rungs at the quadrature floor', len(ladder) - len(used))
    if any(b > a_ for a_, b in zip(remainders, remainders[1:])):
        logger.warning('remainder is not monotone over the ladder')
    if len(used) < 2:
        fit.status = 'floor'
        return fit
    fit.slope, fit.intercept = log_slope([ladder[i] for i in used], [remainders[i] for i in used])
    if alpha is not None and amplitude_norm:
        fit.constants = [remainders[i] * ladder[i] ** (alpha / 2.0) / amplitude_norm for i in used]
    return fit


def test_leading_term_examples():
    assert abs(leading_term(np.eye(2), 1.0) - 2.0 * math.pi) < 1e-12
    assert abs(leading_term(np.diag([1.0, 4.0]), 1.0) - math.pi) < 1e-12
    assert abs(leading_term(np.eye(3), 2.0) - 2.0 * (2.0 * math.pi) ** 1.5) < 1e-12
