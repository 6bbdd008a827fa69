"""
Matrix Jacobi fields along a geodesic and conjugate points.

In the parallel frame a Jacobi field vanishing-or-not at t = 0 solves
Y'' + K(t) Y = 0 with K_ab = <R(E_a, x')x', E_b>. We carry the two
fundamental solutions A (A(0) = I, A'(0) = 0) and B (B(0) = 0, B'(0) = I).
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from beamlab.errors import AccuracyError, IntegrationError
from beamlab.geodesics import integrate_geodesic
from beamlab.manifold import unit_directions
from beamlab.workers import ordered_map

logger = logging.getLogger(__name__)

CONJUGACY_TOL = 1e-6
WRONSKIAN_TOL = 1e-6


@dataclass(frozen=True)
class JacobiMatrixSolution:
    path: object
    t: np.ndarray
    a: np.ndarray
    da: np.ndarray
    b: np.ndarray
    db: np.ndarray
    singular_values: np.ndarray
    evaluator: object = field(default=None, repr=False, compare=False)

    def at(self, t):
        """
        (A, A', B, B') at time t.
        """
        return self.evaluator(float(t))

    def wronskian_defect(self):
        w = (np.einsum('...ji,...jk->...ik', self.a, self.db)
             - np.einsum('...ji,...jk->...ik', self.da, self.b))
        return float(np.max(np.abs(w - np.eye(self.a.shape[-1]))))


def _constant_curvature(kappa, k):
    eye = np.eye(k)

    def evaluate(t):
        if kappa > 0:
            r = math.sqrt(kappa)
            c, s, ds = math.cos(r * t), math.sin(r * t) / r, -r * math.sin(r * t)
        elif kappa < 0:
            r = math.sqrt(-kappa)
            c, s, ds = math.cosh(r * t), math.sinh(r * t) / r, r * math.sinh(r * t)
        else:
            c, s, ds = 1.0, t, 0.0
        return c * eye, ds * eye, s * eye, c * eye
    return evaluate


def _curvature_along(path):
    m = path.manifold

    def block(t):
        x, v, e = path.state_at(np.array(t))
        return m.curvature_block(m.reduce(x), v, e)
    return block


def jacobi_along(path, t_end=None, tol=1e-10, max_step=0.05, step=0.01, closed_form=True):
    """
    Solve the matrix Jacobi equation on [0, t_end] (default: to the end of
    the sampled path). Constant-curvature models use the closed form unless
    closed_form is False.
    """
    m = path.manifold
    k = m.dim - 1
    if t_end is None:
        t_end = float(path.t[-1])
    t = np.linspace(0.0, t_end, max(int(math.ceil(t_end / step)), 1) + 1)

    if closed_form and m.curvature is not None:
        evaluate = _constant_curvature(m.curvature, k)
    else:
        curvature = _curvature_along(path)

        def rhs(s, y):
            mats = y.reshape(4, k, k)
            kk = curvature(s)
            return np.concatenate([mats[1], -kk @ mats[0], mats[3], -kk @ mats[2]]).ravel()

        eye, zero = np.eye(k), np.zeros((k, k))
        sol = solve_ivp(rhs, (0.0, t_end), np.concatenate([eye, zero, zero, eye]).ravel(),
                        method='RK45', rtol=tol, atol=tol, max_step=max_step, dense_output=True)
        if sol.status == -1:
            raise IntegrationError('Jacobi integration failed: {0}'.format(sol.message),
                                   diagnostics={'t': float(sol.t[-1]), 'nfev': int(sol.nfev)})

        def evaluate(s):
            mats = sol.sol(s).reshape(4, k, k)
            return mats[0], mats[1], mats[2], mats[3]

    mats = [evaluate(s) for s in t]
    a, da, b, db = (np.array([q[i] for q in mats]) for i in range(4))
    result = JacobiMatrixSolution(path, t, a, da, b, db, np.linalg.svd(b, compute_uv=False), evaluate)
    defect = result.wronskian_defect()
    if defect > WRONSKIAN_TOL:
        raise AccuracyError('Wronskian drifted by {0:.2e}'.format(defect))
    return result


def _sigma_min(solution, t):
    return float(np.linalg.svd(solution.at(t)[2], compute_uv=False)[-1])


def _det(solution, t):
    return float(np.linalg.det(solution.at(t)[2]))


def conjugate_points(solution, threshold=CONJUGACY_TOL, window=0.1):
    """
    Times t* > 0 where B(t*) is singular, with the order of conjugacy
    (number of singular values below threshold times the local size of B).
    Accepts a JacobiMatrixSolution or a GeodesicPath.
    """
    if not isinstance(solution, JacobiMatrixSolution):
        solution = jacobi_along(solution)
    t = solution.t
    sv = solution.singular_values
    smin = sv[:, -1]
    det = np.linalg.det(solution.b)
    found = []
    start = 10
    for i in range(start, len(t) - 1):
        if det[i] != 0.0 and det[i] * det[i + 1] < 0.0:
            tc = brentq(lambda s: _det(solution, s), t[i], t[i + 1], xtol=1e-14)
        elif smin[i] <= smin[i - 1] and smin[i] < smin[i + 1]:
            res = minimize_scalar(lambda s: _sigma_min(solution, s) ** 2, bounds=(t[i - 1], t[i + 1]),
                                  method='bounded', options={'xatol': 1e-12})
            tc = float(res.x)
        else:
            continue
        near = (t >= tc - window) & (t <= tc + window)
        scale = max(float(np.max(sv[near, 0])), np.finfo(float).tiny)
        values = np.linalg.svd(solution.at(tc)[2], compute_uv=False)
        order = int(np.sum(values < threshold * scale))
        if order and not any(abs(tc - p) < 1e-6 for p, _ in found):
            found.append((tc, order))
    found.sort()
    logger.debug('conjugate points: %s', found)
    return found


def order_of_conjugacy(m, x, directions=None, length=None, workers=1):
    """
    Largest order of conjugacy seen along geodesics from x in the sampled
    directions, up to length (default 1.5 diameters). A lower bound only.
    """
    if directions is None or np.isscalar(directions):
        directions = unit_directions(m, x, directions)
    if length is None:
        length = 1.5 * m.diameter if math.isfinite(m.diameter) else 10.0

    def order_along(v):
        try:
            path = integrate_geodesic(m, x, v, t_span=(0.0, length))
            points = conjugate_points(jacobi_along(path))
        except IntegrationError as exc:
            logger.warning('skipping direction %s: %s', v, exc)
            return 0
        return max([order for _, order in points], default=0)

    return max(ordered_map(order_along, list(directions), workers), default=0)
