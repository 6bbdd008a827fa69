"""
Finite-difference Laplace-Beltrami operator on chart grids.

    Delta_g f = |g|^{-1/2} d_i (|g|^{1/2} g^{ij} d_j f)

Fourth-order central stencils; flat metrics use the plain second
difference. Grids are processed in tiles of rows along the first axis.
"""
import logging
import math

import numpy as np

from beamlab.errors import ResolutionError
from beamlab.quadrature import Grid

logger = logging.getLogger(__name__)

TILE_POINTS = 2000000


def _take(f, axis, start, stop):
    index = [slice(None)] * f.ndim
    index[axis] = slice(start, stop if stop != 0 else None)
    return f[tuple(index)]


def first_difference(f, h, axis):
    """
    Fourth-order d/dx along axis; the result loses two nodes at each end.
    """
    return (-_take(f, axis, 4, 0) + 8.0 * _take(f, axis, 3, -1)
            - 8.0 * _take(f, axis, 1, -3) + _take(f, axis, 0, -4)) / (12.0 * h)


def second_difference(f, h, axis):
    """
    Fourth-order d2/dx2 along axis; the result loses two nodes at each end.
    """
    return (-_take(f, axis, 4, 0) + 16.0 * _take(f, axis, 3, -1) - 30.0 * _take(f, axis, 2, -2)
            + 16.0 * _take(f, axis, 1, -3) - _take(f, axis, 0, -4)) / (12.0 * h * h)


def _crop(f, trims):
    index = tuple(slice(t, f.shape[i] - t) for i, t in enumerate(trims))
    return f[index]


def _extend(axis, halo):
    h = axis[1] - axis[0]
    return np.concatenate([axis[0] - h * np.arange(halo, 0, -1), axis, axis[-1] + h * np.arange(1, halo + 1)])


def laplacian_on_tile(m, values, axes):
    """
    Delta_g of values given on the tensor grid axes (each extended by a halo
    of 2 nodes for flat metrics, 4 otherwise); returns the inner block.
    """
    n = len(axes)
    steps = [a[1] - a[0] for a in axes]
    if m.flat:
        total = 0.0
        for i in range(n):
            trims = [2] * n
            trims[i] = 0
            total = total + _crop(second_difference(values, steps[i], i), trims)
        return total
    mid = Grid(tuple(a[2:-2] for a in axes)).points()
    g = m.metric(mid)
    ginv = np.linalg.inv(g)
    root = np.sqrt(np.linalg.det(g))
    grads = []
    for j in range(n):
        trims = [2] * n
        trims[j] = 0
        grads.append(_crop(first_difference(values, steps[j], j), trims))
    grads = np.stack(grads, axis=-1)
    flux = root[..., None] * np.einsum('...ij,...j->...i', ginv, grads)
    div = 0.0
    for i in range(n):
        trims = [2] * n
        trims[i] = 0
        div = div + _crop(first_difference(flux[..., i], steps[i], i), trims)
    return div / _crop(root, [2] * n)


def helmholtz_residual(m, field, grid, lam, inside_only=True):
    """
    L2 norms of (-Delta_g - lam^2) f and of f over the grid nodes in the
    interior of M, by rectangle sums with dV_g weights. field maps points
    (..., n) to complex values.
    """
    halo = 2 if m.flat else 4
    if any(len(a) < 2 for a in grid.axes):
        raise ResolutionError('residual grid needs at least two nodes per axis')
    cell = float(np.prod(grid.spacing))
    rest = int(np.prod(grid.shape[1:])) if grid.dim > 1 else 1
    rows = max(1, TILE_POINTS // max(rest, 1))
    axis0 = grid.axes[0]
    others = [_extend(a, halo) for a in grid.axes[1:]]
    res_sq = 0.0
    val_sq = 0.0
    for start in range(0, len(axis0), rows):
        stop = min(start + rows, len(axis0))
        h0 = axis0[1] - axis0[0]
        block = np.concatenate([axis0[start] - h0 * np.arange(halo, 0, -1), axis0[start:stop],
                                axis0[stop - 1] + h0 * np.arange(1, halo + 1)])
        axes = [block] + others
        values = field(Grid(tuple(axes)).points())
        lap = laplacian_on_tile(m, values, axes)
        inner = _crop(values, [halo] * grid.dim)
        pts = Grid(tuple([axis0[start:stop]] + list(grid.axes[1:]))).points()
        weight = m.volume_density(pts) * cell
        if inside_only and not m.closed:
            weight = np.where(m.boundary_level(pts) < 0.0, weight, 0.0)
        residual = -lap - lam * lam * inner
        res_sq += float(np.sum(np.abs(residual) ** 2 * weight))
        val_sq += float(np.sum(np.abs(inner) ** 2 * weight))
    logger.debug('helmholtz residual at lam=%g: %.3e (field %.3e)', lam, math.sqrt(res_sq), math.sqrt(val_sq))
    return math.sqrt(res_sq), math.sqrt(val_sq)


def test_second_difference_quartic_exact():
    x = np.linspace(0.0, 1.0, 11)
    d2 = second_difference(x ** 4, x[1] - x[0], 0)
    assert np.allclose(d2, 12.0 * x[2:-2] ** 2, atol=1e-9)


def test_first_difference_cubic_exact():
    x = np.linspace(0.0, 1.0, 11)
    d1 = first_difference(x ** 3, x[1] - x[0], 0)
    assert np.allclose(d1, 3.0 * x[2:-2] ** 2, atol=1e-10)
