"""
Tensor-product grids and composite Simpson quadrature.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from beamlab.errors import ResolutionError


@dataclass(frozen=True)
class Grid:
    """
    Rectangular grid in chart coordinates.

    axes is a tuple of increasing 1D arrays, one per chart axis.
    """
    axes: tuple

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def spacing(self):
        return tuple(float(np.max(np.diff(a))) if len(a) > 1 else 0.0 for a in self.axes)

    def points(self):
        """
        Grid nodes as an array of shape (*shape, dim).
        """
        mesh = np.meshgrid(*self.axes, indexing='ij')
        return np.stack(mesh, axis=-1)

    def coarsened(self):
        """
        Every other node along every axis (spacing doubled).
        """
        return Grid(tuple(a[::2] for a in self.axes))


def odd_count(length, spacing):
    """
    Smallest odd node count whose spacing over length is <= spacing.
    """
    m = max(2, int(math.ceil(length / spacing)))
    if m % 2 == 1:
        m += 1
    return m + 1


def box_grid(lo, hi, spacing):
    """
    Grid over the box [lo, hi] with odd node counts and at most the given
    spacing (scalar or one per axis).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    spacing = np.broadcast_to(np.asarray(spacing, dtype=float), lo.shape)
    axes = []
    for a, b, h in zip(lo, hi, spacing):
        if not b > a:
            raise ResolutionError('empty grid axis [{0}, {1}]'.format(a, b))
        axes.append(np.linspace(a, b, odd_count(b - a, h)))
    return Grid(tuple(axes))


def require_resolution(grid, width, per_width, what):
    """
    Raise ResolutionError unless every axis spacing is at most width/per_width.
    """
    limit = width / per_width
    worst = max(grid.spacing)
    if worst > limit * (1.0 + 1e-12):
        raise ResolutionError('{0}: grid spacing {1:.3e} exceeds {2:.3e} '
                              '({3} points per width {4:.3e})'.format(what, worst, limit, per_width, width))


def simpson_nd(values, grid):
    """
    Composite Simpson over all grid axes; values has the grid shape
    (trailing axes beyond the grid are kept).
    """
    result = values
    for axis in reversed(range(grid.dim)):
        result = integrate.simpson(result, x=grid.axes[axis], axis=axis)
    return result


def simpson_with_error(values, grid):
    """
    Simpson value together with the Richardson estimate |I_h - I_2h|/15.
    """
    fine = simpson_nd(values, grid)
    sub = values[tuple(slice(None, None, 2) for _ in range(grid.dim))]
    coarse = simpson_nd(sub, grid.coarsened())
    return fine, abs(fine - coarse) / 15.0


def geometric_ladder(start, stop, count):
    """
    count values from start to stop, equally spaced in log.
    """
    return np.geomspace(start, stop, int(count))


def log_slope(x, y):
    """
    Least-squares slope of log y against log x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def test_simpson_nd_gaussian():
    grid = box_grid([-8.0, -8.0], [8.0, 8.0], 0.05)
    x = grid.points()
    values = np.exp(-0.5 * np.sum(x * x, axis=-1))
    assert abs(simpson_nd(values, grid) - 2.0 * np.pi) < 1e-10


def test_log_slope():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    slope, _ = log_slope(x, 3.0 * x ** -1.5)
    assert abs(slope + 1.5) < 1e-12


def test_odd_count():
    assert odd_count(1.0, 0.1) == 11
    assert odd_count(1.0, 0.3) == 5
