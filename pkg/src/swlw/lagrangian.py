"""Eulerian <-> Lagrangian (mass) coordinate maps on the unit interval.

The mass coordinate is y(x) = int_0^x rho dz, so y_x = rho and v(y(x)) = 1/rho(x).
Maps are built by trapezoidal cumulative integration and inverted with monotone
cubic Hermite interpolation using the exact nodal slopes (rho and 1/rho).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PchipInterpolator

from .errors import RangeError, ShapeError, VacuumError

RHO_MIN = 1e-10

__all__ = ["RHO_MIN", "MassMap", "build_map", "map_from_specific_volume", "pullback", "pushforward"]


def _monotone_hermite(x, y, dydx):
    """Cubic Hermite interpolant with given slopes, falling back to PCHIP when
    the Fritsch-Carlson monotonicity condition fails anywhere."""
    secant = np.diff(y) / np.diff(x)
    a = dydx[:-1] / secant
    b = dydx[1:] / secant
    if np.all(secant > 0) and np.all(a * a + b * b <= 9.0):
        return CubicHermiteSpline(x, y, dydx, extrapolate=False)
    return PchipInterpolator(x, y, extrapolate=False)


@dataclass(frozen=True)
class MassMap:
    x_nodes: np.ndarray
    y_values: np.ndarray
    total_mass: float
    rho_nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_fwd", _monotone_hermite(self.x_nodes, self.y_values, self.rho_nodes))
        object.__setattr__(self, "_inv", _monotone_hermite(self.y_values, self.x_nodes, 1.0 / self.rho_nodes))

    def _check(self, q, lo, hi, what):
        q = np.asarray(q, dtype=float)
        tol = 1e-12 * max(1.0, abs(hi))
        if np.any(q < lo - tol) or np.any(q > hi + tol):
            raise RangeError(f"{what} query outside [{lo:g}, {hi:g}]")
        return np.clip(q, lo, hi)

    def y_of_x(self, x):
        x = self._check(x, self.x_nodes[0], self.x_nodes[-1], "x")
        return self._fwd(x)

    def x_of_y(self, y):
        y = self._check(y, 0.0, self.total_mass, "y")
        return self._inv(y)


def build_map(rho, x=None, rho_min: float = RHO_MIN) -> MassMap:
    """Build the mass map from nodal density on [0, 1] (or on ``x``)."""
    rho = np.asarray(rho, dtype=float)
    if x is None:
        x = np.linspace(0.0, 1.0, rho.size)
    x = np.asarray(x, dtype=float)
    if x.shape != rho.shape or rho.ndim != 1 or rho.size < 2:
        raise ShapeError("rho and x must be 1-D arrays of equal length >= 2")
    low = np.flatnonzero(~(rho >= rho_min))
    if low.size:
        j = int(low[0])
        raise VacuumError(location=float(x[j]), value=float(rho[j]))
    y = cumulative_trapezoid(rho, x, initial=0.0)
    return MassMap(x_nodes=x, y_values=y, total_mass=float(y[-1]), rho_nodes=rho)


def map_from_specific_volume(v, y=None, rho_min: float = RHO_MIN) -> MassMap:
    """Build the map from Lagrangian data: x(y) = int_0^y v.

    The returned x_nodes start at 0 and end at the domain length int v dy.
    """
    v = np.asarray(v, dtype=float)
    if y is None:
        y = np.linspace(0.0, 1.0, v.size)
    y = np.asarray(y, dtype=float)
    if y.shape != v.shape:
        raise ShapeError("v and y must have equal shape")
    if np.any(~(v > 0)) or np.any(1.0 / v < rho_min):
        j = int(np.flatnonzero(~(v > 0) | (1.0 / np.where(v > 0, v, 1.0) < rho_min))[0])
        raise VacuumError(location=float(y[j]), value=float(1.0 / v[j]) if v[j] > 0 else float("inf"))
    x = cumulative_trapezoid(v, y, initial=0.0)
    return MassMap(x_nodes=x, y_values=y - y[0], total_mass=float(y[-1] - y[0]), rho_nodes=1.0 / v)


def _split(f):
    if callable(f):
        return f, None
    return None, np.asarray(f)


def pullback(m: MassMap, f: Callable | np.ndarray, y=None) -> np.ndarray:
    """Return f(y(x)) at the map's x nodes.

    ``f`` is either a callable of y or samples on ``y`` (default: a uniform grid
    on [0, total_mass] with as many points as f).
    """
    fun, vals = _split(f)
    if fun is not None:
        return np.asarray(fun(m.y_values))
    if y is None:
        y = np.linspace(0.0, m.total_mass, vals.shape[-1])
    y = np.asarray(y, dtype=float)
    if y[0] > 1e-12 * max(1.0, m.total_mass) or y[-1] < m.total_mass * (1 - 1e-12):
        raise RangeError("sample grid in y must cover [0, total_mass]")
    if y.size == m.y_values.size and np.array_equal(y, m.y_values):
        return vals.copy()
    return CubicSpline(y, vals, axis=-1)(m.y_values)


def pushforward(m: MassMap, f: Callable | np.ndarray, y=None) -> np.ndarray:
    """Return f(x(y)) on the y grid ``y`` (default uniform on [0, total_mass]).

    ``f`` is either a callable of x or samples at the map's x nodes.
    """
    if y is None:
        y = np.linspace(0.0, m.total_mass, m.x_nodes.size)
    xq = m.x_of_y(y)
    fun, vals = _split(f)
    if fun is not None:
        return np.asarray(fun(xq))
    if vals.shape[-1] != m.x_nodes.size:
        raise ShapeError("f must be sampled at the map's x nodes")
    return CubicSpline(m.x_nodes, vals, axis=-1)(xq)
