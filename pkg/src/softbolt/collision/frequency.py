"""Collision frequency nu(v) = (int b0 domega) * int |u - v|^varrho mu(u) du.

Integrating the Gaussian over directions of w = u - v leaves a 1-D radial
integral in r = |w|:

    (1/|v|) int_0^inf r^(varrho+1) [e^{-(r-|v|)^2/2} - e^{-(r+|v|)^2/2}] dr

times the angular factor, with the |v| -> 0 limit 2 int r^(varrho+2) e^{-r^2/2} dr.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, interpolate

from ..errors import QuadratureNotConverged

B0_KINDS = ("abs_cos",)


def angular_factor(b0_kind: str = "abs_cos") -> float:
    if b0_kind != "abs_cos":
        raise ValueError(f"unknown b0_kind {b0_kind!r}; supported: {B0_KINDS}")
    # int_{S^2} |cos theta| domega = 2 pi int_{-1}^{1} |x| dx
    return 2.0 * math.pi


def _radial(speed: float, varrho: float, limit: int) -> float:
    a = varrho + 2.0
    if speed < 1e-8:
        val, err, *info = integrate.quad(lambda r: r**a * math.exp(-0.5 * r * r), 0.0, math.inf,
                                         limit=limit, full_output=1)
        val *= 2.0
    else:
        def g(r):
            return r ** (a - 1.0) * (math.exp(-0.5 * (r - speed) ** 2) - math.exp(-0.5 * (r + speed) ** 2))

        upper = speed + 40.0
        val, err, *info = integrate.quad(g, 0.0, upper, points=[speed], limit=limit, full_output=1)
        val /= speed
    if len(info) > 1 and "The maximum number of subdivisions" in str(info[1]):
        raise QuadratureNotConverged(f"radial frequency integral at |v|={speed}: err={err:.2e}")
    return val


def frequency_of_speed(speeds, varrho: float, b0_kind: str = "abs_cos", limit: int = 200) -> np.ndarray:
    """nu evaluated at arbitrary speeds (1-D array)."""
    if not (-3.0 < varrho < 0.0):
        raise ValueError("varrho must lie in (-3, 0)")
    speeds = np.atleast_1d(np.asarray(speeds, dtype=float))
    uniq, inv = np.unique(np.round(speeds, 13), return_inverse=True)
    vals = np.array([_radial(s, varrho, limit) for s in uniq])
    return angular_factor(b0_kind) * vals[inv]


def collision_frequency(grid, varrho: float, b0_kind: str = "abs_cos") -> np.ndarray:
    return frequency_of_speed(grid.speeds, varrho, b0_kind)


class FrequencyTable:
    """Cubic spline of nu in |v| for fast evaluation at off-grid velocities."""

    def __init__(self, varrho: float, b0_kind: str = "abs_cos", max_speed: float = 20.0, n: int = 401):
        s = np.linspace(0.0, max_speed, n)
        self.max_speed = max_speed
        self.varrho = varrho
        self._spline = interpolate.CubicSpline(s, frequency_of_speed(s, varrho, b0_kind))
        self._tail = float(self._spline(max_speed)) * max_speed ** (-varrho)

    def __call__(self, speeds):
        speeds = np.asarray(speeds, dtype=float)
        inside = speeds <= self.max_speed
        out = np.empty_like(speeds)
        out[inside] = self._spline(speeds[inside])
        # far tail behaves like C |v|^varrho
        out[~inside] = self._tail * speeds[~inside] ** self.varrho
        return out

    def of_velocity(self, v):
        return self(np.linalg.norm(np.asarray(v, dtype=float), axis=-1))
