"""Uniform Cartesian velocity grid with trapezoid weights."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import erf

from ..weights import maxwellian


@dataclass(frozen=True)
class VelocityGrid:
    """Nodes -V + a h, a = 0..N-1, h = 2V/(N-1), in each of three axes.

    N must be even so that no node sits at the origin and the grid is
    symmetric under v -> -v.  Flat node index is ``(a * N + b) * N + c``.
    """

    half_width: float = 6.0
    points_per_axis: int = 16

    def __post_init__(self):
        if self.points_per_axis < 2 or self.points_per_axis % 2:
            raise ValueError("points_per_axis must be an even integer >= 2")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def n(self) -> int:
        return self.points_per_axis

    @property
    def size(self) -> int:
        return self.points_per_axis**3

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    @cached_property
    def axis_weights(self) -> np.ndarray:
        w = np.full(self.points_per_axis, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    @cached_property
    def nodes(self) -> np.ndarray:
        a = self.axis
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.axis_weights
        return np.einsum("i,j,k->ijk", w, w, w).reshape(-1)

    @cached_property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    @cached_property
    def mu(self) -> np.ndarray:
        return maxwellian(self.nodes)

    @cached_property
    def sqrt_mu(self) -> np.ndarray:
        return np.sqrt(self.mu)

    @cached_property
    def reflection_index(self) -> np.ndarray:
        """Index of the node with v1 -> -v1 (mirror across the slab walls)."""
        idx = np.arange(self.size).reshape(self.n, self.n, self.n)
        return idx[::-1, :, :].reshape(-1)

    @cached_property
    def negation_index(self) -> np.ndarray:
        idx = np.arange(self.size).reshape(self.n, self.n, self.n)
        return idx[::-1, ::-1, ::-1].reshape(-1)

    def flat_index(self, a, b, c):
        return (np.asarray(a) * self.n + b) * self.n + c

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f))

    def inner(self, f, g) -> float:
        return float(np.dot(self.weights * f, g))

    def mass_exact(self) -> float:
        """Analytic integral of mu over the truncated cube [-V, V]^3."""
        one_axis = math.sqrt(2.0 * math.pi) * erf(self.half_width / math.sqrt(2.0))
        return one_axis**3 / (2.0 * math.pi)

    def half_space_flux(self, normal_axis: int = 0, sign: int = 1) -> float:
        """Grid quadrature of mu (n.v) over n.v > 0 for n = sign * e_axis."""
        nv = sign * self.nodes[:, normal_axis]
        mask = nv > 0
        return float(np.sum(self.weights[mask] * self.mu[mask] * nv[mask]))

    def trilinear(self, points):
        """Base indices (m, 3) and the eight corner weights (m, 8) for off-grid points.

        Points outside the cube get base index -1 in the offending axis.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        s = (p + self.half_width) / self.spacing
        base = np.floor(s).astype(np.int64)
        frac = s - base
        inside = (base >= 0) & (base <= self.n - 2)
        base = np.where(inside, base, -1)
        w = np.empty((len(p), 8))
        k = 0
        for da in (0, 1):
            for db in (0, 1):
                for dc in (0, 1):
                    w[:, k] = (
                        (frac[:, 0] if da else 1 - frac[:, 0])
                        * (frac[:, 1] if db else 1 - frac[:, 1])
                        * (frac[:, 2] if dc else 1 - frac[:, 2])
                    )
                    k += 1
        return base, w

    def interpolate(self, f, points) -> np.ndarray:
        """Trilinear interpolation of a grid vector; zero outside the cube."""
        base, w = self.trilinear(points)
        f3 = np.asarray(f).reshape(self.n, self.n, self.n)
        out = np.zeros(len(w))
        ok = np.all(base >= 0, axis=1)
        b = base[ok]
        k = 0
        for da in (0, 1):
            for db in (0, 1):
                for dc in (0, 1):
                    out[ok] += w[ok, k] * f3[b[:, 0] + da, b[:, 1] + db, b[:, 2] + dc]
                    k += 1
        return out
