"""Convex level-set domains: normals, specular reflection, backward exit times,
kinetic distance and near-grazing classification.

Points carry ``dim`` components; velocities are always 3-vectors and only their
first ``dim`` components move the particle.  Normals are returned padded to
3 components so that ``n @ v`` is meaningful for every ``dim``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateGradient, NotOnBoundary, RootNotFound, ZeroSpatialVelocity

TOL_BOUNDARY = 1e-10
_GRAD_FLOOR = 1e-14
_BISECTION_ITERS = 200


@dataclass(frozen=True)
class Domain:
    """Open set {x : xi(x) < 0}.

    Quadratic domains (slab, ball, ellipsoid) are stored as
    ``xi(x) = (x - c)^T A (x - c) - s`` and get closed-form exit times;
    ``generic`` domains use stepping plus bisection.
    """

    kind: str
    dim: int
    level_set: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    convexity_constant: float
    diameter: float
    quad_matrix: Optional[np.ndarray] = None
    quad_center: Optional[np.ndarray] = None
    quad_shift: float = 0.0
    params: dict = field(default_factory=dict)

    # ---------------------------------------------------------------- builders
    @classmethod
    def _quadratic(cls, kind, A, center, shift, params):
        A = np.asarray(A, dtype=float)
        c = np.asarray(center, dtype=float)
        dim = A.shape[0]

        def xi(x):
            d = np.asarray(x, dtype=float).reshape(dim) - c
            return float(d @ A @ d - shift)

        def grad(x):
            d = np.asarray(x, dtype=float).reshape(dim) - c
            return 2.0 * A @ d

        def hess(x):
            return 2.0 * A

        # diameter of {d^T A d <= s}: 2 sqrt(s / lambda_min)
        lam = np.linalg.eigvalsh(A)
        diam = 2.0 * math.sqrt(shift / lam.min())
        return cls(
            kind=kind,
            dim=dim,
            level_set=xi,
            gradient=grad,
            hessian=hess,
            convexity_constant=float(2.0 * lam.min()),
            diameter=diam,
            quad_matrix=A,
            quad_center=c,
            quad_shift=float(shift),
            params=params,
        )

    @classmethod
    def slab(cls, half_width: float) -> "Domain":
        """1-D slab (-L, L) realised as xi(x) = x^2 - L^2."""
        L = float(half_width)
        if L <= 0:
            raise ValueError("slab half-width must be positive")
        return cls._quadratic("slab", np.eye(1), np.zeros(1), L * L, {"half_width": L})

    @classmethod
    def ball(cls, radius: float = 1.0, dim: int = 3, center=None) -> "Domain":
        R = float(radius)
        if R <= 0:
            raise ValueError("ball radius must be positive")
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
        return cls._quadratic("ball", np.eye(dim), c, R * R, {"radius": R})

    @classmethod
    def ellipsoid(cls, semi_axes, center=None) -> "Domain":
        a = np.asarray(semi_axes, dtype=float)
        if np.any(a <= 0):
            raise ValueError("semi-axes must be positive")
        c = np.zeros(a.size) if center is None else np.asarray(center, dtype=float)
        return cls._quadratic("ellipsoid", np.diag(1.0 / a**2), c, 1.0, {"semi_axes": a.tolist()})

    @classmethod
    def from_level_set(cls, dim, xi, grad, hess, convexity_constant, diameter) -> "Domain":
        return cls(
            kind="generic",
            dim=int(dim),
            level_set=xi,
            gradient=lambda x: np.asarray(grad(x), dtype=float).reshape(dim),
            hessian=lambda x: np.asarray(hess(x), dtype=float).reshape(dim, dim),
            convexity_constant=float(convexity_constant),
            diameter=float(diameter),
        )

    @classmethod
    def from_config(cls, spec: dict) -> "Domain":
        kind = spec.get("kind", "slab")
        if kind == "slab":
            return cls.slab(spec.get("half_width", 0.5))
        if kind == "ball":
            return cls.ball(spec.get("radius", 1.0), int(spec.get("dim", 3)))
        if kind == "ellipsoid":
            return cls.ellipsoid(spec["semi_axes"])
        raise ValueError(f"unknown domain kind {kind!r}")

    # ----------------------------------------------------------------- helpers
    def point(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(self.dim)

    def spatial(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float).reshape(3)[: self.dim]

    def pad(self, y) -> np.ndarray:
        out = np.zeros(3)
        out[: self.dim] = y
        return out

    def is_quadratic(self) -> bool:
        return self.quad_matrix is not None

    def on_boundary(self, x) -> bool:
        return abs(self.level_set(self.point(x))) <= TOL_BOUNDARY

    def contains(self, x, tol: float = TOL_BOUNDARY) -> bool:
        return self.level_set(self.point(x)) <= tol

    def project_to_boundary(self, x) -> np.ndarray:
        """One Newton step along the gradient onto {xi = 0}."""
        x = self.point(x)
        g = self.gradient(x)
        gg = float(g @ g)
        if gg < _GRAD_FLOOR**2:
            return x
        return x - self.level_set(x) * g / gg

    # -------------------------------------------------------------- operations
    def outward_normal(self, x) -> np.ndarray:
        x = self.point(x)
        if abs(self.level_set(x)) > TOL_BOUNDARY:
            raise NotOnBoundary(f"|xi(x)| = {abs(self.level_set(x)):.3e} > {TOL_BOUNDARY}")
        g = self.gradient(x)
        ng = float(np.linalg.norm(g))
        if ng < _GRAD_FLOOR:
            raise DegenerateGradient(f"|grad xi| = {ng:.3e}")
        return self.pad(g / ng)

    def specular_reflect(self, x, v) -> np.ndarray:
        n = self.outward_normal(x)
        v = np.asarray(v, dtype=float).reshape(3)
        return v - 2.0 * (v @ n) * n

    def backward_exit_time(self, x, v, raise_on_zero: bool = False):
        """Return ``(t_b, x_b)`` for the backward ray ``x - s v``.

        A velocity with no active spatial component never reaches the wall;
        ``(inf, None)`` is returned unless ``raise_on_zero`` is set.
        """
        x = self.point(x)
        vs = self.spatial(v)
        if not np.any(vs):
            if raise_on_zero:
                raise ZeroSpatialVelocity("velocity has no spatial component")
            return math.inf, None
        if self.is_quadratic():
            tb = _quadratic_exit(self.quad_matrix, x - self.quad_center, vs, self.quad_shift)
        else:
            tb = self._bisection_exit(x, vs)
        xb = self.project_to_boundary(x - tb * vs)
        return tb, xb

    def _bisection_exit(self, x, vs):
        h = 1e-3 * self.diameter / float(np.linalg.norm(vs))
        max_steps = int(4.0 / 1e-3) + 1
        s_lo = 0.0
        for k in range(1, max_steps + 1):
            s_hi = k * h
            if self.level_set(x - s_hi * vs) > 0.0:
                break
            s_lo = s_hi
        else:
            raise RootNotFound("no sign change of xi along the backward ray")
        for _ in range(_BISECTION_ITERS):
            mid = 0.5 * (s_lo + s_hi)
            if self.level_set(x - mid * vs) > 0.0:
                s_hi = mid
            else:
                s_lo = mid
            if s_hi - s_lo <= 4e-16 * max(1.0, s_hi):
                break
        return s_lo

    def kinetic_distance(self, x, v) -> float:
        x = self.point(x)
        vs = self.spatial(v)
        xi = self.level_set(x)
        g = self.gradient(x)
        H = self.hessian(x)
        return float(xi * xi + (vs @ g) ** 2 - 2.0 * (vs @ H @ vs) * xi)

    def near_grazing(self, x, v, eps: float) -> bool:
        if eps <= 0:
            raise ValueError("eps must be positive")
        n = self.outward_normal(x)
        v = np.asarray(v, dtype=float).reshape(3)
        speed = float(np.linalg.norm(v))
        return bool(abs(n @ v) <= eps or speed >= 1.0 / eps or speed <= eps)

    # ------------------------------------------------------ vectorised variants
    def exit_times(self, X, V):
        """Vectorised ``backward_exit_time`` for quadratic domains.

        X has shape (m, dim), V shape (m, 3).  Zero spatial velocities give inf.
        """
        if not self.is_quadratic():
            out_t = np.empty(len(X))
            out_x = np.empty((len(X), self.dim))
            for k in range(len(X)):
                t, xb = self.backward_exit_time(X[k], V[k])
                out_t[k] = t
                out_x[k] = xb if xb is not None else np.nan
            return out_t, out_x
        A, c, s = self.quad_matrix, self.quad_center, self.quad_shift
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        Vs = np.asarray(V, dtype=float).reshape(-1, 3)[:, : self.dim]
        D = X - c
        AV = Vs @ A
        a = np.einsum("ij,ij->i", AV, Vs)
        b = np.einsum("ij,ij->i", D, AV)
        c0 = np.minimum(np.einsum("ij,jk,ik->i", D, A, D) - s, 0.0)
        disc = np.sqrt(np.maximum(b * b - a * c0, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            tb = np.where(b >= 0.0, (b + disc) / a, c0 / (b - disc))
        tb = np.where(a > 0.0, np.maximum(tb, 0.0), np.inf)
        XB = X - np.where(np.isfinite(tb), tb, 0.0)[:, None] * Vs
        # Newton projection onto xi = 0
        G = 2.0 * (XB - c) @ A
        gg = np.einsum("ij,ij->i", G, G)
        xi = np.einsum("ij,jk,ik->i", XB - c, A, XB - c) - s
        XB = XB - (xi / np.where(gg > 0, gg, 1.0))[:, None] * G
        return tb, XB

    def normals(self, XB) -> np.ndarray:
        """Vectorised outward normals (padded to 3) at boundary points."""
        XB = np.asarray(XB, dtype=float).reshape(-1, self.dim)
        if self.is_quadratic():
            G = 2.0 * (XB - self.quad_center) @ self.quad_matrix
        else:
            G = np.array([self.gradient(x) for x in XB])
        G = G / np.linalg.norm(G, axis=1, keepdims=True)
        out = np.zeros((len(XB), 3))
        out[:, : self.dim] = G
        return out

    # ------------------------------------------------------------- diagnostics
    def check_convexity(self, n_samples: int = 1000, seed: int = 0) -> float:
        """Smallest sampled Rayleigh quotient of the Hessian over the domain box."""
        rng = np.random.default_rng(seed)
        worst = math.inf
        r = 0.5 * self.diameter
        c = self.quad_center if self.quad_center is not None else np.zeros(self.dim)
        for _ in range(n_samples):
            x = c + rng.uniform(-r, r, self.dim)
            z = rng.normal(size=self.dim)
            worst = min(worst, float(z @ self.hessian(x) @ z / (z @ z)))
        return worst


def _quadratic_exit(A, d, vs, shift):
    a = float(vs @ A @ vs)
    b = float(d @ A @ vs)
    c0 = min(float(d @ A @ d) - shift, 0.0)
    disc = math.sqrt(max(b * b - a * c0, 0.0))
    if b >= 0.0:
        t = (b + disc) / a
    else:
        t = c0 / (b - disc)
    return max(t, 0.0)


# --------------------------------------------------------------------------
# Function-style API
# --------------------------------------------------------------------------
def outward_normal(d: Domain, x) -> np.ndarray:
    return d.outward_normal(x)


def specular_reflect(d: Domain, x, v) -> np.ndarray:
    return d.specular_reflect(x, v)


def backward_exit_time(d: Domain, x, v):
    return d.backward_exit_time(x, v)


def kinetic_distance(d: Domain, x, v) -> float:
    return d.kinetic_distance(x, v)


def near_grazing_indicator(d: Domain, x, v, eps: float) -> bool:
    return d.near_grazing(x, v, eps)


def kinetic_distance_decay_rate(d: Domain, x, v, n_points: int = 400) -> float:
    """Measured C in  d/ds log alpha >= -C (|v| + 1)  along the chord through (x, v).

    The chord is traversed forward in time from its entry point to its exit
    point; endpoints where alpha vanishes are excluded.
    """
    v = np.asarray(v, dtype=float)
    tb, xb = d.backward_exit_time(x, v)
    tf, xf = d.backward_exit_time(x, -v)
    if not (np.isfinite(tb) and np.isfinite(tf)):
        return 0.0
    length = tb + tf
    s = np.linspace(0.0, length, n_points + 2)[1:-1]
    vs = d.spatial(v)
    alpha = np.array([d.kinetic_distance(xb + si * vs, v) for si in s])
    la = np.log(alpha)
    slope = np.diff(la) / np.diff(s)
    return float(max(0.0, np.max(-slope)) / (np.linalg.norm(v) + 1.0))
