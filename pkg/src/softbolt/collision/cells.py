"""Cutoff function and cell integrals of the singular factor |w|^varrho.

The assembly works with a table indexed by the integer offset o = (u - v)/h.
Each entry is the volume integral of |w|^varrho * g(|w|) over the cube of side
h centred at o h, where g is 1, chi or 1 - chi.  Cells close to the origin are
integrated accurately; distant cells use the midpoint value h^3 |o h|^varrho.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate

NEAR = 2  # offsets with max |o_d| <= NEAR are integrated cell by cell


def chi(s, eps: float):
    """Cubic smoothstep: 0 for s <= eps, 1 for s >= 2 eps."""
    x = np.clip((np.asarray(s, dtype=float) - eps) / eps, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _profile(mode: str, eps: float | None):
    if mode == "full":
        return lambda r: np.ones_like(r)
    if mode == "chi":
        return lambda r: chi(r, eps)
    if mode == "one_minus_chi":
        return lambda r: 1.0 - chi(r, eps)
    raise ValueError(f"unknown mode {mode!r}")


def radial_moment(R, varrho: float, mode: str, eps: float | None = None):
    """G(R) = int_0^R r^(varrho+2) g(r) dr in closed form."""
    R = np.asarray(R, dtype=float)
    p = varrho + 2.0
    full = R ** (p + 1.0) / (p + 1.0)
    if mode == "full":
        return full
    # smoothstep as a polynomial in r on [eps, 2 eps]
    s_of_r = np.array([-1.0, 1.0 / eps])
    poly = P.polyadd(3.0 * P.polypow(s_of_r, 2), -2.0 * P.polypow(s_of_r, 3))

    def ramp(a, b):
        return sum(c * (b ** (p + k + 1.0) - a ** (p + k + 1.0)) / (p + k + 1.0) for k, c in enumerate(poly))

    lo = np.clip(R, eps, 2 * eps)
    g_chi = ramp(eps, lo) + np.where(R > 2 * eps, (R ** (p + 1.0) - (2 * eps) ** (p + 1.0)) / (p + 1.0), 0.0)
    if mode == "chi":
        return g_chi
    return full - g_chi


def self_cell_integral(h: float, varrho: float, mode: str = "full", eps: float | None = None) -> float:
    """Integral of |w|^varrho g(|w|) over the cube [-h/2, h/2]^3.

    Split into six pyramids with apex at the origin; on the face x = a the ray
    parametrisation reduces the inner radial integral to G(|p|)/|p|^3.  The face
    integral uses the eightfold symmetry of the square.
    """
    a = 0.5 * h

    def integrand(z, y):
        rho = math.sqrt(a * a + y * y + z * z)
        return float(radial_moment(rho, varrho, mode, eps)) / rho**3

    breaks = [] if eps is None else [b for b in (eps, 2 * eps) if b > a]
    if not breaks:
        val, _ = integrate.dblquad(integrand, 0.0, a, lambda y: 0.0, lambda y: y, epsabs=1e-13, epsrel=1e-11)
        return 48.0 * a * val

    # kinks of the cutoff cross the face along circles |p| = b; pass them as break points
    def inner(y):
        pts = [math.sqrt(max(b * b - a * a - y * y, 0.0)) for b in breaks]
        pts = [q for q in pts if 0.0 < q < y]
        return integrate.quad(integrand, 0.0, y, args=(y,), points=pts or None,
                              epsabs=1e-13, epsrel=1e-11, limit=200)[0]

    ypts = [math.sqrt(max(b * b - a * a, 0.0)) for b in breaks]
    ypts += [math.sqrt(max((b * b - a * a) / 2.0, 0.0)) for b in breaks]
    ypts = [q for q in ypts if 0.0 < q < a]
    val = integrate.quad(inner, 0.0, a, points=ypts or None, epsabs=1e-13, epsrel=1e-11, limit=200)[0]
    return 48.0 * a * val


def _gauss_cell(center, h, varrho, g, sub: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-0.5 * h, 0.5 * h, sub + 1)
    pts = (0.5 * (edges[1:, None] - edges[:-1, None]) * x[None, :] + 0.5 * (edges[1:, None] + edges[:-1, None])).ravel()
    wts = np.tile(0.5 * (edges[1] - edges[0]) * w, sub)
    X = center[0] + pts[:, None, None]
    Y = center[1] + pts[None, :, None]
    Z = center[2] + pts[None, None, :]
    r = np.sqrt(X * X + Y * Y + Z * Z)
    W = wts[:, None, None] * wts[None, :, None] * wts[None, None, :]
    return float(np.sum(W * r**varrho * g(r)))


def offset_table(n: int, h: float, varrho: float, mode: str = "full", eps: float | None = None,
                 near: int = NEAR, sub: int = 6, order: int = 4) -> np.ndarray:
    """Cell-integral table of shape (2n-1,)^3 indexed by offset + (n-1).

    For ``mode='one_minus_chi'`` the table vanishes outside the near block,
    which requires the cutoff ball of radius 2 eps to fit inside it.
    """
    if mode != "full" and eps is None:
        raise ValueError("eps required for split modes")
    if mode == "one_minus_chi" and 2.0 * eps > (near + 0.5) * h:
        raise ValueError(f"cutoff radius 2*eps={2 * eps} exceeds the near block ({(near + 0.5) * h})")
    m = 2 * n - 1
    off = np.arange(m) - (n - 1)
    O = np.stack(np.meshgrid(off, off, off, indexing="ij"), axis=-1)
    dist = np.linalg.norm(O, axis=-1) * h
    table = np.zeros((m, m, m))
    if mode != "one_minus_chi":
        # the centre entry is inf here and is replaced by the self-cell integral below
        with np.errstate(divide="ignore", invalid="ignore"):
            table = h**3 * dist**varrho
            if mode == "chi":
                table = table * chi(dist, eps)
    g = _profile(mode, eps)
    c = n - 1
    near = min(near, n - 1)
    for i in range(-near, near + 1):
        for j in range(-near, near + 1):
            for k in range(-near, near + 1):
                if i == j == k == 0:
                    val = self_cell_integral(h, varrho, mode, eps)
                else:
                    val = _gauss_cell(np.array([i, j, k], float) * h, h, varrho, g, sub, order)
                table[c + i, c + j, c + k] = val
    return table
