"""Linearised collision operator L = nu - K and the bilinear term Gamma on a
velocity grid.

Assembly is the strong form: for each node v, sum over u-nodes and a rotated
angular rule of the gain and loss integrands.
Post-collision values come from an interpolation that is exact for
quadratics (trilinear plus a per-axis curvature term), applied to f / sqrt(mu)
(``ratio``), which keeps the collision invariants nearly exact, or to f itself
with the Maxwellian factor evaluated off-grid (``direct``), which stays bounded
when cells are wide at large speeds.  ``auto`` picks ``ratio`` while
h * V_max <= 5.

The raw matrix is then

* projected so that the five collision invariants span its null space exactly
  and its range is orthogonal to them, and
* symmetrised in the grid inner product.

The reported ``K`` is ``diag(nu) - L`` with ``nu`` the semi-analytic frequency.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from ..errors import NonUnitOmega
from ..weights import static_weight
from . import kernels
from .cells import offset_table
from .frequency import angular_factor, collision_frequency
from .grid import VelocityGrid

log = logging.getLogger(__name__)

CACHE_VERSION = 3
INTERPOLATIONS = ("auto", "ratio", "direct")
RATIO_LIMIT = 5.0  # largest h * V_max for which f / sqrt(mu) interpolation stays stable


def post_collision(u, v, omega):
    """Return (u', v') for the exchange along the unit direction ``omega``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise NonUnitOmega(f"|omega| = {np.linalg.norm(omega)!r}")
    p = np.dot(u - v, omega)
    return u - p * omega, v + p * omega


@dataclass(frozen=True)
class AngularRule:
    """Hemisphere product rule in a frame aligned with the relative velocity.

    ``n_omega = 2 p^2`` with p even: p/2 Gauss-Legendre nodes in cos(theta) on
    (0, 1) and 2p azimuths, weights doubled to account for omega -> -omega,
    which gives the same post-collision pair.  The angular kernel |cos theta|
    is folded into ``weights``.
    """

    n_omega: int
    cos_t: np.ndarray
    sin_t: np.ndarray
    cos_p: np.ndarray
    sin_p: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, n_omega: int = 72, b0_kind: str = "abs_cos") -> "AngularRule":
        angular_factor(b0_kind)  # validates the kind
        p = math.isqrt(n_omega // 2)
        if n_omega < 32 or 2 * p * p != n_omega or p % 2:
            raise ValueError(f"n_omega={n_omega} must be 2 p^2 with p even and n_omega >= 32")
        x, w = np.polynomial.legendre.leggauss(p // 2)
        ct = 0.5 * (x + 1.0)
        wt = 0.5 * w
        phi = (np.arange(2 * p) + 0.5) * (2.0 * math.pi / (2 * p))
        CT, PH = np.meshgrid(ct, phi, indexing="ij")
        WT = np.broadcast_to(wt[:, None], CT.shape)
        weights = 2.0 * WT * (2.0 * math.pi / (2 * p)) * CT
        return cls(
            n_omega,
            CT.ravel().copy(),
            np.sqrt(1.0 - CT**2).ravel().copy(),
            np.cos(PH).ravel().copy(),
            np.sin(PH).ravel().copy(),
            weights.ravel().copy(),
        )

    def args(self):
        return self.cos_t, self.sin_t, self.cos_p, self.sin_p, self.weights


class MacroProjection:
    """Grid-orthogonal projection onto span{1, v, (|v|^2-3)/2} sqrt(mu)."""

    def __init__(self, grid: VelocityGrid):
        v = grid.nodes
        sm = grid.sqrt_mu
        self.basis = np.column_stack([sm, v[:, 0] * sm, v[:, 1] * sm, v[:, 2] * sm,
                                      0.5 * (np.sum(v * v, axis=1) - 3.0) * sm])
        self.weights = grid.weights
        gram = self.basis.T @ (self.weights[:, None] * self.basis)
        self.gram_inverse = np.linalg.inv(gram)
        # P f = basis @ coeff_map @ f
        self.coeff_map = self.gram_inverse @ (self.basis.T * self.weights[None, :])

    def coefficients(self, f):
        """Coordinates (a, b1, b2, b3, c) of the projection; works on (..., size)."""
        return np.asarray(f) @ self.coeff_map.T

    def project(self, f):
        return self.coefficients(f) @ self.basis.T

    def complement(self, f):
        return np.asarray(f) - self.project(f)


def macro_project(mp: MacroProjection, f):
    return mp.project(f)


def resolve_interpolation(grid: VelocityGrid, interpolation: str = "auto") -> str:
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
    if interpolation == "auto":
        return "ratio" if grid.spacing * grid.half_width <= RATIO_LIMIT else "direct"
    return interpolation


def _raw_assembly(grid: VelocityGrid, table, rule: AngularRule, backend=None, interpolation: str = "ratio"):
    size = grid.size
    K2 = np.zeros((size, size))
    K1 = np.zeros((size, size))
    loss = np.zeros(size)
    kernels.get(backend).assemble(grid.n, grid.half_width, grid.spacing, grid.sqrt_mu, grid.weights,
                                  np.ascontiguousarray(table), *rule.args(), K2, K1, loss,
                                  int(interpolation == "direct"))
    return K2, K1, loss


def _cache_key(varrho, n, vmax, n_omega, b0_kind, interpolation) -> str:
    payload = json.dumps({"v": CACHE_VERSION, "varrho": varrho, "n": n, "vmax": vmax,
                          "n_omega": n_omega, "b0": b0_kind, "interp": interpolation}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class CollisionOperator:
    grid: VelocityGrid
    varrho: float
    rule: AngularRule
    nu: np.ndarray
    nu_loss: np.ndarray
    L: np.ndarray
    b0_kind: str = "abs_cos"
    raw_null_residuals: np.ndarray = field(default_factory=lambda: np.zeros(5))
    backend: str | None = None
    interpolation: str = "ratio"
    _split: dict = field(default_factory=dict, repr=False)

    @cached_property
    def macro(self) -> MacroProjection:
        return MacroProjection(self.grid)

    @cached_property
    def table(self) -> np.ndarray:
        return offset_table(self.grid.n, self.grid.spacing, self.varrho, "full")

    @property
    def K(self) -> np.ndarray:
        K = -self.L
        K[np.diag_indices_from(K)] += self.nu
        return K

    # ------------------------------------------------------------ propagator
    @cached_property
    def spectrum(self):
        """Eigenpairs (lam, Q) of W^{1/2} L W^{-1/2}; L is symmetric in the grid inner product."""
        sw = np.sqrt(self.grid.weights)
        S = self.L * sw[:, None] / sw[None, :]
        S = 0.5 * (S + S.T)
        lam, Q = np.linalg.eigh(S)
        if lam[0] < -1e-8 * max(lam[-1], 1.0):
            log.warning("collision operator has a negative eigenvalue %.3e; the grid is too coarse", lam[0])
        return lam, Q

    def propagator(self, dt: float) -> np.ndarray:
        """exp(-dt L) as a dense matrix."""
        lam, Q = self.spectrum
        sw = np.sqrt(self.grid.weights)
        E = (Q * np.exp(-dt * np.maximum(lam, 0.0))[None, :]) @ Q.T
        E *= (1.0 / sw)[:, None]
        E *= sw[None, :]
        return E

    # -------------------------------------------------------------- kernel split
    def split(self, eps_chi: float):
        """Sparse (K2, K1) parts of K^{1-chi} for cutoff ``eps_chi``."""
        if eps_chi not in self._split:
            table = offset_table(self.grid.n, self.grid.spacing, self.varrho, "one_minus_chi", eps_chi)
            K2, K1, _ = _raw_assembly(self.grid, table, self.rule, self.backend, self.interpolation)
            self._split[eps_chi] = (sparse.csr_matrix(K2), sparse.csr_matrix(K1))
        return self._split[eps_chi]

    def K_one_minus_chi(self, eps_chi: float):
        K2, K1 = self.split(eps_chi)
        return (K2 - K1).toarray()

    def K_chi(self, eps_chi: float):
        return self.K - self.K_one_minus_chi(eps_chi)

    def weighted_split_norm(self, eps_chi: float, q: float = 0.5, theta: float = 2.0) -> float:
        """max_i sum_j w_i (|K2| + |K1|)_ij / w_j for the 1 - chi part."""
        K2, K1 = self.split(eps_chi)
        w = static_weight(q, theta, self.grid.nodes)
        A = (abs(K2) + abs(K1)).tocoo()
        rows = np.bincount(A.row, A.data * w[A.row] / w[A.col], minlength=self.grid.size)
        return float(rows.max())

    # ---------------------------------------------------------------- actions
    def apply_L(self, f):
        return np.asarray(f) @ self.L.T

    def quadratic_form(self, f, g=None):
        g = f if g is None else g
        return self.grid.inner(self.apply_L(f), g)

    def nu_norm_sq(self, f) -> float:
        return self.grid.inner(self.nu * f, f)

    def gamma(self, f, g, project: bool = False):
        """Bilinear collision term; ``f`` and ``g`` may be (size,) or (m, size)."""
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        single = f.ndim == 1
        direct = self.interpolation == "direct"
        scale = 1.0 if direct else self.grid.sqrt_mu
        F = np.ascontiguousarray(np.atleast_2d(f) / scale)
        G = np.ascontiguousarray(np.atleast_2d(g) / scale)
        out = np.zeros_like(F)
        kernels.get(self.backend).gamma_batch(self.grid.n, self.grid.half_width, self.grid.spacing,
                                              self.grid.sqrt_mu, self.grid.weights, self.table,
                                              *self.rule.args(), F, G, out, int(direct))
        if project:
            out = self.macro.complement(out)
        return out[0] if single else out

    def coercivity_ratio(self, f) -> float:
        """(Lf, f) / ||(I-P) f||_nu^2."""
        micro = self.macro.complement(f)
        return self.quadratic_form(f) / self.nu_norm_sq(micro)

    def export_csv(self, path, rows=()):
        """Write nu per node and optional K row slices as CSV."""
        with open(path, "w") as fh:
            fh.write("index,v1,v2,v3,nu" + "".join(f",K_row{r}" for r in rows) + "\n")
            K = self.K if rows else None
            for i, v in enumerate(self.grid.nodes):
                extra = "".join(f",{K[r, i]:.17g}" for r in rows)
                fh.write(f"{i},{v[0]:.17g},{v[1]:.17g},{v[2]:.17g},{self.nu[i]:.17g}{extra}\n")


def _condition(L_raw: np.ndarray, mp: MacroProjection) -> np.ndarray:
    """In-place (I-P) L (I-P) followed by symmetrisation in the weighted inner product."""
    B, C = mp.basis, mp.coeff_map
    LB = L_raw @ B
    CL = C @ L_raw
    CLB = C @ LB
    L_raw -= B @ CL
    L_raw -= LB @ C
    L_raw += B @ (CLB @ C)
    w = mp.weights
    L_raw *= w[:, None]
    L_raw += L_raw.T.copy()
    L_raw *= 0.5
    L_raw /= w[:, None]
    return L_raw


def assemble_operator(grid: VelocityGrid | None = None, varrho: float = -1.0, b0_kind: str = "abs_cos",
                      n_omega: int = 72, backend: str | None = None, cache_dir=None,
                      interpolation: str = "auto") -> CollisionOperator:
    grid = grid or VelocityGrid()
    if not (-3.0 < varrho < 0.0):
        raise ValueError("varrho must lie in (-3, 0)")
    interpolation = resolve_interpolation(grid, interpolation)
    rule = AngularRule.build(n_omega, b0_kind)
    nu = collision_frequency(grid, varrho, b0_kind)
    cache_file = None
    if cache_dir is not None:
        key = _cache_key(varrho, grid.n, grid.half_width, n_omega, b0_kind, interpolation)
        cache_file = Path(cache_dir) / f"collision_{key}.npz"
        if cache_file.exists():
            with np.load(cache_file) as data:
                if int(data["version"]) == CACHE_VERSION:
                    log.info("loaded collision operator from %s", cache_file)
                    return CollisionOperator(grid, varrho, rule, nu, data["nu_loss"], data["L"], b0_kind,
                                             data["raw_null_residuals"], backend, interpolation)
    t0 = time.perf_counter()
    table = offset_table(grid.n, grid.spacing, varrho, "full")
    K2, K1, loss = _raw_assembly(grid, table, rule, backend, interpolation)
    # raw strong-form operator, reused in place
    K2 -= K1
    del K1
    K2 *= -1.0
    K2[np.diag_indices_from(K2)] += loss
    L = K2
    mp = MacroProjection(grid)
    raw = np.array([np.linalg.norm(L @ b) / np.linalg.norm(b) for b in mp.basis.T])
    L = _condition(L, mp)
    log.info("assembled %d x %d collision operator in %.1f s", grid.size, grid.size, time.perf_counter() - t0)
    op = CollisionOperator(grid, varrho, rule, nu, loss, L, b0_kind, raw, backend, interpolation)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        tmp = cache_file.with_suffix(".tmp.npz")
        np.savez(tmp, version=CACHE_VERSION, L=L, nu_loss=loss, raw_null_residuals=raw)
        tmp.replace(cache_file)
    return op


def collision_frequency_vector(grid: VelocityGrid, varrho: float, b0_kind: str = "abs_cos"):
    return collision_frequency(grid, varrho, b0_kind)


def apply_L(op: CollisionOperator, f):
    return op.apply_L(f)


def gamma(op: CollisionOperator, f, g):
    return op.gamma(f, g)
