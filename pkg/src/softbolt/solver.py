"""Semi-Lagrangian solver for the linearised (optionally weakly nonlinear)
Boltzmann equation in a 1-D slab with 3-D velocities.

One step is transport over dt followed by collisions over dt (Lie splitting).

Transport: cell-centred x nodes, characteristic feet located exactly (v1 dt is
a fixed shift per velocity) and values interpolated linearly.

* Specular walls: for each pair (v, Rv) the field is unfolded onto a periodic
  line of 2 N_x cells, on which transport is a plain shift.  Mass, energy and
  every velocity moment are conserved exactly.
* Diffuse walls: the mass leaving through a wall during the step defines the
  outgoing trace; the inflow is the diffuse projection of that trace, fed into
  ghost cells.  Inflow and outflow balance exactly at each step.

Collisions: ``linear`` applies exp(-dt L) exactly via the symmetric
eigendecomposition of L; ``exponential_euler`` is the explicit variant
f <- e^{-nu dt}(f + dt K f); ``damping`` keeps only e^{-nu dt}; ``none`` skips
the collision step.  ``nonlinear=True`` adds dt (I-P) Gamma(f, f).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .collision.grid import VelocityGrid
from .collision.operator import CollisionOperator, MacroProjection
from .errors import Diverged, WrongKind
from .weights import WeightParams, weight

log = logging.getLogger(__name__)

COLLISION_MODES = ("linear", "exponential_euler", "damping", "none")


@dataclass
class DistributionField:
    x: np.ndarray  # (N_x,) cell centres
    values: np.ndarray  # (N_x, N_v^3)
    time: float = 0.0

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0]) if len(self.x) > 1 else 1.0

    def copy(self) -> "DistributionField":
        return DistributionField(self.x.copy(), self.values.copy(), self.time)


def slab_nodes(half_width: float, nx: int) -> np.ndarray:
    dx = 2.0 * half_width / nx
    return -half_width + (np.arange(nx) + 0.5) * dx


@dataclass
class BoundaryCondition:
    kind: str
    grid: VelocityGrid
    normalizer: float = 1.0

    @classmethod
    def build(cls, kind: str, grid: VelocityGrid) -> "BoundaryCondition":
        if kind not in ("diffuse", "specular"):
            raise ValueError(f"unknown boundary kind {kind!r}")
        # both slab walls see the same half-space by symmetry of the grid
        return cls(kind, grid, 1.0 / grid.half_space_flux(0, 1))

    def flux_weights(self, normal) -> np.ndarray:
        """Per-node weights w_quad |n.v| mu^{1/2} restricted to n.v > 0 (outgoing)."""
        nv = self.grid.nodes @ _as_normal(normal)
        return np.where(nv > 0, self.grid.weights * nv * self.grid.sqrt_mu, 0.0)


def _as_normal(n) -> np.ndarray:
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if n.size == 1:
        return np.array([n[0], 0.0, 0.0])
    return n.reshape(3)


def apply_P_gamma(bc: BoundaryCondition, grid: VelocityGrid, boundary_values, n) -> np.ndarray:
    """Replace incoming values (n.v < 0) by the diffuse projection of the outgoing ones."""
    if bc.kind != "diffuse":
        raise WrongKind("diffuse projection requested on a specular boundary")
    f = np.asarray(boundary_values, dtype=float)
    nv = grid.nodes @ _as_normal(n)
    flux = np.sum(f * bc.flux_weights(n), axis=-1, keepdims=True)
    incoming = nv < 0
    out = f.copy()
    out[..., incoming] = (grid.sqrt_mu[incoming] * bc.normalizer) * flux
    return out


class Transport:
    """Exact-shift linear-interpolation transport on the slab."""

    def __init__(self, grid: VelocityGrid, x: np.ndarray, half_width: float, bc: BoundaryCondition, dt: float):
        self.grid = grid
        self.nx = len(x)
        self.dx = 2.0 * half_width / self.nx
        self.dt = dt
        self.bc = bc
        n = grid.n
        idx = np.arange(grid.size).reshape(n, n, n)
        self.blocks = [idx[a].reshape(-1) for a in range(n)]
        self.shifts = grid.axis * dt / self.dx  # signed, in cells
        if bc.kind == "diffuse" and np.max(np.abs(self.shifts)) > self.nx:
            raise ValueError("diffuse transport needs |v1| dt <= slab width")
        self.last_exit = None  # (left, right) exit traces of the last step

    @staticmethod
    def _shift(values, s, ghost=None):
        """Move a (cells, m) array forward by s >= 0 cells with linear interpolation.

        ``ghost`` (m,) fills the region upstream of the first cell; without it the
        array is treated as periodic.
        """
        m_int = int(math.floor(s))
        theta = s - m_int
        if ghost is None:
            a = np.roll(values, m_int, axis=0)
            b = np.roll(values, m_int + 1, axis=0)
            return (1.0 - theta) * a + theta * b
        nc = values.shape[0]
        pad = m_int + 2
        ext = np.concatenate([np.broadcast_to(ghost, (pad, values.shape[1])), values], axis=0)
        i = np.arange(nc) + pad
        return (1.0 - theta) * ext[i - m_int] + theta * ext[i - m_int - 1]

    @staticmethod
    def _exit(values, s):
        """Amount (in cell units) pushed past the downstream wall by a shift s >= 0."""
        nc = values.shape[0]
        m_int = int(math.floor(s))
        theta = s - m_int
        j = np.arange(nc)
        wgt = (1.0 - theta) * (j + m_int >= nc) + theta * (j + m_int + 1 >= nc)
        return wgt @ values

    def __call__(self, F: np.ndarray) -> np.ndarray:
        if self.bc.kind == "specular":
            return self._specular(F)
        return self._diffuse(F)

    def _specular(self, F):
        out = np.empty_like(F)
        n = self.grid.n
        for a in range(n // 2, n):
            blk, rblk = self.blocks[a], self.blocks[n - 1 - a]
            g = np.concatenate([F[:, blk], F[::-1, rblk]], axis=0)
            g = self._shift(g, self.shifts[a])
            out[:, blk] = g[: self.nx]
            out[:, rblk] = g[self.nx:][::-1]
        self.last_exit = None
        return out

    def exit_traces(self, F):
        """Outgoing traces at the left (v1<0) and right (v1>0) walls for this step.

        Trace value = mass pushed through the wall / (|v1| dt), so that
        sum w sqrt(mu) |v1| trace dt equals the mass that left.
        """
        n = self.grid.n
        left = np.zeros(self.grid.size)
        right = np.zeros(self.grid.size)
        for a in range(n):
            s = self.shifts[a]
            blk = self.blocks[a]
            if s > 0:
                right[blk] = self._exit(F[:, blk], s) / s
            else:
                left[blk] = self._exit(F[::-1, blk], -s) / (-s)
        return left, right

    def _diffuse(self, F):
        left, right = self.exit_traces(F)
        inflow_left = apply_P_gamma(self.bc, self.grid, left, -1.0)
        inflow_right = apply_P_gamma(self.bc, self.grid, right, 1.0)
        out = np.empty_like(F)
        n = self.grid.n
        for a in range(n):
            s = self.shifts[a]
            blk = self.blocks[a]
            if s > 0:
                out[:, blk] = self._shift(F[:, blk], s, inflow_left[blk])
            else:
                out[:, blk] = self._shift(F[::-1, blk], -s, inflow_right[blk])[::-1]
        self.last_exit = (left, right, inflow_left, inflow_right)
        return out

    def boundary_fluxes(self):
        """(incoming, outgoing) mass fluxes of the last diffuse step, summed over both walls."""
        if self.last_exit is None:
            return 0.0, 0.0
        left, right, in_l, in_r = self.last_exit
        g = self.grid
        v1 = g.nodes[:, 0]
        a = g.weights * g.sqrt_mu * np.abs(v1)
        out = float(np.sum(a[v1 < 0] * left[v1 < 0]) + np.sum(a[v1 > 0] * right[v1 > 0]))
        inc = float(np.sum(a[v1 > 0] * in_l[v1 > 0]) + np.sum(a[v1 < 0] * in_r[v1 < 0]))
        return inc, out


class CollisionStep:
    def __init__(self, op: CollisionOperator | None, dt: float, mode: str = "linear",
                 nonlinear: bool = False, nu=None):
        if mode not in COLLISION_MODES:
            raise ValueError(f"unknown collision mode {mode!r}")
        if nonlinear and op is None:
            raise ValueError("nonlinear collisions need an assembled operator")
        self.op = op
        self.dt = dt
        self.mode = mode
        self.nonlinear = nonlinear
        self.matrix = None
        self.damp = None
        nu = op.nu if nu is None and op is not None else nu
        if mode == "linear":
            self.matrix = op.propagator(dt)
        elif mode == "exponential_euler":
            self.damp = np.exp(-nu * dt)
            self.K = op.K
        elif mode == "damping":
            self.damp = np.exp(-nu * dt)

    def __call__(self, F):
        src = None
        if self.nonlinear:
            src = self.dt * self.op.gamma(F, F, project=True)
        if self.mode == "linear":
            G = F if src is None else F + src
            return G @ self.matrix.T
        if self.mode == "exponential_euler":
            G = F + self.dt * (F @ self.K.T)
            if src is not None:
                G = G + src
            return self.damp * G
        if self.mode == "damping":
            return self.damp * (F if src is None else F + src)
        return F if src is None else F + src


class SlabSolver:
    def __init__(self, grid: VelocityGrid, half_width: float, nx: int, bc_kind: str, dt: float,
                 op: CollisionOperator | None = None, mode: str = "linear", nonlinear: bool = False,
                 nu=None, varrho: float = -1.0):
        if nu is None:
            if op is not None:
                nu = op.nu
            else:
                from .collision.frequency import collision_frequency

                nu = collision_frequency(grid, varrho)
        self.nu = nu
        self.grid = grid
        self.half_width = half_width
        self.x = slab_nodes(half_width, nx)
        self.dt = dt
        self.bc = BoundaryCondition.build(bc_kind, grid)
        self.transport = Transport(grid, self.x, half_width, self.bc, dt)
        self.collide = CollisionStep(op, dt, mode, nonlinear, nu)
        self.op = op
        self.grazing_aborts = 0  # v1 = 0 never occurs on an even grid

    def step(self, field: DistributionField) -> DistributionField:
        F = self.transport(field.values)
        F = self.collide(F)
        return DistributionField(field.x, F, field.time + self.dt)


def step(field: DistributionField, solver: SlabSolver) -> DistributionField:
    return solver.step(field)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------
class Diagnostics:
    def __init__(self, solver: SlabSolver, wparams: WeightParams, nu: np.ndarray, grazing_eps: float = 0.1):
        g = solver.grid
        self.solver = solver
        self.grid = g
        self.p = wparams
        self.nu = nu
        self.mp = MacroProjection(g)
        self.dx = 2.0 * solver.half_width / len(solver.x)
        v = g.nodes
        self.mass_w = g.weights * g.sqrt_mu
        self.energy_w = g.weights * g.sqrt_mu * np.sum(v * v, axis=1)
        self.mom2_w = g.weights * g.sqrt_mu * v[:, 1]
        speed = g.speeds
        self.grazing = (np.abs(v[:, 0]) <= grazing_eps) | (speed >= 1.0 / grazing_eps) | (speed <= grazing_eps)

    def boundary_norms(self, F):
        """|f|_{2,+} and |f|_{2,-} summed over both walls with measure |n.v| dv."""
        g = self.grid
        v1 = g.nodes[:, 0]
        a = g.weights * np.abs(v1)
        left, right = F[0], F[-1]
        plus = np.sum(a[v1 < 0] * left[v1 < 0] ** 2) + np.sum(a[v1 > 0] * right[v1 > 0] ** 2)
        minus = np.sum(a[v1 > 0] * left[v1 > 0] ** 2) + np.sum(a[v1 < 0] * right[v1 < 0] ** 2)
        graz = np.sum((a * self.grazing)[v1 < 0] * left[v1 < 0] ** 2) + np.sum((a * self.grazing)[v1 > 0] * right[v1 > 0] ** 2)
        return math.sqrt(plus), math.sqrt(minus), (graz / plus if plus > 0 else 0.0)

    def __call__(self, field: DistributionField) -> dict:
        F = field.values
        g = self.grid
        dx = self.dx
        l2 = math.sqrt(dx * float(np.sum(g.weights * F * F)))
        lnu = math.sqrt(dx * float(np.sum(g.weights * self.nu * F * F)))
        winf = float(np.max(np.abs(F * weight(self.p, field.time, g.nodes)))) if F.size else 0.0
        coeff = self.mp.coefficients(F)
        flux_in, flux_out = self.solver.transport.boundary_fluxes()
        bplus, bminus, share = self.boundary_norms(F)
        # positivity of mu + sqrt(mu) f is watched, not enforced
        negative = float(np.mean(g.sqrt_mu + F < 0.0)) if F.size else 0.0
        return {
            "t": round(field.time, 12),
            "l2": l2,
            "lnu": lnu,
            "winf": winf,
            "mass": dx * float(np.sum(F @ self.mass_w)),
            "energy": dx * float(np.sum(F @ self.energy_w)),
            "momentum2": dx * float(np.sum(F @ self.mom2_w)),
            "flux_in": flux_in,
            "flux_out": flux_out,
            "bnd_plus": bplus,
            "bnd_minus": bminus,
            "grazing_share": share,
            "negative_share": negative,
            "a_rms": math.sqrt(float(np.mean(coeff[:, 0] ** 2))),
            "b_rms": math.sqrt(float(np.mean(np.sum(coeff[:, 1:4] ** 2, axis=1)))),
            "c_rms": math.sqrt(float(np.mean(coeff[:, 4] ** 2))),
        }


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------
def initial_field(kind: str, grid: VelocityGrid, x: np.ndarray, half_width: float, amplitude: float = 1.0,
                  seed: int = 0, wparams: WeightParams | None = None, width: float = 0.1,
                  center: float = 0.0, remove: tuple = ()) -> np.ndarray:
    """Initial perturbation on (x, v).

    kinds: ``zero``, ``gaussian_pulse`` (pulse in x times sqrt(mu)), ``maxwellian``
    (sqrt(mu), constant in x), ``tail`` (cos(pi x / 2L) / w_{q,theta}, the
    slowest-decaying admissible profile), ``random`` (smooth random profile).
    ``remove`` lists conserved moments to subtract globally: any of
    'mass', 'energy', 'momentum'.
    """
    nx = len(x)
    if kind == "zero":
        F = np.zeros((nx, grid.size))
    elif kind == "gaussian_pulse":
        F = np.exp(-0.5 * ((x - center) / width) ** 2)[:, None] * grid.sqrt_mu[None, :]
    elif kind == "maxwellian":
        F = np.ones(nx)[:, None] * grid.sqrt_mu[None, :]
    elif kind == "tail":
        p = wparams or WeightParams()
        prof = np.cos(0.5 * np.pi * x / half_width)
        F = prof[:, None] * np.exp(-0.25 * p.q * grid.speeds ** p.theta)[None, :]
    elif kind == "random":
        rng = np.random.Generator(np.random.Philox(key=int(seed)))
        modes = rng.standard_normal((4, grid.size)) * grid.sqrt_mu
        prof = np.array([np.cos((k + 1) * np.pi * (x + half_width) / (2 * half_width)) for k in range(4)])
        F = prof.T @ modes
    else:
        raise ValueError(f"unknown initial kind {kind!r}")
    F = amplitude * F
    if remove:
        F = remove_conserved(F, grid, remove)
    return F


def remove_conserved(F, grid: VelocityGrid, which=("mass",)):
    """Subtract x-constant multiples of invariants so the listed global moments vanish."""
    sm = grid.sqrt_mu
    v = grid.nodes
    basis = {"mass": sm, "energy": 0.5 * (np.sum(v * v, axis=1) - 3.0) * sm,
             "momentum": None}
    vecs = []
    for name in which:
        if name == "momentum":
            vecs += [v[:, 1] * sm, v[:, 2] * sm]
        else:
            vecs.append(basis[name])
    if not vecs:
        return F
    B = np.column_stack(vecs)
    W = grid.weights
    mean = F.mean(axis=0)
    coeff = np.linalg.solve(B.T @ (W[:, None] * B), B.T @ (W * mean))
    return F - (B @ coeff)[None, :]


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------
@dataclass
class RunResult:
    records: list = field(default_factory=list)
    field: DistributionField | None = None


def run(solver: SlabSolver, F0: np.ndarray, n_steps: int, sample_every: int = 1,
        wparams: WeightParams | None = None, sink=None, diverge_factor: float = 1e6) -> RunResult:
    """Advance ``n_steps`` and record diagnostics every ``sample_every`` steps.

    ``sink`` is an optional callable receiving each record (e.g. an NDJSON writer).
    """
    diag = Diagnostics(solver, wparams or WeightParams(), solver.nu)
    field_ = DistributionField(solver.x, np.array(F0, dtype=float), 0.0)
    init_max = float(np.max(np.abs(F0))) if np.size(F0) else 0.0
    res = RunResult()

    def emit(rec):
        res.records.append(rec)
        if sink is not None:
            sink(rec)

    emit(diag(field_))
    for k in range(1, n_steps + 1):
        field_ = solver.step(field_)
        cur = float(np.max(np.abs(field_.values)))
        if not np.isfinite(cur) or (init_max > 0 and cur > diverge_factor * init_max):
            raise Diverged(f"sup norm {cur:.3e} at t={field_.time:.4g}")
        if k % sample_every == 0 or k == n_steps:
            emit(diag(field_))
    res.field = field_
    return res


def ndjson_writer(fh):
    def write(rec):
        fh.write(json.dumps(rec, sort_keys=True) + "\n")

    return write
