"""Back-time cycles: specular billiards and stochastic diffuse cycles, plus
Monte Carlo estimators built on them.

Counting convention for diffuse cycles: ``k`` is the number of boundary
velocities drawn.  Starting from (t, x, v) the first leg ends at
t_1 = t - t_b(x, v); leg l >= 1 runs from t_l to t_{l+1} with the drawn
velocity v_l.  ``estimate_escape_probability(k)`` is the probability that
t_{k+1} > 0, i.e. the cycle is still running after k draws.

All Monte Carlo routines draw from a Philox generator keyed by ``seed`` and
consume random numbers leg by leg for every sample, dead or alive, so runs
with different ``k`` but the same seed share their random numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStep, GrazingAbort
from .geometry import Domain
from .weights import WeightParams, maxwellian, static_weight

TOL_GRAZING = 1e-8
MAX_BOUNCES = 10_000


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass
class CycleTrace:
    kind: str
    times: np.ndarray  # t_0 > t_1 > ...
    points: np.ndarray  # (k+1, dim); points[0] is the start
    velocities: np.ndarray  # (k+1, 3)
    terminated_by: str
    start: tuple = field(default=())

    def __len__(self):
        return len(self.times)

    def leg(self, s: float) -> int:
        """Index k with t_{k+1} <= s <= t_k (the leg active at time s)."""
        if s > self.times[0] or (self.terminated_by != "reached_time_zero" and s < self.times[-1]):
            raise ValueError(f"time {s} outside the traced interval")
        k = int(np.searchsorted(-self.times, -s, side="right")) - 1
        return max(0, min(k, len(self.times) - 1))

    def position_at(self, s: float) -> np.ndarray:
        k = self.leg(s)
        vs = self.velocities[k][: self.points.shape[1]]
        return self.points[k] - (self.times[k] - s) * vs

    def velocity_at(self, s: float) -> np.ndarray:
        return self.velocities[self.leg(s)].copy()

    def rows(self):
        for k, (t, x, v) in enumerate(zip(self.times, self.points, self.velocities)):
            yield k, float(t), x, v


def trace_specular_cycle(d: Domain, t: float, x, v, max_bounces: int = MAX_BOUNCES,
                         tol_grazing: float = TOL_GRAZING) -> CycleTrace:
    x = d.point(x)
    v = np.asarray(v, dtype=float).reshape(3)
    if d.kinetic_distance(x, v) <= tol_grazing:
        raise GrazingAbort("start point lies on the grazing set")
    times, points, vels = [float(t)], [x], [v]
    reason = "bounce_budget"
    for _ in range(max_bounces):
        tb, xb = d.backward_exit_time(points[-1], vels[-1])
        if not math.isfinite(tb):
            reason = "reached_time_zero"
            break
        v_next = d.specular_reflect(xb, vels[-1])
        t_next = times[-1] - tb
        times.append(t_next)
        points.append(xb)
        vels.append(v_next)
        if t_next <= 0.0:
            reason = "reached_time_zero"
            break
        if d.kinetic_distance(xb, v_next) <= tol_grazing:
            raise GrazingAbort(f"grazing bounce at t={t_next:.6g}")
    return CycleTrace("specular", np.array(times), np.array(points), np.array(vels), reason, (t, x, v))


def _tangent_frames(normals: np.ndarray):
    """Two unit tangents completing each 3-D normal to an orthonormal frame."""
    k = np.argmin(np.abs(normals), axis=1)
    helper = np.eye(3)[k]
    t1 = np.cross(normals, helper)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(normals, t1)
    return t1, t2


def draw_boundary_velocities(rng: np.random.Generator, normals: np.ndarray) -> np.ndarray:
    """Samples of mu(v)(n.v) dv on {n.v > 0}: Rayleigh normal part, Gaussian tangential parts."""
    normals = np.atleast_2d(normals)
    m = len(normals)
    g = rng.standard_normal((m, 2))
    s = rng.rayleigh(1.0, m)
    t1, t2 = _tangent_frames(normals)
    return s[:, None] * normals + g[:, :1] * t1 + g[:, 1:] * t2


def sample_diffuse_cycle(d: Domain, seed: int, t: float, x, v, k_max: int,
                         tol_grazing: float = TOL_GRAZING):
    """One stochastic back-time cycle with up to ``k_max`` draws.

    Returns the trace and the per-bounce importance weights (all 1: the
    sampler draws exactly from the probability measure).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    rng = make_rng(seed)
    x = d.point(x)
    v = np.asarray(v, dtype=float).reshape(3)
    if d.kinetic_distance(x, v) <= tol_grazing:
        raise GrazingAbort("start point lies on the grazing set")
    times, points, vels = [float(t)], [x], [v]
    reason = "bounce_budget"
    for _ in range(k_max + 1):
        tb, xb = d.backward_exit_time(points[-1], vels[-1])
        if not math.isfinite(tb):
            reason = "reached_time_zero"
            break
        t_next = times[-1] - tb
        v_next = draw_boundary_velocities(rng, d.outward_normal(xb)[None, :])[0]
        times.append(t_next)
        points.append(xb)
        vels.append(v_next)
        if t_next <= 0.0:
            reason = "reached_time_zero"
            break
        if len(times) > k_max + 1:
            break
    trace = CycleTrace("diffuse", np.array(times), np.array(points), np.array(vels), reason, (t, x, v))
    weights = np.ones(len(times) - 1)
    return trace, CycleMeasureSample(weights)


@dataclass
class CycleMeasureSample:
    weights: np.ndarray

    @property
    def cumulative_weight(self) -> float:
        return float(np.prod(self.weights))


@dataclass
class Estimate:
    estimate: float
    stderr: float
    n: int
    seed: int
    k: int
    t: float
    variant: str = "escape"

    def record(self) -> dict:
        return {"k": self.k, "t": self.t, "estimate": self.estimate, "stderr": self.stderr,
                "n": self.n, "seed": self.seed, "variant": self.variant}


def _advance(d: Domain, X, V, T):
    tb, XB = d.exit_times(X, V)
    return T - tb, XB


def _diffuse_ensemble(d: Domain, t, x, v, k, n_samples, seed):
    """Times t_1..t_{k+1} and drawn velocities v_1..v_k for an ensemble."""
    rng = make_rng(seed)
    X = np.repeat(d.point(x)[None, :], n_samples, axis=0)
    V = np.repeat(np.asarray(v, dtype=float).reshape(1, 3), n_samples, axis=0)
    T = np.full(n_samples, float(t))
    T, X = _advance(d, X, V, T)
    times = [T]
    vels = []
    for _ in range(k):
        V = draw_boundary_velocities(rng, d.normals(X))
        T, X = _advance(d, X, V, T)
        # once a cycle has reached time zero it stays there
        T = np.where(times[-1] > 0.0, T, times[-1])
        times.append(T)
        vels.append(V)
    return np.array(times), np.array(vels)


def estimate_escape_probability(d: Domain, t: float, start, k: int, n_samples: int = 100_000,
                                seed: int = 0) -> Estimate:
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    x, v = start
    times, _ = _diffuse_ensemble(d, t, x, v, k, n_samples, seed)
    alive = times[-1] > 0.0
    p = float(alive.mean())
    return Estimate(p, math.sqrt(p * (1.0 - p) / n_samples), n_samples, seed, k, t)


def leg_integral(nu, t_hi, t_lo):
    """int_{t_lo}^{t_hi} exp(nu (s - t_hi)) ds = (1 - exp(-nu (t_hi - t_lo))) / nu."""
    return -np.expm1(-nu * (t_hi - t_lo)) / nu


def _as_frequency(op):
    from .collision.frequency import FrequencyTable

    if callable(op) and not hasattr(op, "varrho"):
        return op
    if isinstance(op, FrequencyTable):
        return op
    return FrequencyTable(op.varrho)


def estimate_weighted_cycle_integral(d: Domain, op, p: WeightParams, t: float, start, k: int,
                                     n_samples: int = 100_000, variant: str = "between_bounces",
                                     seed: int = 0, weight_fn=None) -> Estimate:
    """Monte Carlo value of the weighted iterated cycle integral.

    ``op`` supplies the collision frequency (a CollisionOperator, a
    FrequencyTable or any callable of speed).  The leg weight defaults to
    1 / (w_{q,theta}(v) sqrt(mu(v))); ``weight_fn`` overrides it.
    """
    if variant not in ("between_bounces", "tail_to_zero"):
        raise ValueError(f"unknown variant {variant!r}")
    freq = _as_frequency(op)
    if weight_fn is None:
        def weight_fn(vel):
            return 1.0 / (static_weight(p.q, p.theta, vel) * np.sqrt(maxwellian(vel)))
    x, v = start
    times, vels = _diffuse_ensemble(d, t, x, v, k, n_samples, seed)
    total = np.zeros(n_samples)
    decay = np.ones(n_samples)  # prod_{j<l} exp(-nu_j (t_j - t_{j+1}))
    for l in range(k):
        t_hi, t_lo = times[l], times[l + 1]
        nu_l = freq(np.linalg.norm(vels[l], axis=1))
        wl = weight_fn(vels[l])
        running = t_hi > 0.0
        if variant == "between_bounces":
            active = running & (t_lo > 0.0)
            total += np.where(active, wl * decay * leg_integral(nu_l, t_hi, t_lo), 0.0)
        else:
            active = running & (t_lo <= 0.0)
            total += np.where(active, wl * decay * leg_integral(nu_l, t_hi, 0.0), 0.0)
        decay = np.where(running & (t_lo > 0.0), decay * np.exp(-nu_l * (t_hi - t_lo)), decay)
    est = float(total.mean())
    se = float(total.std(ddof=1) / math.sqrt(n_samples))
    return Estimate(est, se, n_samples, seed, k, t, variant)


# ---------------------------------------------------------------------------
# specular Jacobian
# ---------------------------------------------------------------------------
def specular_position(d: Domain, s: float, y, v_prime, s1: float) -> np.ndarray:
    """Position at time s1 of the specular back-time cycle started at (s, y, v')."""
    tr = trace_specular_cycle(d, s - s1, y, v_prime)
    return tr.position_at(0.0)


def _fd_jacobian(d, s, y, v_prime, s1, h):
    dim = d.dim
    J = np.empty((dim, dim))
    for c in range(dim):
        e = np.zeros(3)
        e[c] = h
        J[:, c] = (specular_position(d, s, y, v_prime + e, s1) - specular_position(d, s, y, v_prime - e, s1)) / (2 * h)
    return J


def specular_jacobian_probe(d: Domain, t: float, x, v, s: float, s1: float, v_prime,
                            h: float | None = None, rtol: float = 1e-4) -> float:
    """|det d X'(s1; s, X(s), v') / d v'| by central differences with a Richardson check.

    X(s) is the specular cycle from (t, x, v); X' restarts at time s from X(s)
    with velocity v'.
    """
    if not (0.0 <= s1 < s <= t):
        raise ValueError("require 0 <= s1 < s <= t")
    v_prime = np.asarray(v_prime, dtype=float).reshape(3)
    speed = float(np.linalg.norm(v_prime))
    h = 1e-5 * speed if h is None else h
    if h * speed < 1e-14 or h == 0.0:
        raise DegenerateStep("finite-difference step below round-off")
    y = trace_specular_cycle(d, t, x, v).position_at(s)
    det_h = np.linalg.det(_fd_jacobian(d, s, y, v_prime, s1, h))
    det_h2 = np.linalg.det(_fd_jacobian(d, s, y, v_prime, s1, 0.5 * h))
    scale = max(abs(det_h), abs(det_h2), (s - s1) ** d.dim * 1e-12)
    if abs(det_h - det_h2) > rtol * scale + 1e-10:
        raise DegenerateStep(f"Richardson mismatch {det_h:.6g} vs {det_h2:.6g}: step crosses a bounce change")
    return abs((4.0 * det_h2 - det_h) / 3.0)


def bounce_time_ratios(d: Domain, trace: CycleTrace) -> np.ndarray:
    """(t_k - t_{k+1}) |v|^2 / |n(x_{k+1}) . v_{k+1}| for each complete bounce."""
    out = []
    for k in range(1, len(trace) - 1):
        xk1 = trace.points[k + 1]
        vk1 = trace.velocities[k + 1]
        if trace.times[k + 1] <= 0.0:
            break
        n = d.outward_normal(xk1)
        out.append((trace.times[k] - trace.times[k + 1]) * float(vk1 @ vk1) / abs(float(n @ vk1)))
    return np.array(out)
