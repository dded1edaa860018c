"""Post-processing: stretched-exponential fits, coercivity and conservation
audits, and the phase-space set used to exclude near-grazing cycles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NonPositiveNorms, ZeroDenominator
from .geometry import Domain

DEFAULT_RHO_GRID = tuple(np.round(np.arange(1, 21) * 0.05, 2))


@dataclass
class DecayFit:
    rho_hat: float
    lambda_hat: float
    r2: float
    window: tuple
    intercept: float = 0.0
    r2_exponential: float = float("nan")
    lambda_exponential: float = float("nan")
    norm_kind: str = "l2"

    def report(self) -> dict:
        return {"rho_hat": self.rho_hat, "lambda_hat": self.lambda_hat, "r2": self.r2,
                "window": list(self.window), "norm_kind": self.norm_kind,
                "r2_exponential": self.r2_exponential, "lambda_exponential": self.lambda_exponential}


def _regress(x, y):
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return coef[0], coef[1], max(0.0, min(1.0, r2))


def _prepare(series, exclude_fraction, window):
    data = np.asarray(series, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise InsufficientData("series must be a list of (t, norm) pairs")
    t, y = data[:, 0], data[:, 1]
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
    else:
        t0 = t.min() + exclude_fraction * (t.max() - t.min())
        keep = t >= t0
    t, y = t[keep], y[keep]
    if len(t) < 10:
        raise InsufficientData(f"{len(t)} samples in the fit window; need at least 10")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise NonPositiveNorms("norms must be positive and finite")
    return t, np.log(y)


def fit_at_rho(series, rho: float, exclude_fraction: float = 0.2, window=None):
    """(lambda, r2, intercept) of log(norm) = c - lambda t^rho."""
    t, logy = _prepare(series, exclude_fraction, window)
    c, slope, r2 = _regress(t**rho, logy)
    return -slope, r2, c


def fit_stretched_exponential(series, rho_grid=DEFAULT_RHO_GRID, exclude_fraction: float = 0.2,
                              window=None, refine: bool = True, norm_kind: str = "l2") -> DecayFit:
    t, logy = _prepare(series, exclude_fraction, window)

    def score(rho):
        return _regress(t**rho, logy)

    grid = [float(r) for r in rho_grid]
    results = {r: score(r) for r in grid}
    best = max(grid, key=lambda r: results[r][2])
    if refine:
        lo, hi = max(0.01, best - 0.05), min(1.0, best + 0.05)
        for r in np.round(np.arange(lo, hi + 1e-9, 0.01), 2):
            r = float(r)
            if r not in results:
                results[r] = score(r)
        best = max(results, key=lambda r: results[r][2])
    c, slope, r2 = results[best]
    c1, s1, r2_exp = score(1.0)
    return DecayFit(best, -slope, r2, (float(t.min()), float(t.max())), c, r2_exp, -s1, norm_kind)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------
def coercivity_audit(op, trajectory, times=None):
    """Measured ratio int (Lf, f) dt / int ||f||_nu^2 dt over a sampled trajectory.

    ``trajectory`` is a sequence of velocity fields (or arrays of fields at
    several x nodes); time integrals use the trapezoid rule on ``times`` (uniform
    spacing when omitted).
    """
    fields = [np.atleast_2d(np.asarray(f, dtype=float)) for f in trajectory]
    num = np.array([sum(op.quadratic_form(row) for row in f) for f in fields])
    den = np.array([sum(op.nu_norm_sq(row) for row in f) for f in fields])
    if len(fields) > 1:
        tt = np.arange(len(fields), dtype=float) if times is None else np.asarray(times, dtype=float)
        num_i, den_i = np.trapezoid(num, tt), np.trapezoid(den, tt)
    else:
        num_i, den_i = num.sum(), den.sum()
    if den_i == 0.0:
        raise ZeroDenominator("trajectory is identically zero")
    micro = sum(op.nu_norm_sq(op.macro.complement(row)) for f in fields for row in f)
    null_flag = micro <= 1e-14 * max(den.sum(), 1e-300)
    ratio = 0.0 if null_flag else float(num_i / den_i)
    return ratio, {"numerator": float(num_i), "denominator": float(den_i), "null_trajectory": bool(null_flag),
                   "samples": len(fields)}


def conservation_report(records, thresholds=None, kind: str = "specular") -> dict:
    """Max relative drift of mass, energy and transverse momentum over a run.

    Drift is measured relative to max(|initial value|, scale) where scale is the
    initial L2 norm, so quantities that start at zero are judged against the
    size of the solution.  Energy is not judged for diffuse walls.
    """
    thresholds = thresholds or {"mass": 1e-6, "energy": 1e-6, "momentum2": 1e-6}
    recs = list(records)
    if not recs:
        return {"pass": True, "drifts": {}}
    scale = max(abs(recs[0].get("l2", 0.0)), 1e-300)
    drifts = {}
    for key in ("mass", "energy", "momentum2"):
        vals = np.array([r[key] for r in recs if key in r], dtype=float)
        if len(vals) == 0:
            continue
        ref = max(abs(vals[0]), scale)
        drifts[key] = float(np.max(np.abs(vals - vals[0])) / ref) if np.any(vals) else 0.0
    judged = ["mass"] if kind == "diffuse" else list(drifts)
    ok = all(drifts.get(k, 0.0) <= thresholds.get(k, 1e-6) for k in judged)
    out = {"pass": bool(ok), "drifts": drifts, "judged": judged, "thresholds": thresholds}
    if any("flux_in" in r for r in recs):
        out["max_flux_imbalance"] = float(max(abs(r.get("flux_in", 0.0) - r.get("flux_out", 0.0)) for r in recs))
    return out


@dataclass(frozen=True)
class AalphaSet:
    """Phase-space points with 1/N <= |v| <= N and kinetic distance >= 1/N."""

    domain: Domain
    N: float

    def contains(self, x, v) -> bool:
        speed = float(np.linalg.norm(v))
        if not (1.0 / self.N <= speed <= self.N):
            return False
        return self.domain.kinetic_distance(x, v) >= 1.0 / self.N


def frequency_sandwich(speeds, nu, varrho: float):
    """Band [c, C] of nu / (1 + |v|^2)^{varrho/2} over the sample."""
    ratio = np.asarray(nu) / (1.0 + np.asarray(speeds) ** 2) ** (0.5 * varrho)
    return float(ratio.min()), float(ratio.max())


def loglog_slope(x, y) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


def kernel_envelope_trend(op, eps_chi: float, q: float = 0.5, theta: float = 2.0, min_speed: float = 1.0):
    """Log-log slope of the weighted row sums of |k^chi| against 1 + |v|.

    Rows are grouped by speed shell; only shells with |v| >= ``min_speed`` whose
    full collision sphere stays inside the grid are used.
    """
    from .weights import static_weight

    K = np.abs(op.K_chi(eps_chi))
    w = static_weight(q, theta, op.grid.nodes)
    rows = (K * w[:, None] / w[None, :]).sum(axis=1)
    s = op.grid.speeds
    keep = (s >= min_speed) & (s <= 0.5 * op.grid.half_width)
    shells = np.unique(np.round(s[keep], 8))
    sums = np.array([rows[keep][np.isclose(s[keep], r)].mean() for r in shells])
    return loglog_slope(1.0 + shells, sums), shells, sums
