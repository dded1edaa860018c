"""Maxwellian, time-velocity weights, augmented collision frequency and the
stretched-exponential envelopes they produce."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EnvelopeViolated

_TWO_PI = 2.0 * math.pi


def maxwellian(v) -> np.ndarray | float:
    """(1/2pi) exp(-|v|^2/2); ``v`` has trailing dimension 3."""
    v = np.asarray(v, dtype=float)
    out = np.exp(-0.5 * np.sum(v * v, axis=-1)) / _TWO_PI
    return float(out) if out.ndim == 0 else out


def half_space_flux_exact() -> float:
    """Analytic value of the integral of mu (n.v) over n.v > 0.

    Factorises into (2pi) from the two tangential Gaussians times
    int_0^inf s e^{-s^2/2} ds = 1, divided by the 2pi normalisation.
    """
    tangential = math.sqrt(_TWO_PI) ** 2
    normal = 1.0
    return tangential * normal / _TWO_PI


@dataclass(frozen=True)
class WeightParams:
    q: float = 0.5
    theta: float = 2.0
    vartheta: float = 0.5
    varrho: float = -1.0

    def violations(self) -> list[str]:
        out = []
        if not (-3.0 < self.varrho < 0.0):
            out.append(f"varrho={self.varrho} outside the soft range -3 < varrho < 0")
        if not (0.0 < self.theta <= 2.0):
            out.append(f"theta={self.theta} outside 0 < theta <= 2")
        if self.theta == 2.0:
            if not (0.0 < self.q < 1.0):
                out.append(f"(q,theta)=({self.q},{self.theta}) not in A_(q,theta): theta=2 requires 0<q<1")
        elif self.q <= 0.0:
            out.append(f"(q,theta)=({self.q},{self.theta}) not in A_(q,theta): requires q>0")
        if self.varrho < 0.0 and self.theta > 0.0:
            limit = -self.theta / self.varrho
            if not (0.0 <= self.vartheta < limit):
                out.append(
                    f"vartheta={self.vartheta} violates 0 <= vartheta < -theta/varrho = {limit:g}"
                )
        return out

    def validate(self) -> "WeightParams":
        bad = self.violations()
        if bad:
            from .errors import ValidationError

            raise ValidationError(bad)
        return self

    @property
    def exponents(self) -> "DecayExponents":
        return DecayExponents.from_params(self)


@dataclass(frozen=True)
class DecayExponents:
    rho0: float
    rho1: float
    lambda0: float = float("nan")

    @classmethod
    def from_params(cls, p: WeightParams, lambda0: float = float("nan")) -> "DecayExponents":
        rho0 = p.theta / (p.theta - p.varrho)
        rho1 = (p.theta + p.vartheta * p.varrho) / (p.theta - p.varrho)
        return cls(rho0, rho1, lambda0)


def _speed_pow(v, theta):
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.sum(v * v, axis=-1)) ** theta


def static_weight(q: float, theta: float, v):
    """exp(q |v|^theta / 4)."""
    return np.exp(0.25 * q * _speed_pow(v, theta))


def weight(p: WeightParams, t: float, v):
    """Time-velocity weight; reduces to ``static_weight`` when vartheta = 0."""
    s = p.q * _speed_pow(v, p.theta) / 8.0
    if p.vartheta == 0.0:
        return np.exp(2.0 * s)
    return np.exp(s + s / (1.0 + t) ** p.vartheta)


def nu_tilde(p: WeightParams, nu_v, t: float, v):
    return nu_v + p.vartheta * p.q * _speed_pow(v, p.theta) / (8.0 * (1.0 + t) ** (p.vartheta + 1.0))


def integrated_nu_tilde(p: WeightParams, nu_v, s: float, t: float, v):
    """Closed form of the time integral of nu_tilde over [s, t]."""
    a = p.q * _speed_pow(v, p.theta) / 8.0
    return nu_v * (t - s) + a * ((1.0 + s) ** -p.vartheta - (1.0 + t) ** -p.vartheta)


def frequency_constant(speeds, nu, varrho: float) -> float:
    """Smallest C with (1/C) <v>^varrho <= nu <= C <v>^varrho on the sample."""
    ratio = np.asarray(nu) / (1.0 + np.asarray(speeds) ** 2) ** (0.5 * varrho)
    return float(max(ratio.max(), 1.0 / ratio.min()))


def lambda0_bound(p: WeightParams, c_freq: float) -> float:
    """Largest rate admitted by the Young-inequality argument."""
    rho0 = p.theta / (p.theta - p.varrho)
    return (c_freq * rho0) ** (-rho0) * (p.q / (8.0 * (1.0 - rho0))) ** (1.0 - rho0)


@dataclass
class EnvelopeReport:
    lambda0: float
    worst_margin: float
    worst_t: float
    worst_index: int
    rows: list = field(default_factory=list)  # (t, node index, margin)

    @property
    def violations(self) -> int:
        return sum(1 for _, _, m in self.rows if m < -1e-12)


def young_envelope_check(p: WeightParams, speeds, nu, t_samples, lambda0: float, raise_on_violation=True):
    """Check exp(-nu t) / w_{q/2,theta} <= exp(-lambda0 t^rho0) node by node.

    Margins are in log form: log(rhs) - log(lhs), so a negative value is a violation.
    """
    rho0 = p.theta / (p.theta - p.varrho)
    speeds = np.asarray(speeds, dtype=float)
    nu = np.asarray(nu, dtype=float)
    half_weight_log = 0.125 * p.q * speeds**p.theta
    rows = []
    worst = (math.inf, 0.0, -1)
    for t in t_samples:
        margin = nu * t + half_weight_log - lambda0 * t**rho0
        k = int(np.argmin(margin))
        if margin[k] < worst[0]:
            worst = (float(margin[k]), float(t), k)
        rows.extend((float(t), int(i), float(m)) for i, m in enumerate(margin))
    report = EnvelopeReport(lambda0, worst[0], worst[1], worst[2], rows)
    if raise_on_violation and worst[0] < -1e-12:
        raise EnvelopeViolated(worst[1], worst[2], worst[0])
    return report


def nu_tilde_lower_audit(p: WeightParams, speeds, nu, t_samples) -> float:
    """min over nodes and times of nu_tilde (1+t)^{-(1+vartheta) varrho/(theta-varrho)}."""
    speeds = np.asarray(speeds, dtype=float)
    expo = -(1.0 + p.vartheta) * p.varrho / (p.theta - p.varrho)
    worst = math.inf
    for t in t_samples:
        nt = np.asarray(nu) + p.vartheta * p.q * speeds**p.theta / (8.0 * (1.0 + t) ** (p.vartheta + 1.0))
        worst = min(worst, float(np.min(nt * (1.0 + t) ** -expo)))
    return worst


def measured_lambda2(p: WeightParams, speeds, nu, pairs) -> float:
    """Largest lambda2 with exp(-int_s^t nu_tilde) <= exp(lambda2 (s^rho1 - t^rho1)) on the samples.

    ``pairs`` is an iterable of (s, t) with s < t.
    """
    rho1 = (p.theta + p.vartheta * p.varrho) / (p.theta - p.varrho)
    speeds = np.asarray(speeds, dtype=float)
    nu = np.asarray(nu, dtype=float)
    best = math.inf
    for s, t in pairs:
        gap = t**rho1 - s**rho1
        if gap <= 0:
            continue
        a = p.q * speeds**p.theta / 8.0
        integral = nu * (t - s) + a * ((1.0 + s) ** -p.vartheta - (1.0 + t) ** -p.vartheta)
        best = min(best, float(np.min(integral)) / gap)
    return best
