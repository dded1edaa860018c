import math

import numpy as np
import pytest
from scipy import integrate, stats

from softbolt.cycles import (draw_boundary_velocities, estimate_escape_probability,
                             estimate_weighted_cycle_integral, leg_integral, make_rng, sample_diffuse_cycle,
                             specular_jacobian_probe, trace_specular_cycle)
from softbolt.errors import GrazingAbort
from softbolt.geometry import Domain
from softbolt.weights import WeightParams


# ------------------------------------------------------------------ specular
def test_slab_bounce_times_match_billiard_map():
    d = Domain.slab(0.5)
    t = 60.0
    tr = trace_specular_cycle(d, t, [0.0], [1.0, 0.3, 0.0])
    # first wall at distance 0.5, then a full crossing (width 1) per bounce
    expected = t - 0.5 - np.arange(len(tr) - 1)
    assert len(tr) - 1 >= 50
    assert np.allclose(tr.times[1:], expected, atol=1e-10, rtol=0)
    assert np.allclose(np.abs(tr.points[1:, 0]), 0.5, atol=1e-12)
    speeds = np.linalg.norm(tr.velocities, axis=1)
    assert np.max(np.abs(speeds - speeds[0])) <= 1e-10
    assert tr.terminated_by == "reached_time_zero"


def test_ball_radial_orbit_alternates_antipodes():
    d = Domain.ball(1.0, 3)
    v = np.array([0.0, 0.0, 2.0])
    tr = trace_specular_cycle(d, 52.0, [0.0, 0.0, 0.1], v)
    pts = tr.points[1:]
    assert len(pts) >= 50
    assert np.allclose(pts[0], [0, 0, -1], atol=1e-12)
    assert np.allclose(pts[1:], -pts[:-1], atol=1e-10)
    gaps = -np.diff(tr.times[1:])
    assert np.allclose(gaps[:-1], 1.0, atol=1e-10)  # diameter 2 at speed 2


def test_specular_speed_invariant_in_ellipsoid():
    d = Domain.ellipsoid([1.0, 0.7, 0.5])
    tr = trace_specular_cycle(d, 60.0, [0.1, -0.2, 0.05], [0.9, 0.4, -0.7])
    speeds = np.linalg.norm(tr.velocities, axis=1)
    assert len(tr) > 50
    assert np.max(np.abs(speeds - speeds[0])) <= 1e-10
    assert np.all(np.diff(tr.times) < 0)
    for x, v in zip(tr.points[1:-1], tr.velocities[1:-1]):
        assert d.kinetic_distance(x, v) > 0


def test_trace_position_lookup():
    d = Domain.slab(0.5)
    tr = trace_specular_cycle(d, 2.0, [0.0], [1.0, 0.0, 0.0])
    assert tr.position_at(2.0)[0] == pytest.approx(0.0)
    assert tr.position_at(1.75)[0] == pytest.approx(-0.25)
    assert tr.position_at(1.25)[0] == pytest.approx(-0.25)  # after the wall, moving back
    assert tr.velocity_at(1.0)[0] == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        tr.position_at(3.0)


def test_grazing_start_aborts():
    d = Domain.ball(1.0, 3)
    with pytest.raises(GrazingAbort):
        trace_specular_cycle(d, 1.0, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


# ------------------------------------------------------------------- diffuse
def test_boundary_draws_follow_flux_density():
    rng = make_rng(11)
    n = np.tile([0.0, 0.0, 1.0], (100_000, 1))
    v = draw_boundary_velocities(rng, n)
    vn = v[:, 2]
    assert np.all(vn > 0)
    assert np.mean(vn**2) == pytest.approx(2.0, rel=0.01)
    assert stats.kstest(vn, stats.rayleigh.cdf).pvalue > 0.01
    # tangential components are standard normal
    assert stats.kstest(v[:, 0], stats.norm.cdf).pvalue > 0.01


def test_draws_respect_arbitrary_normals():
    rng = make_rng(3)
    normals = rng.normal(size=(1000, 3))
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    v = draw_boundary_velocities(make_rng(4), normals)
    assert np.all(np.einsum("ij,ij->i", v, normals) > 0)


def test_diffuse_cycle_structure():
    d = Domain.ball(1.0, 3)
    tr, w = sample_diffuse_cycle(d, 5, 20.0, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], k_max=30)
    assert np.all(np.diff(tr.times) < 0)
    for x, v in zip(tr.points[1:], tr.velocities[1:]):
        assert abs(np.linalg.norm(x) - 1.0) < 1e-10
        assert d.outward_normal(x) @ v > 0
    assert w.cumulative_weight == 1.0


def _one_bounce_escape(t1):
    # unit ball: the backward chord from a wall point with velocity v has duration 2 v_n / |v|^2.
    # Survival needs r^2 > 2 s / t1 - s^2 with s ~ Rayleigh and r^2 ~ Exp(mean 2).
    def integrand(s):
        return s * math.exp(-s * s / 2) * math.exp(-max(0.0, 2 * s / t1 - s * s) / 2)
    kink = 2.0 / t1
    return integrate.quad(integrand, 0, kink, limit=200)[0] + integrate.quad(integrand, kink, np.inf)[0]


def test_escape_probability_one_bounce_oracle():
    d = Domain.ball(1.0, 3)
    # first leg from the centre at unit speed takes time 1, leaving t1 = 0.5
    est = estimate_escape_probability(d, 1.5, ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), k=1, n_samples=100_000, seed=2)
    exact = _one_bounce_escape(0.5)
    assert abs(est.estimate - exact) <= 3 * est.stderr


def test_escape_probability_monotone_and_deterministic():
    d = Domain.ball(1.0, 3)
    start = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    ests = [estimate_escape_probability(d, 10.0, start, k, 20_000, seed=7).estimate for k in (2, 4, 8, 16)]
    assert all(a >= b for a, b in zip(ests, ests[1:]))
    again = estimate_escape_probability(d, 10.0, start, 8, 20_000, seed=7)
    assert again.estimate == ests[2]
    assert estimate_escape_probability(d, 1e6, start, 2, 1000, seed=1).estimate == 1.0
    with pytest.raises(ValueError):
        estimate_escape_probability(d, 10.0, start, 2, 10)


def test_leg_integral_matches_quadrature():
    for nu, hi, lo in [(0.3, 2.0, 0.5), (12.0, 1.0, 0.9), (1e-3, 5.0, 0.0)]:
        ref = integrate.quad(lambda s: math.exp(nu * (s - hi)), lo, hi, epsabs=1e-14, epsrel=1e-13)[0]
        assert leg_integral(nu, hi, lo) == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_weighted_integral_linear_in_weight():
    d = Domain.ball(1.0, 3)
    p = WeightParams(0.5, 2.0, 0.5, -1.0)
    start = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])

    def freq(speed):
        return 4 * np.pi / np.sqrt(1 + speed**2)

    zero = estimate_weighted_cycle_integral(d, freq, p, 5.0, start, 4, 2000, seed=1,
                                            weight_fn=lambda v: np.zeros(len(v)))
    assert zero.estimate == 0.0
    one = estimate_weighted_cycle_integral(d, freq, p, 5.0, start, 4, 2000, seed=1,
                                           weight_fn=lambda v: np.ones(len(v)))
    two = estimate_weighted_cycle_integral(d, freq, p, 5.0, start, 4, 2000, seed=1,
                                           weight_fn=lambda v: 2 * np.ones(len(v)))
    assert two.estimate == pytest.approx(2 * one.estimate, rel=1e-14)
    with pytest.raises(ValueError):
        estimate_weighted_cycle_integral(d, freq, p, 5.0, start, 4, 2000, variant="sideways")


# ------------------------------------------------------------------ jacobian
def test_jacobian_free_transport_is_time_power():
    d = Domain.ball(1.0, 3)
    J = specular_jacobian_probe(d, 1.0, [0.0, 0.0, 0.0], [0.1, 0.0, 0.0], s=0.9, s1=0.6,
                                v_prime=[0.2, 0.1, -0.1])
    assert J == pytest.approx(0.3**3, rel=1e-6)


def test_jacobian_slab_bounce_is_isometry():
    d = Domain.slab(0.5)
    # from x=0 at time s=1 with v'=1: wall after 0.5, then 0.5 more in reverse
    J = specular_jacobian_probe(d, 1.0, [0.0], [1.0, 0.0, 0.0], s=1.0, s1=0.0, v_prime=[1.0, 0.0, 0.0])
    assert J == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(ValueError):
        specular_jacobian_probe(d, 1.0, [0.0], [1.0, 0.0, 0.0], s=0.2, s1=0.5, v_prime=[1.0, 0.0, 0.0])
