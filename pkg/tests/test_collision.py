import math

import numpy as np
import pytest
from scipy import integrate

from softbolt.collision import kernels
from softbolt.collision.cells import chi, offset_table, radial_moment, self_cell_integral
from softbolt.collision.frequency import FrequencyTable, angular_factor, frequency_of_speed
from softbolt.collision.grid import VelocityGrid
from softbolt.collision.operator import (AngularRule, MacroProjection, _raw_assembly, assemble_operator,
                                         post_collision, resolve_interpolation)
from softbolt.errors import NonUnitOmega


# ------------------------------------------------------------------ grid
def test_grid_symmetry_and_mass():
    g = VelocityGrid(6.0, 16)
    assert np.allclose(g.nodes[g.negation_index], -g.nodes)
    assert np.allclose(g.nodes[g.reflection_index][:, 0], -g.nodes[:, 0])
    assert not np.any(np.all(g.nodes == 0, axis=1))
    assert g.integrate(g.mu) == pytest.approx(g.mass_exact(), abs=1e-4)
    with pytest.raises(ValueError):
        VelocityGrid(6.0, 15)


def test_interpolation_reproduces_linear_functions(rng):
    g = VelocityGrid(4.0, 10)
    f = 1.0 + g.nodes @ np.array([0.3, -0.2, 0.7])
    pts = rng.uniform(-3.9, 3.9, (40, 3))
    assert np.allclose(g.interpolate(f, pts), 1.0 + pts @ np.array([0.3, -0.2, 0.7]))
    assert g.interpolate(f, [[5.0, 0, 0]])[0] == 0.0


# ------------------------------------------------------------------ frequency
def nu_oracle(speed, varrho):
    # direct 3-D convolution: 2 pi * int |v - u|^varrho mu(u) du in spherical coordinates about v
    def inner(r):
        if speed == 0:
            return r ** (varrho + 2) * 4 * math.pi * math.exp(-r * r / 2) / (2 * math.pi)
        ang = integrate.quad(lambda c: math.exp(-(r * r + speed * speed - 2 * r * speed * c) / 2), -1, 1)[0]
        return r ** (varrho + 2) * 2 * math.pi * ang / (2 * math.pi)
    return angular_factor() * integrate.quad(inner, 0, speed + 40, points=[speed], limit=200)[0]


def test_frequency_at_origin_is_four_pi():
    assert frequency_of_speed(0.0, -1.0)[0] == pytest.approx(4 * math.pi, rel=1e-10)


@pytest.mark.parametrize("speed", [0.5, 2.0, 7.0])
@pytest.mark.parametrize("varrho", [-0.5, -1.0, -2.0])
def test_frequency_matches_direct_convolution(speed, varrho):
    assert frequency_of_speed(speed, varrho)[0] == pytest.approx(nu_oracle(speed, varrho), rel=1e-7)


def test_frequency_decreases_and_table_agrees():
    s = np.linspace(0, 30, 61)
    nu = frequency_of_speed(s, -1.0)
    assert np.all(np.diff(nu) < 0)
    # large-speed behaviour ~ 2 pi * 2 pi ... / |v|: ratio to |v|^-1 approaches a constant
    big = frequency_of_speed([100.0, 200.0], -1.0)
    assert big[0] * 100 == pytest.approx(big[1] * 200, rel=1e-3)
    tab = FrequencyTable(-1.0)
    assert np.allclose(tab(s[s <= 20]), nu[s <= 20], rtol=1e-6)
    assert tab(np.array([25.0]))[0] == pytest.approx(frequency_of_speed(25.0, -1.0)[0], rel=1e-3)


# ------------------------------------------------------------------ cells
def test_chi_is_a_smooth_step():
    assert chi(0.05, 0.1) == 0.0 and chi(0.3, 0.1) == 1.0
    assert chi(0.15, 0.1) == pytest.approx(0.5)


def test_radial_moment_split_sums_to_full():
    R = np.linspace(0, 1, 11)
    full = radial_moment(R, -1.0, "full")
    parts = radial_moment(R, -1.0, "chi", 0.2) + radial_moment(R, -1.0, "one_minus_chi", 0.2)
    assert np.allclose(full, parts)
    # direct quadrature of r^(varrho+2) (1 - chi) on [0, 0.3]
    ref = integrate.quad(lambda r: r * (1 - chi(r, 0.2)), 0, 0.3, points=[0.2])[0]
    assert radial_moment(0.3, -1.0, "one_minus_chi", 0.2) == pytest.approx(ref, rel=1e-10)


def test_self_cell_integral_against_monte_carlo_free_oracle():
    h = 0.8
    # inside the ball of radius h/2 the cube integral of |w|^-1 equals 4 pi (h/2)^2 / 2;
    # the corner region is smooth, so a tensor Gauss rule on the full cube minus the ball is accurate
    val = self_cell_integral(h, -1.0)
    x, w = np.polynomial.legendre.leggauss(60)
    a = h / 2
    X, Y, Z = np.meshgrid(a * x, a * x, a * x, indexing="ij")
    W = np.einsum("i,j,k->ijk", w, w, w) * a**3
    r = np.sqrt(X**2 + Y**2 + Z**2)
    outside = r > a
    ref = 2 * math.pi * a**2 + np.sum(W[outside] / r[outside])
    assert val == pytest.approx(ref, rel=2e-3)
    # the cutoff part is exactly the ball integral when 2 eps < h/2
    eps = 0.15
    ball = 4 * math.pi * float(radial_moment(2 * eps, -1.0, "one_minus_chi", eps))
    assert self_cell_integral(h, -1.0, "one_minus_chi", eps) == pytest.approx(ball, rel=1e-12)


def test_offset_table_split_is_consistent():
    n, h = 6, 0.8
    full = offset_table(n, h, -1.0, "full")
    a = offset_table(n, h, -1.0, "chi", 0.2)
    b = offset_table(n, h, -1.0, "one_minus_chi", 0.2)
    assert np.allclose(full, a + b, rtol=1e-12, atol=1e-14)
    c = n - 1
    assert np.count_nonzero(b) > 0 and b[c + 3, c, c] == 0.0
    with pytest.raises(ValueError):
        offset_table(n, h, -1.0, "one_minus_chi", 2.0)


# ------------------------------------------------------------------ collision geometry
def test_post_collision_conserves_momentum_and_energy(rng):
    u, v = rng.normal(size=3), rng.normal(size=3)
    om = rng.normal(size=3)
    om /= np.linalg.norm(om)
    up, vp = post_collision(u, v, om)
    assert np.allclose(up + vp, u + v)
    assert up @ up + vp @ vp == pytest.approx(u @ u + v @ v)
    with pytest.raises(NonUnitOmega):
        post_collision(u, v, 2 * om)


def test_angular_rule_integrates_abs_cos():
    r = AngularRule.build(72)
    # one direction per +/- pair; the antipode gives the same post-collision pair
    assert len(r.weights) == 36
    # weights carry |cos theta|; their sum over the sphere is the angular factor 2 pi
    assert r.weights.sum() == pytest.approx(angular_factor(), rel=1e-12)
    # second moment: int |cos| cos^2 dOmega = pi
    assert np.sum(r.weights * r.cos_t**2) == pytest.approx(math.pi, rel=1e-12)
    with pytest.raises(ValueError):
        AngularRule.build(50)


# ------------------------------------------------------------------ operator
def test_macro_projection_idempotent(small_grid, rng):
    mp = MacroProjection(small_grid)
    f = rng.normal(size=small_grid.size)
    pf = mp.project(f)
    assert np.allclose(mp.project(pf), pf, atol=1e-10)
    assert np.allclose(mp.coefficients(mp.complement(f)), 0, atol=1e-10)


def test_operator_structure(small_op, small_grid, rng):
    op = small_op
    W = small_grid.weights
    A = W[:, None] * op.L
    assert np.allclose(A, A.T, atol=1e-12 * np.abs(A).max())
    lam = op.spectrum[0]
    assert np.all(lam[:5] < 1e-10) and lam[5] > 0.1
    for b in op.macro.basis.T:
        assert np.linalg.norm(op.apply_L(b)) <= 1e-10 * np.linalg.norm(b)
    f = op.macro.complement(rng.normal(size=small_grid.size))
    assert op.coercivity_ratio(f) > 0
    assert np.all(op.nu > 0)


def test_propagator_semigroup(small_op):
    P1 = small_op.propagator(0.1)
    P2 = small_op.propagator(0.2)
    assert np.allclose(P1 @ P1, P2, atol=1e-12)
    assert np.allclose(small_op.propagator(0.0), np.eye(small_op.grid.size), atol=1e-12)


def test_kernel_split_sums_to_K(small_op):
    Kc = small_op.K_chi(0.3)
    K1 = small_op.K_one_minus_chi(0.3)
    assert np.allclose(Kc + K1, small_op.K, atol=1e-10)
    assert small_op.weighted_split_norm(0.3) > small_op.weighted_split_norm(0.15) > 0


def test_gamma_vanishes_on_maxwellian(default_op):
    sm = default_op.grid.sqrt_mu
    g = default_op.gamma(sm, sm)
    assert np.linalg.norm(g) <= 1e-4 * np.linalg.norm(sm)


def test_gamma_is_microscopic_and_batched(small_op, small_grid, rng):
    sm = small_grid.sqrt_mu
    f = rng.normal(size=small_grid.size) * sm
    out = small_op.gamma(f, f, project=True)
    assert np.allclose(small_op.macro.coefficients(out), 0, atol=1e-10)
    batch = small_op.gamma(np.stack([f, sm]), np.stack([f, sm]))
    assert np.allclose(batch[0], small_op.gamma(f, f))


def test_backends_agree():
    g = VelocityGrid(4.0, 6)
    table = offset_table(g.n, g.spacing, -1.0, "full")
    rule = AngularRule.build(32)
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled extension not built")
    c = _raw_assembly(g, table, rule, "compiled")
    p = _raw_assembly(g, table, rule, "python")
    for a, b in zip(c, p):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-13)
    c = _raw_assembly(g, table, rule, "compiled", "direct")
    p = _raw_assembly(g, table, rule, "python", "direct")
    for a, b in zip(c, p):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-13)


def test_interpolation_choice_follows_cell_width():
    assert resolve_interpolation(VelocityGrid(6.0, 16)) == "ratio"
    assert resolve_interpolation(VelocityGrid(5.0, 8)) == "direct"
    assert resolve_interpolation(VelocityGrid(5.0, 8), "ratio") == "ratio"
    with pytest.raises(ValueError):
        resolve_interpolation(VelocityGrid(4.0, 8), "cubic")


def test_direct_interpolation_stays_positive_on_wide_cells(op_cache):
    wide = VelocityGrid(5.0, 8)
    direct = assemble_operator(wide, -1.0, cache_dir=op_cache, interpolation="direct")
    lam = direct.spectrum[0]
    assert np.all(np.abs(lam[:5]) < 1e-10) and lam[5] > 0.1
    ratio = assemble_operator(wide, -1.0, cache_dir=op_cache, interpolation="ratio")
    assert ratio.spectrum[0][0] < -0.1


def test_operator_cache_roundtrip(small_op, small_grid, op_cache):
    from softbolt.collision.operator import assemble_operator

    again = assemble_operator(small_grid, -1.0, cache_dir=op_cache)
    assert np.array_equal(again.L, small_op.L)
