import numpy as np
import pytest

from softbolt.analysis import (AalphaSet, coercivity_audit, conservation_report, fit_at_rho,
                               fit_stretched_exponential, frequency_sandwich, loglog_slope)
from softbolt.errors import InsufficientData, NonPositiveNorms, ZeroDenominator
from softbolt.geometry import Domain


def _series(rho, lam, t_end=50.0, n=501, noise=0.0, seed=0, prefactor=1.0):
    t = np.linspace(0.0, t_end, n)
    y = prefactor * np.exp(-lam * t**rho)
    if noise:
        y *= np.exp(noise * np.random.default_rng(seed).standard_normal(n))
    return np.column_stack([t, y])


@pytest.mark.parametrize("rho,lam", [(0.5, 1.3), (0.67, 0.8), (0.35, 2.0), (0.9, 0.1)])
def test_fit_recovers_planted_parameters(rho, lam):
    fit = fit_stretched_exponential(_series(rho, lam, prefactor=3.0))
    assert fit.rho_hat == pytest.approx(rho, abs=1e-9)
    assert fit.lambda_hat == pytest.approx(lam, rel=1e-2)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_tolerates_noise_within_one_grid_step():
    fit = fit_stretched_exponential(_series(2 / 3, 1.0, noise=0.01, seed=4))
    assert abs(fit.rho_hat - 2 / 3) <= 0.05
    assert fit.lambda_hat == pytest.approx(1.0, rel=0.1)


def test_fit_discriminates_stretched_from_exponential():
    pure = fit_stretched_exponential(_series(1.0, 0.4))
    stretched = fit_stretched_exponential(_series(2 / 3, 1.0))
    assert pure.rho_hat == 1.0
    assert stretched.rho_hat < pure.rho_hat
    assert stretched.r2 - stretched.r2_exponential > 0
    assert pure.r2 == pytest.approx(pure.r2_exponential)


def test_fit_window_and_errors():
    s = _series(0.5, 1.0)
    fit = fit_stretched_exponential(s, window=(5.0, 25.0))
    assert fit.window == (5.0, 25.0)
    lam, r2, _ = fit_at_rho(s, 0.5, window=(5.0, 25.0))
    assert lam == pytest.approx(1.0)
    with pytest.raises(InsufficientData):
        fit_stretched_exponential(s[:5])
    bad = s.copy()
    bad[-1, 1] = 0.0
    with pytest.raises(NonPositiveNorms):
        fit_stretched_exponential(bad)
    with pytest.raises(InsufficientData):
        fit_stretched_exponential(np.ones(20))


def test_fit_report_keys():
    rep = fit_stretched_exponential(_series(0.5, 1.0), norm_kind="winf").report()
    assert set(rep) >= {"rho_hat", "lambda_hat", "r2", "window", "norm_kind"}
    assert rep["norm_kind"] == "winf"


# ---------------------------------------------------------------- audits
def test_coercivity_audit(small_op, rng):
    sm = small_op.grid.sqrt_mu
    ratio, rep = coercivity_audit(small_op, [sm, 2 * sm, 3 * sm])
    assert ratio == 0.0 and rep["null_trajectory"]
    micro = [small_op.macro.complement(rng.normal(size=small_op.grid.size)) for _ in range(5)]
    ratio, rep = coercivity_audit(small_op, micro)
    lam = small_op.spectrum[0]
    assert ratio > 0 and not rep["null_trajectory"]
    # the quotient cannot exceed the largest eigenvalue over the smallest frequency
    assert ratio <= lam[-1] / small_op.nu.min()
    with pytest.raises(ZeroDenominator):
        coercivity_audit(small_op, [np.zeros(small_op.grid.size)] * 3)


def test_conservation_report():
    zero = [{"t": 0.0, "l2": 0.0, "mass": 0.0, "energy": 0.0, "momentum2": 0.0}] * 3
    rep = conservation_report(zero)
    assert rep["pass"] and all(v == 0.0 for v in rep["drifts"].values())
    recs = [{"t": t, "l2": 1.0, "mass": 1.0, "energy": 1.0 + 0.1 * t, "momentum2": 0.0} for t in range(3)]
    assert not conservation_report(recs)["pass"]
    diffuse = conservation_report(recs, kind="diffuse")
    assert diffuse["pass"] and diffuse["judged"] == ["mass"]
    recs[1]["mass"] = 1.01
    assert not conservation_report(recs, kind="diffuse")["pass"]


def test_aalpha_membership():
    d = Domain.ball(1.0, 3)
    A = AalphaSet(d, 10.0)
    assert A.contains([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert not A.contains([0.0, 0.0, 0.0], [20.0, 0.0, 0.0])
    assert not A.contains([0.0, 0.0, 0.0], [0.01, 0.0, 0.0])
    # tangent at the wall: kinetic distance zero
    assert not A.contains([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])


def test_frequency_band_and_slope():
    s = np.linspace(0, 10, 50)
    c, C = frequency_sandwich(s, 3.0 / np.sqrt(1 + s**2), -1.0)
    assert c == pytest.approx(3.0) and C == pytest.approx(3.0)
    assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
