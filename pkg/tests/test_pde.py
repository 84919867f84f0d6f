import math

import numpy as np
import pytest
from scipy.optimize import brentq

from tviss import signals
from tviss.errors import GridTooCoarse, NotApplicable
from tviss.evolution import ClassifyConfig, EvolutionFamily, classify_stability
from tviss.pde import (
    Grid1D,
    HeatConfig,
    KSConfig,
    fourth_difference,
    friedrichs_check,
    heat_decay_rate,
    heat_operator,
    heat_threshold_check,
    ks_certificate,
    ks_iiss_gains,
    ks_operator,
    ks_sigma,
    laplacian_eigenvalues,
    rayleigh_quotient,
    second_difference,
    smooth_profiles,
)


def clamped_beam_eigenvalue():
    # first root of cos(b) cosh(b) = 1 gives the smallest eigenvalue b^4 of d^4 with clamped ends
    b = brentq(lambda s: math.cos(s) * math.cosh(s) - 1.0, 4.0, 5.0, xtol=1e-15)
    return b ** 4


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        Grid1D(1.0, 7)


def test_grid_norm_is_riemann_l2():
    g = Grid1D(1.0, 256)
    # int_0^1 sin^2(pi z) dz = 1/2
    assert g.norm(np.sin(np.pi * g.z)) ** 2 == pytest.approx(0.5, rel=1e-10)


def test_second_difference_spectrum():
    g = Grid1D(2.0, 64)
    ev = np.sort(np.linalg.eigvalsh(-second_difference(g)))
    assert np.allclose(ev, laplacian_eigenvalues(g), rtol=1e-10)
    assert laplacian_eigenvalues(g)[0] == pytest.approx((math.pi / 2.0) ** 2, rel=1e-3)


def test_fourth_difference_is_symmetric_and_consistent():
    g = Grid1D(1.0, 128)
    D = fourth_difference(g)
    assert np.array_equal(D, D.T)
    z = g.z
    # z^2 (1 - z)^2 is clamped at both ends with fourth derivative 24
    interior = (D @ (z ** 2 * (1 - z) ** 2))[2:-2]
    assert np.allclose(interior, 24.0, rtol=1e-8)


@pytest.mark.parametrize("n", [128, 256])
def test_ks_sigma_without_antidiffusion_matches_beam(n):
    sigma = ks_sigma(KSConfig(0.0, grid=Grid1D(1.0, n)))
    assert sigma == pytest.approx(clamped_beam_eigenvalue(), rel=1e-2)


def test_ks_sigma_vanishes_at_buckling_threshold():
    s0 = ks_sigma(KSConfig(0.0, grid=Grid1D(1.0, 256)))
    s_crit = ks_sigma(KSConfig(4 * math.pi ** 2, grid=Grid1D(1.0, 256)))
    assert abs(s_crit) < 1e-3 * s0


def test_ks_sigma_is_decreasing_in_rho():
    vals = [ks_sigma(KSConfig(rho)) for rho in (0, 10, 20, 30, 40, 50)]
    assert np.all(np.diff(vals) < 0)


def test_ks_certificate_refused_beyond_threshold():
    with pytest.raises(NotApplicable):
        ks_certificate(KSConfig(45.0))


def test_ks_negative_damping_rejected():
    with pytest.raises(ValueError):
        ks_operator(KSConfig(30.0, mu_fn=lambda t: np.sin(t)))


def test_ks_certificate_sandwich(rng):
    cfg = KSConfig(30.0)
    cert = ks_certificate(cfg)
    for x in smooth_profiles(cfg.grid, rng, 10, clamped=True) * 0.7:
        for t in (0.0, 1.0, 10.0):
            assert cert.sandwich_ok(t, x, cfg.grid)
    assert cert.theta(1.0) == pytest.approx(cert.sigma / 3)
    assert cert.chi(0.5) == 1.0


def test_ks_iiss_gains_closed_forms():
    beta, alpha, mu = ks_iiss_gains(10.0)
    assert beta(1.0, 0.0) == pytest.approx(math.sqrt(8.0))
    assert beta(1.0, 100.0) < 1e-10
    assert alpha(0.0) == 0.0
    # alpha inverts ln(1 + s^2) / 2
    assert alpha(0.5 * math.log1p(4.0)) == pytest.approx(2.0)
    assert mu(0.25) == 1.0


def test_ks_nonlinearity_input_driven_part(rng):
    cfg = KSConfig(30.0)
    _, Psi = ks_operator(cfg)
    samples = [(float(t), x, float(u)) for t, x, u in
               zip(rng.uniform(0, 5, 20), smooth_profiles(cfg.grid, rng, 20) * 2, rng.uniform(-2, 2, 20))]
    assert Psi.check_h3(samples) <= 1e-12


def test_friedrichs_inequality():
    g = Grid1D(1.0, 128)
    assert friedrichs_check(g) >= math.pi ** 2 * (1 - 1e-3)
    assert rayleigh_quotient(g, np.sin(np.pi * g.z)) == pytest.approx(laplacian_eigenvalues(g)[0], rel=1e-12)


@pytest.mark.parametrize("total,expected", [(5.0, True), (9.0, True), (12.0, False)])
def test_heat_threshold_arithmetic(total, expected):
    cfg = HeatConfig(r=total - 1.0, omega=1.0)
    assert heat_threshold_check(cfg, 0.1) is expected
    assert heat_decay_rate(cfg, 0.1) == pytest.approx(-2 * math.pi ** 2 + 2 * total + 0.1)


def test_heat_threshold_near_pi_squared():
    assert heat_threshold_check(HeatConfig(r=8.8, omega=1.0), 1e-3)
    assert not heat_threshold_check(HeatConfig(r=8.9, omega=1.0), 1e-3)


def test_heat_operator_rejects_large_reaction():
    with pytest.raises(ValueError):
        heat_operator(HeatConfig(r=1.0, R_fn=lambda t: 2.0))


def test_heat_uniform_input_bound(rng):
    cfg = HeatConfig(r=4.0)
    _, Psi = heat_operator(cfg)
    a, b, _ = Psi.h2_bound
    assert a == 5.0
    samples = [(0.0, np.zeros(cfg.grid.n), float(u)) for u in rng.uniform(-3, 3, 10)]
    assert Psi.check_h2(samples) <= 1e-12


def test_heat_zero_input_growth_matches_eigenvalue_sign():
    # with a constant reaction term the growth rate is the top eigenvalue of the frozen matrix
    for total, grows in ((5.0, False), (12.0, True)):
        cfg = HeatConfig(r=total - 1.0, omega=1.0, R_kind="const")
        A, _ = heat_operator(cfg)
        top = np.linalg.eigvalsh(A(0.0))[-1]
        assert bool(top > 0) is grows
        W = EvolutionFamily(A, "implicit-euler", 0.01)
        rep = classify_stability(W, ClassifyConfig(t0_grid=(0.0, 1.0, 2.0, 3.0), horizon=3.0, ubrs_step=0.25))
        assert bool(rep.uniformly_exponentially_stable) is (not grows)


def test_heat_distributed_input_mode():
    cfg = HeatConfig(input_mode="distributed")
    _, Psi = heat_operator(cfg)
    u = np.linspace(0, 1, cfg.grid.n)
    assert np.array_equal(Psi(0.0, np.zeros(cfg.grid.n), u), u)
    with pytest.raises(ValueError):
        heat_operator(HeatConfig(input_mode="boundary"))
