import math

import numpy as np
import pytest
from scipy.linalg import expm

from tviss.errors import NonFinite
from tviss.evolution import (
    ClassifyConfig,
    EvolutionFamily,
    appendix_operator,
    check_ubrs,
    classify_stability,
    constant_operator,
    function_operator,
    piecewise_scalar,
)

A2 = np.array([[-1.0, 2.0], [0.0, -3.0]])


@pytest.mark.parametrize("stepper,tol", [("exact", 1e-13), ("rk4", 1e-8), ("implicit-euler", 5e-3)])
def test_constant_generator_matches_expm(stepper, tol):
    W = EvolutionFamily(constant_operator(A2), stepper, 0.01)
    for s, t in [(0.0, 1.0), (0.37, 2.13), (1.0, 1.005)]:
        assert np.max(np.abs(W.matrix(s, t) - expm(A2 * (t - s)))) < tol


def test_scalar_time_varying_closed_form():
    a = lambda t: -1 + 0.5 * math.sin(t)  # noqa: E731
    A = function_operator(lambda t: np.array([[a(t)]]), 1, bound_sup=1.5)
    W = EvolutionFamily(A, "rk4", 0.01)
    for s, t in [(0.0, 3.0), (1.234, 5.5)]:
        exact = math.exp(-(t - s) - 0.5 * (math.cos(t) - math.cos(s)))
        assert W.matrix(s, t)[0, 0] == pytest.approx(exact, rel=1e-8)


def test_piecewise_scalar_exact():
    A = piecewise_scalar([0.0, 1.0, 2.5], [-1.0, 2.0, -0.5])
    W = EvolutionFamily(A, "exact", 0.1)
    assert W.matrix(0.5, 3.0)[0, 0] == pytest.approx(math.exp(-0.5 + 3.0 - 0.25), rel=1e-14)


def test_identity_and_order():
    W = EvolutionFamily(constant_operator(A2), "rk4", 0.05)
    assert np.array_equal(W.matrix(1.0, 1.0), np.eye(2))
    assert np.array_equal(W.propagate(2.0, 2.0, [1.0, 2.0]), [1.0, 2.0])
    with pytest.raises(ValueError):
        W.matrix(2.0, 1.0)


def test_exact_stepper_requires_piecewise_constant():
    A = function_operator(lambda t: np.array([[math.sin(t)]]), 1)
    with pytest.raises(ValueError):
        EvolutionFamily(A, "exact")


def test_overflow_raises():
    W = EvolutionFamily(constant_operator(np.array([[50.0]])), "rk4", 0.1)
    with pytest.raises(NonFinite):
        W.matrix(0.0, 100.0)


def test_off_grid_queries_are_consistent_with_cocycle():
    # off-grid splits change the node set, so agreement is at discretization level
    A = function_operator(lambda t: np.array([[-1.0, math.cos(t)], [0.0, -2.0]]), 2, bound_sup=3.0)
    W = EvolutionFamily(A, "rk4", 0.05)
    assert W.cocycle_residual(0.013, 0.731, 2.2) < 1e-8


def test_appendix_values():
    W = EvolutionFamily(appendix_operator(), "exact", 0.05)
    for k in range(10):
        assert W.matrix(k, k + 1)[0, 0] == pytest.approx(1 / (2 * (k + 1)), abs=1e-12)
        assert W.operator_norm(k + 0.5, k + 1) == pytest.approx(k + 1, abs=1e-12)


def test_classify_scalar_decay():
    W = EvolutionFamily(constant_operator(np.array([[-1.0]])), "exact", 0.05)
    rep = classify_stability(W)
    assert rep.uniformly_exponentially_stable and rep.uniformly_asymptotically_stable
    assert rep.k == pytest.approx(1.0, abs=1e-6)
    assert rep.w == pytest.approx(1.0, abs=1e-6)
    # ln(10) = 2.303 lies in the lag cell ending at 2.35
    assert rep.T_eps[0.1] == pytest.approx(2.35)


def test_classify_rotation_rate():
    W = EvolutionFamily(constant_operator(np.array([[-0.1, 1.0], [-1.0, -0.1]])), "exact", 0.05)
    rep = classify_stability(W)
    assert rep.uniformly_exponentially_stable
    assert rep.w == pytest.approx(0.1, abs=1e-6)


def test_classify_appendix():
    W = EvolutionFamily(appendix_operator(), "exact", 0.05)
    rep = classify_stability(W, ClassifyConfig(t0_grid=tuple(np.arange(0, 10, 0.5))))
    assert rep.uniformly_attractive
    assert not rep.uniformly_stable
    assert not rep.ubrs
    assert not rep.uniformly_exponentially_stable
    assert "UA: yes" in rep.summary() and "US: no" in rep.summary() and "UBRS: no" in rep.summary()


def test_classify_growth_is_not_stable():
    W = EvolutionFamily(constant_operator(np.array([[0.2]])), "exact", 0.05)
    rep = classify_stability(W)
    assert not rep.uniformly_stable
    assert not rep.uniformly_exponentially_stable


def test_check_ubrs_bounded_and_unbounded():
    A = function_operator(lambda t: np.array([[-1 + 0.5 * math.sin(t)]]), 1, bound_sup=1.5)
    ok, K = check_ubrs(EvolutionFamily(A, "rk4", 0.05), np.arange(0, 10, 0.5))
    assert ok and K == pytest.approx(1.0, abs=1e-9)
    ok, K = check_ubrs(EvolutionFamily(appendix_operator(), "exact", 0.05), np.arange(0, 10, 0.5))
    assert not ok and K == pytest.approx(10.0)
