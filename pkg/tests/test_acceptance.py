"""Acceptance gate: one PASS/FAIL line per criterion, each at its stated tolerance."""

import time

import numpy as np
import pytest

import test_properties as props
from tviss import cli
from tviss.config import build_system
from tviss.evolution import EvolutionFamily, constant_operator
from tviss.experiments import _classify, draw_points, run_appendix, run_heat, run_ks
from tviss.lyapunov import build_P, build_V, build_V_from_report, check_dissipation_ISS, lie_derivative
from tviss.presets import DEFAULT_SEED, preset
from tviss.semilinear import zero_term


def _report(record, label, rep):
    failed = [c.line() for c in rep.checks if not c.passed]
    detail = "; ".join(failed) if failed else "; ".join(f"{c.name} ({c.detail})" for c in rep.checks)
    record(label, rep.passed, detail)
    assert rep.passed, "\n".join(failed)


def test_c1_appendix_counterexample(record_criterion):
    _report(record_criterion, "C1 appendix counterexample", run_appendix())


def test_c2_ks_threshold(record_criterion):
    _report(record_criterion, "C2 KS threshold", run_ks(DEFAULT_SEED))


def test_c3_heat_threshold(record_criterion):
    _report(record_criterion, "C3 heat threshold", run_heat(DEFAULT_SEED))


def test_c4_lyapunov_oracle(record_criterion):
    start = time.perf_counter()
    A = constant_operator(np.array([[-1.0]]))
    W = EvolutionFamily(A, "exact", 0.01)
    V = build_V(W, 1.0, 1.0)
    xs = np.linspace(-3, 3, 13)
    err_v = max(abs(V(0.0, [x]) - 0.5 * x * x) for x in xs)
    err_lie = max(abs(lie_derivative(V, A, zero_term(1), 0.0, [x], None, h=1e-5).value + x * x) / (x * x)
                  for x in xs if x != 0)
    P = build_P(A, W, [0.0, 1.0], 1.0, 1.0)
    err_p = abs(P.P(1.0)[0, 0] - 0.5)
    res_p = max(P.residuals.values())
    W2 = EvolutionFamily(constant_operator(np.diag([-1.0, -2.0])), "exact", 0.01)
    V2 = build_V(W2, 1.0, 1.0)
    rng = np.random.default_rng(0)
    err_v2 = max(abs(V2(0.0, x) - (x[0] ** 2 / 2 + x[1] ** 2 / 4)) for x in rng.uniform(-2, 2, (20, 2)))
    runtime = time.perf_counter() - start
    ok = err_v <= 1e-6 and err_lie <= 1e-3 and err_p <= 1e-6 and res_p <= 1e-6 and err_v2 <= 1e-6 and runtime < 1
    record_criterion("C4 Lyapunov construction oracle", ok,
                     f"|V-x^2/2|={err_v:.1e}, Lie rel={err_lie:.1e}, |P-1/2|={err_p:.1e}, residual={res_p:.1e}, "
                     f"diag |V-V*|={err_v2:.1e}, {runtime:.3f} s")
    assert ok


def test_c5_dissipation_bound(record_criterion):
    start = time.perf_counter()
    cfg = preset("tv2")
    model = build_system(cfg)
    W, rep = _classify(cfg, model, lower=False)
    assert rep.uniformly_exponentially_stable
    V = build_V_from_report(W, rep, cfg.solver.T_tail_factor)
    points = draw_points(cfg, model, np.random.default_rng(cfg.seed), 100)
    worst = {}
    for frac in (0.2, 0.5, 0.9):
        d = check_dissipation_ISS(V, model.A, model.B, points, frac * 2 * rep.w / rep.k ** 2, cfg.solver.h)
        worst[frac] = d.max_violation / d.scale
    runtime = time.perf_counter() - start
    ok = all(v <= 1e-2 for v in worst.values()) and runtime < 30
    record_criterion("C5 dissipation bound (squared |B|)", ok,
                     ", ".join(f"eta={f}: {v:.3e}" for f, v in worst.items()) + f", {runtime:.2f} s")
    assert ok


PROPERTIES = [
    props.test_cocycle_residual,
    props.test_propagator_linearity,
    props.test_v_homogeneity,
    props.test_v_local_lipschitz,
    props.test_comparison_monotone_without_forcing,
    props.test_corollary_bound,
    props.test_shift_does_not_increase_sup,
    props.test_friedrichs_rayleigh_quotient,
]


def test_c6_property_suites(record_criterion):
    start = time.perf_counter()
    failures = []
    for prop in PROPERTIES:
        try:
            prop()
        except Exception as exc:  # report every failing property, not just the first
            failures.append(f"{prop.__name__}: {type(exc).__name__}")
    runtime = time.perf_counter() - start
    ok = not failures and runtime < 120
    record_criterion("C6 property suites", ok,
                     f"{len(PROPERTIES) - len(failures)}/{len(PROPERTIES)} suites x 100 cases, {runtime:.1f} s"
                     + (f"; failed: {', '.join(failures)}" if failures else ""))
    assert ok


def test_c7_determinism(record_criterion, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [cli.main(["reproduce", "all", "--out", str(d)]) for d in (a, b)]
    csvs = sorted(p.name for p in a.glob("*.csv"))
    same = all((a / n).read_bytes() == (b / n).read_bytes() for n in csvs)
    ok = codes == [0, 0] and len(csvs) == 3 and same
    record_criterion("C7 determinism", ok, f"{len(csvs)} CSVs byte-identical={same}, exit codes {codes}")
    assert ok
