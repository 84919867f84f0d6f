"""Ensemble simulation, certification, and the pinned reproduction runs."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .comparison import exponential_kl, fit_iss_envelope, linear
from .config import ExperimentConfig, SystemModel, build_system, classify_config, parse_floats, with_overrides
from .errors import NotApplicable
from .evolution import EvolutionFamily, StabilityReport, appendix_operator, classify_stability
from .lyapunov import (
    build_P,
    build_V_from_report,
    build_Z,
    check_dissipation,
    check_dissipation_ISS,
    check_iISS_estimate,
    check_iss_estimate,
    iss_gain_slope,
    z_sandwich,
)
from .pde import (
    Grid1D,
    KSConfig,
    heat_decay_rate,
    heat_input_coefficient,
    heat_threshold_check,
    ks_certificate,
    ks_iiss_gains,
    ks_operator,
    ks_sigma,
    smooth_profiles,
)
from .presets import preset
from .semilinear import Trajectory, solve_mild


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# -- ensembles ----------------------------------------------------------------


def _t0_values(cfg: ExperimentConfig) -> list[float]:
    return parse_floats(cfg.ensemble.t0, "ensemble.t0") or [0.0]


def draw_runs(cfg: ExperimentConfig, model: SystemModel, rng: np.random.Generator, count: int):
    """``(t0, x0, u)`` triples with norms in ``[x0_min, x0_max]`` and input amplitudes in ``[0, u_amp]``."""
    e = cfg.ensemble
    dirs = model.random_state(rng, count) if count else []
    norms = rng.uniform(e.x0_min, e.x0_max, count)
    amps = rng.uniform(0.0, e.u_amp, count)
    t0s = _t0_values(cfg)
    return [(t0s[i % len(t0s)], dirs[i] * norms[i], model.make_input(float(amps[i]))) for i in range(count)]


def draw_points(cfg: ExperimentConfig, model: SystemModel, rng: np.random.Generator, count: int,
                n_times: int = 10, t_max: float = 4.5):
    """``(t, x, u)`` points whose times come from ``n_times`` fixed values (shared quadratures)."""
    times = np.linspace(0.0, t_max, n_times)
    runs = draw_runs(cfg, model, rng, count)
    picks = rng.integers(0, n_times, count)
    return [(float(times[p]), x, u) for p, (_, x, u) in zip(picks, runs)]


@dataclass
class SimulationResult:
    trajectories: list
    members: list
    seed: int

    @property
    def escaped(self) -> int:
        return sum(tr.escaped for tr in self.trajectories)

    def summary(self) -> str:
        lines = [f"generator: numpy PCG64 seed={self.seed}", f"members: {len(self.trajectories)}",
                 f"escaped: {self.escaped}", "member,t0,norm_x0,input_amp,max_norm,escaped,t_escape"]
        for i, (tr, (t0, r0, amp)) in enumerate(zip(self.trajectories, self.members)):
            te = "" if tr.t_escape is None else f"{tr.t_escape:.10g}"
            lines.append(f"{i},{t0:.10g},{r0:.12g},{amp:.12g},{float(np.max(tr.norms)):.12g},{int(tr.escaped)},{te}")
        return "\n".join(lines) + "\n"


def simulate(cfg: ExperimentConfig, jobs: int = 1) -> SimulationResult:
    model = build_system(cfg)
    rng = np.random.default_rng(cfg.seed)
    e, s = cfg.ensemble, cfg.solver
    dirs = model.random_state(rng, e.size) if e.size else []
    norms = rng.uniform(e.x0_min, e.x0_max, e.size)
    amps = rng.uniform(0.0, e.u_amp, e.size)
    t0s = _t0_values(cfg)
    members = [(t0s[i % len(t0s)], float(norms[i]), float(amps[i])) for i in range(e.size)]

    def run(i):
        t0, r0, amp = members[i]
        return solve_mild(model.A, model.Psi, t0, dirs[i] * r0, model.make_input(amp), t0 + s.t_end, s.dt,
                          s.stepper, s.blowup_cap, s.record_every)

    if jobs > 1 and e.size > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trajs = list(pool.map(run, range(e.size)))
    else:
        trajs = [run(i) for i in range(e.size)]
    return SimulationResult(trajs, members, cfg.seed)


# -- certification ------------------------------------------------------------


@dataclass
class CertifyResult:
    system: str
    lines: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    dissipation: dict = field(default_factory=dict)
    envelope_series: list = field(default_factory=list)
    scatter: tuple | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def text(self) -> str:
        return "\n".join([f"system: {self.system}"] + self.lines + [c.line() for c in self.checks]) + "\n"


def _classify(cfg: ExperimentConfig, model: SystemModel, lower: bool | None = None):
    W = model.family(cfg.solver.family_dt)
    return W, classify_stability(W, classify_config(cfg, lower))


def _envelope_series(traj: Trajectory, bound: np.ndarray):
    lags = traj.times - traj.t0
    return [("norm x(t)", lags, traj.norms), ("estimate", lags, bound)]


def certify(cfg: ExperimentConfig) -> CertifyResult:
    """Build and check the certificates appropriate for the configured system."""
    model = build_system(cfg)
    if cfg.system.kind == "pde-ks":
        return _certify_ks(cfg, model)
    if cfg.system.kind == "pde-heat":
        return _certify_heat(cfg, model)
    if not model.linear:
        raise NotApplicable("certification needs a linear input term for matrix systems")
    return _certify_linear(cfg, model)


def _certify_linear(cfg, model) -> CertifyResult:
    out = CertifyResult(model.name)
    W, rep = _classify(cfg, model, lower=True)
    out.lines += rep.summary().splitlines()
    if not rep.uniformly_exponentially_stable:
        raise NotApplicable("the evolution family is not uniformly exponentially stable")
    s = cfg.solver
    V = build_V_from_report(W, rep, s.T_tail_factor)
    out.lines.append(f"V: T_tail={V.T_tail:.6g} upper constant k^2/(2w)={V.upper_constant:.6g} "
                     f"tail bracket coefficient={V.tail_coefficient:.3e}")
    if model.A.bound_sup is not None:
        P = build_P(model.A, W, [0.0, 1.0, 2.0], rep.k, rep.w, s.T_tail_factor)
        res = max(P.residuals.values())
        out.checks.append(Check("operator Lyapunov equality residual", res <= 1e-3 * model.A.dim, f"{res:.3e}"))
    rng = np.random.default_rng(cfg.seed)
    points = draw_points(cfg, model, rng, cfg.certify.points)
    if rep.lower_envelope is not None and rep.lower_envelope[1] > 0 and rep.lower_validated:
        Z = build_Z(V, rep.lower_envelope)
        worst = 0.0
        for t, x, _ in points:
            lo, hi = z_sandwich(Z, x)
            val = Z(t, x)
            worst = max(worst, lo - val, val - hi)
        out.lines.append(f"Z: lower constant M^2/(2 lambda)={Z.lower_constant:.6g}")
        out.checks.append(Check("Z sandwich", worst <= 1e-9, f"worst excess {worst:.3e}"))
    fracs = parse_floats(cfg.certify.eta_fractions, "certify.eta_fractions")
    eta_max = 2 * rep.w / rep.k ** 2
    for frac in fracs:
        d = check_dissipation_ISS(V, model.A, model.B, points, frac * eta_max, s.h)
        out.dissipation[frac] = d
        out.checks.append(Check(f"dissipation eta={frac:g}*2w/k^2", d.relative_violation <= s.tol_diss,
                                f"relative violation {d.relative_violation:.3e} (first-power |B| variant "
                                f"{d.max_violation_linear_B / max(d.scale, 1e-300):.3e})"))
    mid = out.dissipation[fracs[len(fracs) // 2]]
    out.scatter = ([p["rhs"] for p in mid.samples], [p["Vdot"] for p in mid.samples])
    _iss_estimate(cfg, model, rep, out, rng)
    return out


def _iss_estimate(cfg, model, rep: StabilityReport, out: CertifyResult, rng):
    s = cfg.solver
    beta = exponential_kl(rep.k, rep.w)
    slope = iss_gain_slope(rep.k, rep.w, model.b_sup)
    gamma = linear(slope)
    runs = draw_runs(cfg, model, rng, cfg.certify.trajectories)
    est = check_iss_estimate(model.A, model.Psi, runs, beta, gamma, cfg.certify.t_span, s.dt, s.stepper,
                             tol=s.tol_est)
    trajs = [solve_mild(model.A, model.Psi, t0, x0, u, t0 + cfg.certify.t_span, s.dt, s.stepper) for t0, x0, u in runs]
    samples = [(tr.norms[0], u.sup_norm, tr.times - tr.t0, tr.norms) for tr, (_, _, u) in zip(trajs, runs)]
    half = max(1, len(samples) // 2)
    fit = fit_iss_envelope(samples[:half], beta, slope, validation=samples[half:] or samples)
    out.lines.append(f"ISS gain: variation-of-constants slope k|B|/w={slope:.6g}; "
                     f"fitted slope={fit.gamma.params['c']:.6g} (held-out residual {fit.residual:.3e})")
    out.checks.append(Check("ISS estimate beta(|x0|,t-t0)+gamma(|u|)", est.violations == 0 and est.escaped == 0,
                            f"{est.n_trajectories} trajectories, {est.n_checked} samples, worst margin "
                            f"{est.worst_margin:.3e}, worst ratio {est.worst_ratio:.4f}"))
    if trajs:
        tr, (_, _, u) = trajs[0], runs[0]
        out.envelope_series = _envelope_series(tr, beta(tr.norms[0], tr.times - tr.t0) + slope * u.sup_norm)


def _certify_heat(cfg, model) -> CertifyResult:
    out = CertifyResult(model.name)
    hc = model.heat
    eps = cfg.certify.epsilon
    rate = heat_decay_rate(hc, eps)
    coef = heat_input_coefficient(hc, eps)
    out.lines.append(f"threshold: -2 nu pi^2/ell^2 + 2(r+|omega|) + eps = {rate:.6g} (r={hc.r:g}, omega={hc.omega:g})")
    if not heat_threshold_check(hc, eps):
        raise NotApplicable(f"threshold not met: decay coefficient {rate:.6g} >= 0")
    s = cfg.solver
    grid = hc.grid
    rng = np.random.default_rng(cfg.seed)
    points = draw_points(cfg, model, rng, cfg.certify.points)

    def V(t, x):
        return grid.norm(x) ** 2

    d = check_dissipation(V, model.A, model.Psi, points, lambda t, x, nu: rate * grid.norm(x) ** 2 + coef * nu ** 2,
                          h=s.h, stepper="implicit-euler", params={"epsilon": eps, "rate": rate, "coef": coef})
    out.dissipation[eps] = d
    out.scatter = ([p["rhs"] for p in d.samples], [p["Vdot"] for p in d.samples])
    out.checks.append(Check(f"dissipation V=|x|^2 eps={eps:g}", d.relative_violation <= s.tol_diss,
                            f"relative violation {d.relative_violation:.3e}, worst margin {d.max_violation:.4g}"))
    W, rep = _classify(cfg, model)
    out.lines += rep.summary().splitlines()
    if not rep.uniformly_exponentially_stable:
        raise NotApplicable("the linear part is not uniformly exponentially stable")
    _iss_estimate(cfg, model, rep, out, rng)
    return out


def _certify_ks(cfg, model) -> CertifyResult:
    out = CertifyResult(model.name)
    cert = ks_certificate(model.ks)
    out.lines.append(f"sigma(rho={model.ks.rho:g}, n={model.ks.grid.n}) = {cert.sigma:.6g}")
    s = cfg.solver
    rng = np.random.default_rng(cfg.seed)
    points = draw_points(cfg, model, rng, cfg.certify.points)
    sandwich = all(cert.sandwich_ok(t, x, model.ks.grid) for t, x, _ in points)
    out.checks.append(Check("Z sandwich |x|^2 <= Z <= 2|x|^2", sandwich, f"{len(points)} points"))
    d = check_dissipation(cert.V_fn, model.A, model.Psi, points,
                          lambda t, x, nu: -cert.theta(model.ks.grid.norm(x)) + cert.chi(nu),
                          h=s.h, stepper="implicit-euler", params={"sigma": cert.sigma})
    out.dissipation["ks"] = d
    out.scatter = ([p["rhs"] for p in d.samples], [p["Vdot"] for p in d.samples])
    out.checks.append(Check("dissipation dV/dt <= -theta(|x|) + chi(|u|)", d.relative_violation <= s.tol_diss,
                            f"relative violation {d.relative_violation:.3e}, worst margin {d.max_violation:.4g}"))
    beta, alpha, mu = ks_iiss_gains(cert.sigma)
    runs = draw_runs(cfg, model, rng, cfg.certify.trajectories)
    est = check_iISS_estimate(model.A, model.Psi, runs, alpha, mu, beta, cfg.certify.t_span, s.dt,
                              "implicit-euler", tol=s.tol_est)
    out.checks.append(Check("integral estimate beta + alpha(int mu(|u|))", est.violations == 0 and est.escaped == 0,
                            f"{est.n_trajectories} trajectories, worst ratio {est.worst_ratio:.4f}"))
    if runs:
        t0, x0, u = runs[0]
        tr = solve_mild(model.A, model.Psi, t0, x0, u, t0 + cfg.certify.t_span, s.dt, "implicit-euler",
                        record_every=s.record_every)
        from .signals import energy
        e = np.cumsum([energy(u, mu, a, b) for a, b in zip(np.concatenate([[t0], tr.times[:-1]]), tr.times)])
        out.envelope_series = _envelope_series(tr, beta(tr.norms[0], tr.times - t0) + alpha(e))
    return out


# -- pinned reproductions -----------------------------------------------------


@dataclass
class Reproduction:
    name: str
    header: list
    rows: list
    checks: list
    runtime: float
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def run_appendix() -> Reproduction:
    start = time.perf_counter()
    W = EvolutionFamily(appendix_operator(), "exact", 0.05)
    rows = []
    err1 = err2 = 0.0
    for k in range(10):
        a = float(W.matrix(k, k + 1)[0, 0])
        b = W.operator_norm(k + 0.5, k + 1)
        err1 = max(err1, abs(a - 1 / (2 * (k + 1))))
        err2 = max(err2, abs(b - (k + 1)))
        rows.append([k, a, 1 / (2 * (k + 1)), b, float(k + 1)])
    rep = classify_stability(W, classify_config(preset("appendix")))
    checks = [Check("W(k+1,k) = 1/(2(k+1)), k=0..9", err1 <= 1e-12, f"max error {err1:.2e}"),
              Check("|W(k+1,k+1/2)| = k+1, k=0..9", err2 <= 1e-12, f"max error {err2:.2e}")]
    for eps in (0.5, 0.1, 0.01):
        m = 0
        while 2.0 ** (-m) >= eps:
            m += 1
        T = rep.T_eps[eps]
        checks.append(Check(f"T({eps:g}) <= {m + 1}", T is not None and T <= m + 1, f"T={T:.4g}" if T is not None else "T=none"))
    checks += [Check("uniformly attractive", rep.uniformly_attractive, f"UA={rep.uniformly_attractive}"),
               Check("not uniformly stable", not rep.uniformly_stable, f"N={rep.N:.6g}"),
               Check("not UBRS", not rep.ubrs, f"K={rep.K:.6g}")]
    runtime = time.perf_counter() - start
    checks.append(Check("runtime < 1 s", runtime < 1.0, f"{runtime:.3f} s"))
    return Reproduction("appendix", ["k", "W_k1_k", "target_k1_k", "W_k1_khalf", "target_k1_khalf"], rows, checks,
                        runtime, rep.summary().splitlines())


def ks_growth(rho: float, seed: int, count: int = 5, horizon: float = 0.5, dt: float = 1e-3, r0: float = 0.1):
    """Largest ``max ||x(t)|| / ||x0||`` over zero-input runs (escape counts as infinite growth)."""
    cfg = KSConfig(rho)
    A, Psi = ks_operator(cfg)
    rng = np.random.default_rng(seed)
    best = 0.0
    for x0 in smooth_profiles(cfg.grid, rng, count, clamped=True) * r0:
        tr = solve_mild(A, Psi, 0.0, x0, None, horizon, dt, "implicit-euler", record_every=10)
        best = max(best, math.inf if tr.escaped else float(tr.norms.max() / tr.norms[0]))
    return best


def run_ks(seed: int) -> Reproduction:
    start = time.perf_counter()
    rows = []
    sig = {}
    for n in (128, 256):
        for rho in (0.0, 30.0, 45.0):
            sig[(n, rho)] = ks_sigma(KSConfig(rho, grid=Grid1D(1.0, n)))
            rows.append([n, rho, sig[(n, rho)], int(np.sign(sig[(n, rho)]))])
    checks = [
        Check("sigma(30) > 0 at n=128", sig[(128, 30.0)] > 0, f"{sig[(128, 30.0)]:.6g}"),
        Check("sigma(45) < 0 at n=128", sig[(128, 45.0)] < 0, f"{sig[(128, 45.0)]:.6g}"),
        Check("signs agree at n=256", np.sign(sig[(256, 30.0)]) == np.sign(sig[(128, 30.0)])
              and np.sign(sig[(256, 45.0)]) == np.sign(sig[(128, 45.0)]),
              f"{sig[(256, 30.0)]:.6g}, {sig[(256, 45.0)]:.6g}"),
    ]
    cert = certify(preset("ks", seed))
    d = cert.dissipation["ks"]
    checks.append(Check("rho=30 dissipation on 20 points", d.relative_violation <= 1e-2 and len(d.samples) == 20,
                        f"relative violation {d.relative_violation:.3e}"))
    checks += [c for c in cert.checks if not c.name.startswith("dissipation")]
    try:
        certify(with_overrides(preset("ks", seed), rho=45.0))
        checks.append(Check("rho=45 certificate refused", False, "certificate was issued"))
    except NotApplicable as exc:
        checks.append(Check("rho=45 certificate refused", True, str(exc)))
    g = ks_growth(45.0, seed)
    checks.append(Check("rho=45 zero-input growth >= 10x", g >= 10, f"growth factor {g:.4g}"))
    runtime = time.perf_counter() - start
    checks.append(Check("runtime < 120 s", runtime < 120, f"{runtime:.2f} s"))
    return Reproduction("ks", ["n", "rho", "sigma", "sign"], rows, checks, runtime, cert.lines)


def run_heat(seed: int) -> Reproduction:
    start = time.perf_counter()
    rows, checks, notes = [], [], []
    for total in (5.0, 9.0, 12.0):
        cfg = with_overrides(preset("heat", seed), r_plus_omega=total)
        model = build_system(cfg)
        eps = cfg.certify.epsilon
        _, rep = _classify(cfg, model)
        rows.append([total, heat_decay_rate(model.heat, eps), int(heat_threshold_check(model.heat, eps)),
                     int(rep.uniformly_exponentially_stable), rep.w, rep.N])
        if total == 12.0:
            checks.append(Check("r+omega=12 not UES (zero-input growth)", not rep.uniformly_exponentially_stable,
                                f"fitted rate w={rep.w:.4g}, N={rep.N:.4g}"))
    cert = certify(with_overrides(preset("heat", seed), r_plus_omega=5.0))
    notes += cert.lines
    checks += [Check(f"r+omega=5 {c.name}", c.passed, c.detail) for c in cert.checks]
    runtime = time.perf_counter() - start
    checks.append(Check("runtime < 60 s", runtime < 60, f"{runtime:.2f} s"))
    return Reproduction("heat", ["r_plus_omega", "threshold_coefficient", "certified", "classified_UES", "w", "N"],
                        rows, checks, runtime, notes)


REPRODUCTIONS = {"appendix": lambda seed: run_appendix(), "ks": run_ks, "heat": run_heat}
