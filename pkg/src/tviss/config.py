"""Experiment configuration: INI parsing, validation, and system assembly."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from . import signals
from .comparison import linear
from .errors import ConfigError
from .evolution import (
    EvolutionFamily,
    TimeVaryingOperator,
    appendix_operator,
    constant_operator,
    function_operator,
    piecewise_scalar,
)
from .pde import Grid1D, HeatConfig, KSConfig, R_KINDS, heat_input_gain, heat_operator, ks_operator, smooth_profiles
from .semilinear import NonlinearTerm, input_term, sum_terms, zero_term

SYSTEM_KINDS = ("matrix-constant", "matrix-timevarying-expr", "piecewise-scalar", "appendix", "pde-heat", "pde-ks")
PIECE_KINDS = ("const", "sine", "ramp", "exp", "sample-grid")
NONLINEARITIES = ("none", "square", "bilinear")

_EXPR_NS = {name: getattr(np, name) for name in ("sin", "cos", "exp", "sqrt", "tanh", "abs", "log")}
_EXPR_NS.update(pi=math.pi, e=math.e)


def compile_expr(text: str, key: str) -> Callable[[float], float]:
    try:
        code = compile(text, key, "eval")
    except SyntaxError as exc:
        raise ConfigError(f"{key}: cannot parse expression {text!r}") from exc
    for name in code.co_names:
        if name not in _EXPR_NS and name != "t":
            raise ConfigError(f"{key}: unknown name {name!r} in expression")

    def fn(t):
        return eval(code, {"__builtins__": {}}, dict(_EXPR_NS, t=t))

    try:
        float(np.asarray(fn(0.0)).ravel()[0])
    except Exception as exc:
        raise ConfigError(f"{key}: expression {text!r} fails at t=0: {exc}") from exc
    return fn


@dataclass
class SystemSpec:
    kind: str = "matrix-constant"
    matrix: str = "-1"
    expr: str = ""
    breakpoints: str = "0"
    values: str = "-1"
    input_matrix: str = ""
    nonlinearity: str = "none"
    gamma: float = 1.0
    bound_sup: float = 0.0


@dataclass
class KSSpec:
    rho: float = 30.0
    n: int = 128
    mu: str = "0.5*(1+sin(t))"


@dataclass
class HeatSpec:
    nu: float = 1.0
    ell: float = 1.0
    omega: float = 1.0
    r: float = 4.0
    n: int = 128
    R: str = "cos"
    input_mode: str = "uniform"


@dataclass
class EnsembleSpec:
    size: int = 4
    x0_min: float = 0.5
    x0_max: float = 1.0
    u_amp: float = 1.0
    t0: str = "0"


@dataclass
class SolverSpec:
    dt: float = 1e-3
    stepper: str = "rk4"
    blowup_cap: float = 1e8
    t_end: float = 5.0
    record_every: int = 10
    family_stepper: str = "auto"
    family_dt: float = 1e-2
    T_tail_factor: float = 10.0
    h: float = 1e-4
    tol_diss: float = 1e-2
    tol_est: float = 1e-6


@dataclass
class ClassifySpec:
    t0_max: float = 10.0
    t0_step: float = 0.5
    lag_step: float = 0.05
    horizon: float = 12.0
    cap: float = 1e6
    growth: float = 1.5
    ubrs_step: float = 0.05
    lower_envelope: bool = False


@dataclass
class CertifySpec:
    points: int = 20
    eta_fractions: str = "0.2, 0.5, 0.9"
    epsilon: float = 0.1
    t_span: float = 3.0
    trajectories: int = 20


@dataclass
class OutputSpec:
    states: bool = False
    plots: bool = True


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    system: SystemSpec = field(default_factory=SystemSpec)
    ks: KSSpec = field(default_factory=KSSpec)
    heat: HeatSpec = field(default_factory=HeatSpec)
    input: list = field(default_factory=lambda: [(0.0, "const", {"value": 0.0})])
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    classify: ClassifySpec = field(default_factory=ClassifySpec)
    certify: CertifySpec = field(default_factory=CertifySpec)
    output: OutputSpec = field(default_factory=OutputSpec)


SECTIONS = {"system": SystemSpec, "ks": KSSpec, "heat": HeatSpec, "ensemble": EnsembleSpec,
            "solver": SolverSpec, "classify": ClassifySpec, "certify": CertifySpec, "output": OutputSpec}


def _convert(raw: str, typ, key: str):
    try:
        if typ is bool or typ == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int or typ == "int":
            return int(raw)
        if typ is float or typ == "float":
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(typ, '__name__', typ)}") from exc


def _parse_piece(key: str, text: str):
    parts = text.split()
    if len(parts) < 2:
        raise ConfigError(f"input.{key}: expected 'start kind [param=value ...]'")
    start = _convert(parts[0], float, f"input.{key}")
    kind = parts[1]
    if kind not in PIECE_KINDS:
        raise ConfigError(f"input.{key}: unknown piece kind {kind!r} (choose from {', '.join(PIECE_KINDS)})")
    params = {}
    for item in parts[2:]:
        if "=" not in item:
            raise ConfigError(f"input.{key}: parameter {item!r} is not name=value")
        name, val = item.split("=", 1)
        if kind == "sample-grid":
            params[name] = [_convert(v, float, f"input.{key}.{name}") for v in val.split(":")]
        else:
            params[name] = _convert(val, float, f"input.{key}.{name}")
    return start, kind, params


def parse_config(text: str, name: str = "experiment") -> ExperimentConfig:
    """Parse INI text into an :class:`ExperimentConfig` and validate it."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = ExperimentConfig(name=name)
    for section in parser.sections():
        if section == "input":
            pieces = []
            for key, val in parser.items("input"):
                if not key.startswith("piece"):
                    raise ConfigError(f"input.{key}: unknown key (use piece0, piece1, ...)")
                pieces.append(_parse_piece(key, val))
            cfg.input = sorted(pieces, key=lambda p: p[0])
            continue
        if section == "run":
            for key, val in parser.items("run"):
                if key == "seed":
                    cfg.seed = _convert(val, int, "run.seed")
                elif key == "name":
                    cfg.name = val.strip()
                else:
                    raise ConfigError(f"run.{key}: unknown key")
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        spec = getattr(cfg, section)
        types = {f.name: f.type for f in fields(spec)}
        for key, val in parser.items(section):
            if key not in types:
                raise ConfigError(f"{section}.{key}: unknown key")
            setattr(spec, key, _convert(val, types[key], f"{section}.{key}"))
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, name=str(path))


def _positive(value, key):
    if not (value > 0):
        raise ConfigError(f"{key}: must be positive, got {value}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    s = cfg.system
    if s.kind not in SYSTEM_KINDS:
        raise ConfigError(f"system.kind: unknown kind {s.kind!r} (choose from {', '.join(SYSTEM_KINDS)})")
    if s.nonlinearity not in NONLINEARITIES:
        raise ConfigError(f"system.nonlinearity: unknown value {s.nonlinearity!r}")
    sv = cfg.solver
    for key in ("dt", "blowup_cap", "t_end", "family_dt", "h", "tol_diss", "tol_est"):
        _positive(getattr(sv, key), f"solver.{key}")
    if sv.record_every < 1:
        raise ConfigError("solver.record_every: must be at least 1")
    if sv.stepper not in ("rk4", "implicit-euler"):
        raise ConfigError(f"solver.stepper: unknown stepper {sv.stepper!r}")
    if sv.family_stepper not in ("auto", "exact", "rk4", "implicit-euler"):
        raise ConfigError(f"solver.family_stepper: unknown stepper {sv.family_stepper!r}")
    if sv.T_tail_factor < 5:
        raise ConfigError("solver.T_tail_factor: must be at least 5")
    c = cfg.classify
    for key in ("t0_step", "lag_step", "horizon", "cap", "ubrs_step"):
        _positive(getattr(c, key), f"classify.{key}")
    if c.growth < 1:
        raise ConfigError("classify.growth: must be at least 1")
    if c.t0_max < 0:
        raise ConfigError("classify.t0_max: must be nonnegative")
    e = cfg.ensemble
    if e.size < 0:
        raise ConfigError("ensemble.size: must be nonnegative")
    if not 0 <= e.x0_min <= e.x0_max:
        raise ConfigError("ensemble.x0_min: need 0 <= x0_min <= x0_max")
    if e.u_amp < 0:
        raise ConfigError("ensemble.u_amp: must be nonnegative")
    parse_floats(e.t0, "ensemble.t0")
    _positive(cfg.certify.epsilon, "certify.epsilon")
    _positive(cfg.certify.t_span, "certify.t_span")
    for f in parse_floats(cfg.certify.eta_fractions, "certify.eta_fractions"):
        if not 0 < f < 1:
            raise ConfigError("certify.eta_fractions: each fraction must lie in (0, 1)")
    if s.kind == "pde-ks":
        if cfg.ks.n < 8:
            raise ConfigError("ks.n: the grid needs at least 8 interior points")
        compile_expr(cfg.ks.mu, "ks.mu")
    if s.kind == "pde-heat":
        h = cfg.heat
        _positive(h.nu, "heat.nu")
        _positive(h.ell, "heat.ell")
        if h.n < 8:
            raise ConfigError("heat.n: the grid needs at least 8 interior points")
        if h.r < 0:
            raise ConfigError("heat.r: must be nonnegative")
        if h.R not in R_KINDS:
            raise ConfigError(f"heat.R: unknown kind {h.R!r} (choose from {', '.join(R_KINDS)})")
        if h.input_mode not in ("uniform", "distributed"):
            raise ConfigError(f"heat.input_mode: unknown mode {h.input_mode!r}")
    if s.kind == "matrix-constant":
        parse_matrix(s.matrix, "system.matrix")
    if s.kind == "matrix-timevarying-expr":
        parse_expr_matrix(s.expr, "system.expr")
    if s.kind == "piecewise-scalar":
        bps = parse_floats(s.breakpoints, "system.breakpoints")
        vals = parse_floats(s.values, "system.values")
        if len(bps) != len(vals) or not bps or bps[0] != 0 or any(b <= a for a, b in zip(bps, bps[1:])):
            raise ConfigError("system.breakpoints: need increasing times from 0, one per entry of system.values")
    return cfg


def parse_floats(text: str, key: str) -> list[float]:
    return [_convert(v, float, key) for v in text.replace(",", " ").split()]


def parse_matrix(text: str, key: str) -> np.ndarray:
    rows = [parse_floats(r, key) for r in text.split(";") if r.strip()]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ConfigError(f"{key}: rows must be separated by ';' and have equal length")
    return np.array(rows, dtype=float)


def parse_expr_matrix(text: str, key: str):
    rows = [[e.strip() for e in r.split(",")] for r in text.split(";") if r.strip()]
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"{key}: need a square matrix of expressions, rows separated by ';'")
    return [[compile_expr(e, f"{key}[{i},{j}]") for j, e in enumerate(r)] for i, r in enumerate(rows)]


# -- assembly -----------------------------------------------------------------


def build_piece(kind: str, start: float, params: dict):
    try:
        if kind == "const":
            return signals.const_piece(params.get("value", 0.0))
        if kind == "sine":
            return signals.sine_piece(params.get("amp", 1.0), params.get("freq", 1.0), params.get("phase", 0.0),
                                      params.get("offset", 0.0))
        if kind == "ramp":
            return signals.ramp_piece(params.get("value", 0.0), params.get("slope", 0.0), start)
        if kind == "exp":
            return signals.exp_piece(params.get("c", 1.0), params.get("rate", 1.0))
        return signals.grid_piece(params["times"], params["values"])
    except KeyError as exc:
        raise ConfigError(f"input: piece kind {kind} needs parameter {exc}") from exc


def build_input(cfg: ExperimentConfig) -> signals.InputSignal:
    spec = [(start, build_piece(kind, start, params)) for start, kind, params in cfg.input]
    if not spec or spec[0][0] != 0:
        raise ConfigError("input: the first piece must start at 0")
    return signals.from_pieces(spec)


@dataclass
class SystemModel:
    """Everything the commands need about one configured system."""

    name: str
    A: TimeVaryingOperator
    Psi: NonlinearTerm
    B: np.ndarray | None
    b_sup: float
    family_stepper: str
    linear: bool
    x_weight: float
    u_weight: float
    random_state: Callable[[np.random.Generator, int], np.ndarray]
    make_input: Callable[[float], signals.InputSignal]
    ks: KSConfig | None = None
    heat: HeatConfig | None = None

    def family(self, dt: float) -> EvolutionFamily:
        return EvolutionFamily(self.A, self.family_stepper, dt)


def _random_directions(dim):
    def draw(rng, count):
        v = rng.standard_normal((count, dim))
        return v / np.linalg.norm(v, axis=1)[:, None]
    return draw


def build_system(cfg: ExperimentConfig) -> SystemModel:
    s = cfg.system
    base_u = build_input(cfg)
    fstep = cfg.solver.family_stepper

    if s.kind == "pde-ks":
        k = cfg.ks
        mu_fn = compile_expr(k.mu, "ks.mu")
        kcfg = KSConfig(k.rho, mu_fn, Grid1D(1.0, k.n))
        A, Psi = ks_operator(kcfg)
        grid = kcfg.grid
        return SystemModel(f"KS rho={k.rho:g}", A, Psi, None, 1.0, "implicit-euler" if fstep == "auto" else fstep,
                           False, grid.dz, 1.0,
                           lambda rng, c: smooth_profiles(grid, rng, c, clamped=True),
                           lambda amp: signals.scaled(base_u, amp), ks=kcfg)
    if s.kind == "pde-heat":
        h = cfg.heat
        hcfg = HeatConfig(h.nu, h.omega, h.r, None, h.R, Grid1D(h.ell, h.n), h.input_mode)
        A, Psi = heat_operator(hcfg)
        grid = hcfg.grid
        if h.input_mode == "uniform":
            make = lambda amp: signals.scaled(base_u, amp)  # noqa: E731
            B, u_w = np.ones((grid.n, 1)), 1.0
        else:
            prof = np.sin(np.pi * grid.z / grid.ell)
            prof = prof / grid.norm(prof)
            make = lambda amp: signals.with_profile(signals.scaled(base_u, amp), prof, grid.dz)  # noqa: E731
            B, u_w = np.eye(grid.n), grid.dz
        return SystemModel(f"heat r+omega={h.r + abs(h.omega):g}", A, Psi, B, heat_input_gain(hcfg),
                           "implicit-euler" if fstep == "auto" else fstep, True, grid.dz, u_w,
                           lambda rng, c: smooth_profiles(grid, rng, c), make, heat=hcfg)

    if s.kind == "appendix":
        A = appendix_operator()
        auto = "exact"
    elif s.kind == "piecewise-scalar":
        A = piecewise_scalar(parse_floats(s.breakpoints, "system.breakpoints"), parse_floats(s.values, "system.values"))
        auto = "exact"
    elif s.kind == "matrix-constant":
        A = constant_operator(parse_matrix(s.matrix, "system.matrix"))
        if A(0).shape[0] != A(0).shape[1]:
            raise ConfigError("system.matrix: must be square")
        auto = "exact"
    else:
        entries = parse_expr_matrix(s.expr, "system.expr")
        dim = len(entries)

        def fn(t, entries=entries):
            return np.array([[float(e(t)) for e in row] for row in entries])

        bound = s.bound_sup if s.bound_sup > 0 else max(
            float(np.linalg.norm(fn(t), 2)) for t in np.linspace(0.0, 100.0, 2001))
        A = function_operator(fn, dim, bound)
        auto = "rk4"
    dim = A.dim
    B = parse_matrix(s.input_matrix, "system.input_matrix") if s.input_matrix.strip() else np.eye(dim)
    if B.shape[0] != dim:
        raise ConfigError(f"system.input_matrix: needs {dim} rows")
    m = B.shape[1]
    Psi = input_term(B)
    linear = True
    if s.nonlinearity == "square":
        Psi = sum_terms(Psi, NonlinearTerm(lambda t, x, u: x * x, name="x^2"))
        linear = False
    elif s.nonlinearity == "bilinear":
        g = s.gamma
        Psi = NonlinearTerm(lambda t, x, u: g * math.sin(t) * x * float(np.ravel(u)[0] if np.ndim(u) else u),
                            h3_bound=(abs(g), linear(1.0)), name="bilinear")
        linear = False
    if m > 1:
        make = lambda amp: signals.InputSignal(  # noqa: E731
            base_u.breakpoints,
            tuple(signals.Piece(lambda t, f=p.f: np.multiply.outer(amp * np.asarray(f(t), float), np.ones(m)) / math.sqrt(m))
                  for p in base_u.pieces))
    else:
        make = lambda amp: signals.scaled(base_u, amp)  # noqa: E731
    return SystemModel(s.kind, A, Psi, B, float(np.linalg.norm(B, 2)),
                       auto if fstep == "auto" else fstep, linear, 1.0, 1.0, _random_directions(dim), make)


def classify_config(cfg: ExperimentConfig, lower: bool | None = None):
    from .evolution import ClassifyConfig

    c = cfg.classify
    t0s = tuple(float(v) for v in np.arange(0.0, c.t0_max, c.t0_step)) or (0.0,)
    return ClassifyConfig(t0_grid=t0s, lag_step=c.lag_step, horizon=c.horizon, cap=c.cap,
                          growth_factor=c.growth, ubrs_step=c.ubrs_step,
                          lower_envelope=c.lower_envelope if lower is None else lower)


def with_overrides(cfg: ExperimentConfig, dt=None, n=None, rho=None, r_plus_omega=None, seed=None) -> ExperimentConfig:
    if dt is not None:
        cfg.solver = replace(cfg.solver, dt=dt)
    if n is not None:
        cfg.ks = replace(cfg.ks, n=n)
        cfg.heat = replace(cfg.heat, n=n)
    if rho is not None:
        cfg.ks = replace(cfg.ks, rho=rho)
    if r_plus_omega is not None:
        om = cfg.heat.omega
        if r_plus_omega < abs(om):
            raise ConfigError("--r-plus-omega must be at least |heat.omega|")
        cfg.heat = replace(cfg.heat, r=r_plus_omega - abs(om))
    if seed is not None:
        cfg.seed = seed
    return validate(cfg)
