"""Finite-difference models of the Kuramoto-Sivashinsky and heat examples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .comparison import ComparisonFunction, from_callable, linear
from .errors import GridTooCoarse, NotApplicable
from .evolution import TimeVaryingOperator, constant_operator, function_operator, shifted_operator
from .semilinear import NonlinearTerm

MIN_POINTS = 8


@dataclass(frozen=True)
class Grid1D:
    """Interior nodes ``z_i = i * dz`` of ``(0, ell)`` with ``dz = ell / (n + 1)``."""

    ell: float = 1.0
    n: int = 128

    def __post_init__(self):
        if self.n < MIN_POINTS:
            raise GridTooCoarse(f"n={self.n} is below the minimum of {MIN_POINTS}")
        if self.ell <= 0:
            raise ValueError("ell must be positive")

    @property
    def dz(self) -> float:
        return self.ell / (self.n + 1)

    @property
    def z(self) -> np.ndarray:
        return self.dz * np.arange(1, self.n + 1)

    @property
    def norm_weight(self) -> float:
        return self.dz

    def norm(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(self.dz * np.dot(x, x)))

    def inner(self, x, y) -> float:
        return float(self.dz * np.dot(x, y))


def second_difference(grid: Grid1D) -> np.ndarray:
    """Dirichlet ``[1, -2, 1] / dz^2``."""
    n, h2 = grid.n, grid.dz ** 2
    return (np.diag(-2.0 * np.ones(n)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h2


def fourth_difference(grid: Grid1D) -> np.ndarray:
    """Clamped ``[1, -4, 6, -4, 1] / dz^4``.

    The boundary value vanishes and the ghost node beyond it mirrors the
    first interior node (zero slope), which turns the first and last
    diagonal entries into 7 and keeps the matrix symmetric.
    """
    n, h4 = grid.n, grid.dz ** 4
    D = (np.diag(6.0 * np.ones(n)) + np.diag(-4.0 * np.ones(n - 1), 1) + np.diag(-4.0 * np.ones(n - 1), -1)
         + np.diag(np.ones(n - 2), 2) + np.diag(np.ones(n - 2), -2))
    D[0, 0] = D[-1, -1] = 7.0
    return D / h4


def smooth_profiles(grid: Grid1D, rng: np.random.Generator, count: int, modes: int = 4,
                    clamped: bool = False) -> np.ndarray:
    """Random smooth grid functions vanishing at both ends (and with zero slope if ``clamped``)."""
    z = grid.z / grid.ell
    basis = np.array([np.sin(m * np.pi * z) for m in range(1, modes + 1)])
    if clamped:
        basis = basis * np.sin(np.pi * z)
    coef = rng.standard_normal((count, modes)) / np.arange(1, modes + 1)
    out = coef @ basis
    return out / np.sqrt(grid.dz * np.sum(out ** 2, axis=1))[:, None]


# -- Kuramoto-Sivashinsky -----------------------------------------------------


def default_mu(t):
    return 0.5 * (1.0 + np.sin(t))


@dataclass(frozen=True)
class KSConfig:
    rho: float = 30.0
    mu_fn: Callable[[float], float] = default_mu
    grid: Grid1D = field(default_factory=lambda: Grid1D(1.0, 128))


def ks_matrix(cfg: KSConfig) -> np.ndarray:
    return -fourth_difference(cfg.grid) - cfg.rho * second_difference(cfg.grid)


def ks_operator(cfg: KSConfig, mu_check_horizon: float = 100.0) -> tuple[TimeVaryingOperator, NonlinearTerm]:
    """``A = -D4 - rho D2`` and ``psi = -mu(t) x + x |sin t| u / (1 + exp(-z t) x^2)``.

    The input ``u`` is a scalar applied uniformly in space.
    """
    grid = cfg.grid
    ts = np.linspace(0.0, mu_check_horizon, 20001)
    if np.min(np.asarray(cfg.mu_fn(ts), dtype=float)) < 0:
        raise ValueError("damping mu(t) must be nonnegative")
    A = constant_operator(ks_matrix(cfg), weight=grid.dz, bandwidth=2, name=f"KS(rho={cfg.rho:g})")
    A = TimeVaryingOperator(A.dim, A.fn, bound_sup=None, is_constant=True, bandwidth=2, weight=grid.dz,
                            base=A.base, name=A.name)
    z = grid.z
    mu = cfg.mu_fn

    def psi(t, x, u):
        u = float(np.ravel(u)[0]) if np.ndim(u) else float(u)
        return -mu(t) * x + x * abs(math.sin(t)) * u / (1.0 + np.exp(-z * t) * x * x)

    Psi = NonlinearTerm(psi, h3_bound=(1.0, linear(1.0)), x_weight=grid.dz, u_weight=1.0, name="KS nonlinearity")
    return A, Psi


def ks_sigma(cfg: KSConfig) -> float:
    """Smallest eigenvalue of the symmetric part of ``-A``."""
    M = -ks_matrix(cfg)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


@dataclass(frozen=True)
class KSCertificate:
    sigma: float
    Z_fn: Callable
    V_fn: Callable
    theta: ComparisonFunction
    chi: ComparisonFunction

    def sandwich_ok(self, t, x, grid: Grid1D) -> bool:
        n2 = grid.norm(x) ** 2
        z = self.Z_fn(t, x)
        return n2 * (1 - 1e-12) <= z <= 2 * n2 * (1 + 1e-12)


def ks_certificate(cfg: KSConfig) -> KSCertificate:
    """``Z = (1 + e^-t) ||x||^2``, ``V = ln(1 + Z)``, ``theta(s) = sigma s^2/(1+2s^2)``, ``chi(s) = 2s``."""
    sigma = ks_sigma(cfg)
    if sigma <= 0:
        raise NotApplicable(f"sigma(rho={cfg.rho:g}) = {sigma:.6g} is not positive")
    grid = cfg.grid

    def Z_fn(t, x):
        return (1.0 + math.exp(-t)) * grid.norm(x) ** 2

    def V_fn(t, x):
        return math.log1p(Z_fn(t, x))

    theta = from_callable(lambda s: sigma * s * s / (1.0 + 2.0 * s * s), "P", name="theta", sup=sigma / 2)
    return KSCertificate(sigma, Z_fn, V_fn, theta, linear(2.0))


def ks_iiss_gains(sigma: float):
    """``(beta, alpha, mu)`` of the integral estimate assembled from the certificate.

    With ``alpha_1(s) = ln(1+s^2)`` and ``alpha_2(s) = ln(1+2 s^2)`` the decay
    rate in terms of ``V`` is ``(sigma/2)(1 - e^-V)``, whose zero-input flow
    is ``ln(1 + (e^v - 1) e^(-sigma t/2))``.
    """
    beta = ComparisonFunction(
        "KL", lambda s, t: np.sqrt((1.0 + 2.0 * s * s * np.exp(-0.5 * sigma * t)) ** 2 - 1.0), name="beta_KS")
    alpha = from_callable(lambda s: np.sqrt(np.expm1(2.0 * s)), "Kinf", name="alpha_1^-1(2s)")
    mu = linear(4.0)
    return beta, alpha, mu


# -- heat ---------------------------------------------------------------------


def r_cos(r):
    return lambda t: r * math.cos(t)


def r_dither(r):
    return lambda t: r * (0.9 + 0.1 * math.cos(t))


def r_const(r):
    return lambda t: r


R_KINDS = {"cos": r_cos, "dither": r_dither, "const": r_const}


@dataclass(frozen=True)
class HeatConfig:
    """``x_t = nu x_zz + R(t) x + omega sin(z) x + u`` with Dirichlet ends.

    ``R_fn`` returns a scalar (times the identity) or a matrix; ``input_mode``
    is ``uniform`` (scalar input applied at every node) or ``distributed``.
    """

    nu: float = 1.0
    omega: float = 1.0
    r: float = 4.0
    R_fn: Callable | None = None
    R_kind: str = "cos"
    grid: Grid1D = field(default_factory=lambda: Grid1D(1.0, 128))
    input_mode: str = "uniform"

    def R(self):
        return self.R_fn if self.R_fn is not None else R_KINDS[self.R_kind](self.r)


def heat_operator(cfg: HeatConfig, r_check_horizon: float = 20.0) -> tuple[TimeVaryingOperator, NonlinearTerm]:
    grid = cfg.grid
    R = cfg.R()
    ts = np.linspace(0.0, r_check_horizon, 2001)
    sample = [R(t) for t in ts]
    if max(float(np.linalg.norm(np.atleast_2d(v), 2)) for v in sample) > cfg.r * (1 + 1e-12):
        raise ValueError("sup ||R(t)|| exceeds r")
    base = cfg.nu * second_difference(grid) + cfg.omega * np.diag(np.sin(grid.z))
    if np.ndim(sample[0]) == 0:
        A = shifted_operator(base, lambda t: float(R(t)), bandwidth=1, weight=grid.dz, shift_sup=None,
                             name="heat")
    else:
        A = function_operator(lambda t: base + np.asarray(R(t)), grid.n, None, weight=grid.dz, name="heat")
    a = cfg.r + abs(cfg.omega)
    if cfg.input_mode == "uniform":
        ones = np.ones(grid.n)
        Psi = NonlinearTerm(lambda t, x, u: ones * float(np.ravel(u)[0] if np.ndim(u) else u),
                            h2_bound=(a, math.sqrt(grid.ell * grid.n / (grid.n + 1)), np.inf),
                            x_weight=grid.dz, u_weight=1.0, name="uniform input")
    elif cfg.input_mode == "distributed":
        Psi = NonlinearTerm(lambda t, x, u: np.asarray(u, dtype=float), h2_bound=(a, 1.0, np.inf),
                            x_weight=grid.dz, u_weight=grid.dz, name="distributed input")
    else:
        raise ValueError(f"unknown input mode {cfg.input_mode!r}")
    return A, Psi


def heat_input_gain(cfg: HeatConfig) -> float:
    """Norm of the input map from the input space to the discrete L2 state space."""
    return cfg.grid.norm(np.ones(cfg.grid.n)) if cfg.input_mode == "uniform" else 1.0


def laplacian_eigenvalues(grid: Grid1D, nu: float = 1.0) -> np.ndarray:
    """Exact eigenvalues ``4 nu / dz^2 sin^2(k pi dz / (2 ell))`` of the discrete ``-nu d^2/dz^2``."""
    k = np.arange(1, grid.n + 1)
    return 4.0 * nu / grid.dz ** 2 * np.sin(k * np.pi * grid.dz / (2 * grid.ell)) ** 2


def rayleigh_quotient(grid: Grid1D, x) -> float:
    """``||D_h x||^2 / ||x||^2`` with forward differences and zero boundary values."""
    x = np.asarray(x, dtype=float)
    padded = np.concatenate([[0.0], x, [0.0]])
    grad = np.diff(padded) / grid.dz
    return float(np.dot(grad, grad) / np.dot(x, x))


def friedrichs_check(grid: Grid1D, n_random: int = 64, rng: np.random.Generator | None = None) -> float:
    """Smallest Rayleigh quotient over random grid functions and the discrete minimizer."""
    rng = rng if rng is not None else np.random.default_rng(0)
    n = grid.n
    d = np.full(n, 2.0 / grid.dz ** 2)
    e = np.full(n - 1, -1.0 / grid.dz ** 2)
    _, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    best = rayleigh_quotient(grid, vec[:, 0])
    for x in rng.standard_normal((n_random, n)):
        best = min(best, rayleigh_quotient(grid, x))
    for x in smooth_profiles(grid, rng, n_random):
        best = min(best, rayleigh_quotient(grid, x))
    return best


def heat_threshold_check(cfg: HeatConfig, epsilon: float) -> bool:
    """``-2 nu pi^2 / ell^2 + 2 (r + |omega|) + epsilon < 0``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return heat_decay_rate(cfg, epsilon) < 0


def heat_decay_rate(cfg: HeatConfig, epsilon: float) -> float:
    return -2.0 * cfg.nu * math.pi ** 2 / cfg.grid.ell ** 2 + 2.0 * (cfg.r + abs(cfg.omega)) + epsilon


def heat_input_coefficient(cfg: HeatConfig, epsilon: float) -> float:
    """Coefficient of ``|u|^2`` in the bound on the derivative of ``||x||^2``."""
    return (cfg.grid.ell if cfg.input_mode == "uniform" else 1.0) / epsilon
