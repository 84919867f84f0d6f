"""Evolution families of time-varying linear systems and their stability taxonomy."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm, solve_banded

from .errors import InconclusiveHorizon, NonFinite

STEPPERS = ("exact", "rk4", "implicit-euler")


@dataclass(frozen=True)
class TimeVaryingOperator:
    """``t -> A(t)``, a ``dim x dim`` real matrix (or ``dim x m`` for input maps).

    When ``base`` is set the operator is ``base + shift(t) * I`` (``shift``
    may be ``None`` for a constant operator); implicit stepping then uses a
    banded solve with half-bandwidth ``bandwidth``.  ``weight`` is the inner
    product weight of the state space (``dz`` for grid functions).
    """

    dim: int
    fn: Callable[[float], np.ndarray]
    bound_sup: float | None = None
    breakpoints: tuple[float, ...] = ()
    is_constant: bool = False
    bandwidth: int | None = None
    weight: float = 1.0
    base: np.ndarray | None = None
    shift: Callable[[float], float] | None = None
    name: str = "A"

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.fn(float(t)), dtype=float)

    def piece_at(self, t_mid: float) -> Callable[[float], np.ndarray]:
        return self.__call__

    def breakpoints_in(self, s: float, t: float) -> list[float]:
        return [b for b in self.breakpoints if s < b < t]

    def segments(self, s: float, t: float):
        raise TypeError(f"{self.name} is not piecewise constant")

    @property
    def piecewise_constant(self) -> bool:
        return False


@dataclass(frozen=True)
class PiecewiseConstantOperator(TimeVaryingOperator):
    """Right-continuous piecewise-constant generator.

    ``segment`` maps ``t`` to ``(start, end, value)`` of the segment with
    ``start <= t < end``.
    """

    segment: Callable[[float], tuple[float, float, np.ndarray]] | None = None

    def __call__(self, t: float) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.segment(float(t))[2], dtype=float))

    def piece_at(self, t_mid: float):
        value = self(t_mid)
        return lambda t: value

    def segments(self, s: float, t: float):
        out = []
        a = s
        while a < t:
            start, end, value = self.segment(a)
            if end <= a:
                raise ValueError("segment rule does not advance")
            b = min(end, t)
            out.append((a, b, np.atleast_2d(np.asarray(value, dtype=float))))
            a = b
        return out

    def breakpoints_in(self, s: float, t: float) -> list[float]:
        return [b for _, b, _ in self.segments(s, t)[:-1]]

    @property
    def piecewise_constant(self) -> bool:
        return True


def constant_operator(A, weight: float = 1.0, bandwidth: int | None = None, name: str = "A") -> TimeVaryingOperator:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return TimeVaryingOperator(A.shape[0], lambda t: A, bound_sup=float(np.linalg.norm(A, 2)),
                               is_constant=True, bandwidth=bandwidth, weight=weight,
                               base=A if bandwidth is not None else None, name=name)


def function_operator(fn: Callable[[float], np.ndarray], dim: int, bound_sup: float | None = None,
                      weight: float = 1.0, name: str = "A") -> TimeVaryingOperator:
    return TimeVaryingOperator(dim, fn, bound_sup=bound_sup, weight=weight, name=name)


def shifted_operator(base: np.ndarray, shift: Callable[[float], float], bandwidth: int,
                     weight: float = 1.0, shift_sup: float | None = None, name: str = "A") -> TimeVaryingOperator:
    """``A(t) = base + shift(t) I`` with a banded ``base``."""
    base = np.asarray(base, dtype=float)
    eye = np.eye(base.shape[0])
    bound = None if shift_sup is None else float(np.linalg.norm(base, 2) + shift_sup)
    return TimeVaryingOperator(base.shape[0], lambda t: base + shift(t) * eye, bound_sup=bound,
                               bandwidth=bandwidth, weight=weight, base=base, shift=shift, name=name)


def piecewise_scalar(breakpoints: Sequence[float], values: Sequence[float]) -> PiecewiseConstantOperator:
    """Scalar generator equal to ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""
    bps = np.asarray(breakpoints, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(bps) != len(vals) or bps[0] != 0 or np.any(np.diff(bps) <= 0):
        raise ValueError("need increasing breakpoints starting at 0, one value each")
    ends = np.append(bps[1:], np.inf)

    def segment(t):
        i = int(np.searchsorted(bps, t, side="right") - 1)
        return bps[i], ends[i], vals[i]

    return PiecewiseConstantOperator(1, None, bound_sup=float(np.max(np.abs(vals))), breakpoints=tuple(bps[1:]),
                                     segment=segment, name="piecewise-scalar")


def appendix_operator() -> PiecewiseConstantOperator:
    """Scalar generator ``-2 ln(2 (k+1)^2)`` on ``[k, k+1/2)``, ``2 ln(k+1)`` on ``[k+1/2, k+1)``.

    Uniformly attractive but neither uniformly stable nor of bounded
    one-step reachability; ``sup |A|`` is infinite.
    """

    def segment(t):
        k = math.floor(t)
        if t - k < 0.5:
            return float(k), k + 0.5, -2.0 * math.log(2.0 * (k + 1) ** 2)
        return k + 0.5, float(k + 1), 2.0 * math.log(k + 1)

    return PiecewiseConstantOperator(1, None, bound_sup=None, segment=segment, name="appendix")


def _banded(base: np.ndarray, bw: int) -> np.ndarray:
    n = base.shape[0]
    ab = np.zeros((2 * bw + 1, n))
    for d in range(-bw, bw + 1):
        diag = np.diagonal(base, d)
        if d >= 0:
            ab[bw - d, d:] = diag
        else:
            ab[bw - d, : n + d] = diag
    return ab


@dataclass
class EvolutionFamily:
    """Propagator ``W(t, s)`` of ``x' = A(t) x`` on a fixed step grid ``j * dt``.

    Steps are split at the grid nodes and at generator breakpoints.  Full
    grid cells are memoized (bounded by ``max_cache_bytes``) and off-grid
    queries are composed through the cocycle identity.
    """

    generator: TimeVaryingOperator
    stepper: str = "rk4"
    dt: float = 1e-2
    max_cache_bytes: float = 2e8
    _cells: OrderedDict = field(default_factory=OrderedDict, init=False, repr=False)
    _banded_base: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.stepper not in STEPPERS:
            raise ValueError(f"unknown stepper {self.stepper!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.stepper == "exact" and not (self.generator.is_constant or self.generator.piecewise_constant):
            raise ValueError("the exact stepper needs a constant or piecewise-constant generator")
        if self.generator.base is not None and self.generator.bandwidth is not None:
            self._banded_base = _banded(self.generator.base, self.generator.bandwidth)
        self._cache_cap = max(64, int(self.max_cache_bytes / (8.0 * self.dim ** 2)))

    @property
    def dim(self) -> int:
        return self.generator.dim

    @property
    def weight(self) -> float:
        return self.generator.weight

    # -- step grid -----------------------------------------------------------

    def nodes(self, s: float, t: float) -> list[float]:
        """Step nodes in ``[s, t]``: grid points ``j * dt``, breakpoints, and the ends."""
        eps = 1e-11 * max(1.0, abs(t))
        j0 = math.floor(s / self.dt + 1e-9) + 1
        j1 = math.ceil(t / self.dt - 1e-9) - 1
        pts = [j * self.dt for j in range(j0, j1 + 1)]
        pts += self.generator.breakpoints_in(s, t)
        pts = sorted(p for p in pts if s + eps < p < t - eps)
        out = [s]
        for p in pts:
            if p - out[-1] > eps:
                out.append(p)
        out.append(t)
        return out

    def _cell_index(self, a: float, b: float) -> int | None:
        j = round(a / self.dt)
        tol = 1e-11 * max(1.0, abs(b))
        if abs(a - j * self.dt) <= tol and abs(b - (j + 1) * self.dt) <= tol:
            return j
        return None

    # -- single steps --------------------------------------------------------

    def _rk4(self, a: float, b: float, X: np.ndarray) -> np.ndarray:
        f = self.generator.piece_at(0.5 * (a + b))
        h = b - a
        Am, Ah = f(a + 0.5 * h), None
        k1 = f(a) @ X
        k2 = Am @ (X + 0.5 * h * k1)
        k3 = Am @ (X + 0.5 * h * k2)
        Ah = f(b)
        k4 = Ah @ (X + h * k3)
        return X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def _implicit(self, a: float, b: float, X: np.ndarray) -> np.ndarray:
        h = b - a
        g = self.generator
        if self._banded_base is not None:
            ab = -h * self._banded_base
            bw = g.bandwidth
            ab[bw] += 1.0 - h * (g.shift(b) if g.shift is not None else 0.0)
            return solve_banded((bw, bw), ab, X)
        M = np.eye(self.dim) - h * g.piece_at(0.5 * (a + b))(b)
        return np.linalg.solve(M, X)

    def _step(self, a: float, b: float, X: np.ndarray) -> np.ndarray:
        if self.stepper == "implicit-euler":
            return self._implicit(a, b, X)
        return self._rk4(a, b, X)

    def _cell(self, j: int, a: float, b: float) -> np.ndarray:
        key = None if self.generator.is_constant else j
        M = self._cells.get(key)
        if M is None:
            M = self._step(a, b, np.eye(self.dim))
            self._cells[key] = M
            if len(self._cells) > self._cache_cap:
                self._cells.popitem(last=False)
        else:
            self._cells.move_to_end(key)
        return M

    def _exact(self, s: float, t: float) -> np.ndarray:
        g = self.generator
        if g.is_constant:
            key = ("exp", round(t - s, 14))
            M = self._cells.get(key)
            if M is None:
                M = self._cells[key] = expm(g(s) * (t - s))
                if len(self._cells) > self._cache_cap:
                    self._cells.popitem(last=False)
            return M
        segs = g.segments(s, t)
        if self.dim == 1:
            return np.array([[math.exp(sum(v[0, 0] * (b - a) for a, b, v in segs))]])
        M = np.eye(self.dim)
        for a, b, v in segs:
            M = expm(v * (b - a)) @ M
        return M

    # -- public queries ------------------------------------------------------

    def matrix(self, s: float, t: float) -> np.ndarray:
        """Propagator matrix ``W(t, s)``."""
        if t < s:
            raise ValueError("need t >= s")
        if t == s:
            return np.eye(self.dim)
        if self.stepper == "exact":
            M = self._exact(s, t)
        else:
            nodes = self.nodes(s, t)
            M = None
            with np.errstate(over="ignore", invalid="ignore"):
                for a, b in zip(nodes[:-1], nodes[1:]):
                    j = self._cell_index(a, b)
                    if j is not None:
                        C = self._cell(j, a, b)
                        M = C.copy() if M is None else C @ M
                    else:
                        M = self._step(a, b, np.eye(self.dim) if M is None else M)
        if not np.all(np.isfinite(M)):
            raise NonFinite(f"propagator W({t}, {s}) overflowed")
        return M

    def propagate(self, s: float, t: float, x) -> np.ndarray:
        """``W(t, s) x``; identity when ``t == s``."""
        x = np.asarray(x, dtype=float)
        if t == s:
            return x.copy()
        if t < s:
            raise ValueError("need t >= s")
        if self.stepper == "exact":
            y = self.matrix(s, t) @ x
        else:
            nodes = self.nodes(s, t)
            y = x
            for a, b in zip(nodes[:-1], nodes[1:]):
                y = self._step(a, b, y)
        if not np.all(np.isfinite(y)):
            raise NonFinite(f"propagated state at t={t} overflowed")
        return y

    def operator_norm(self, s: float, t: float) -> float:
        """Spectral norm of ``W(t, s)`` (weights cancel in the induced norm)."""
        M = self.matrix(s, t)
        if M.size == 1:
            return abs(float(M[0, 0]))
        return float(np.linalg.norm(M, 2))

    def march(self, t0: float, lags: np.ndarray):
        """Propagators ``W(t0 + lag, t0)`` for increasing ``lags`` (first lag 0 allowed)."""
        X = np.eye(self.dim)
        prev = 0.0
        out = []
        for lag in lags:
            if lag > prev:
                X = self.matrix(t0 + prev, t0 + lag) @ X
                prev = lag
            out.append(X)
        return out

    def cocycle_residual(self, s: float, r: float, t: float) -> float:
        return float(np.linalg.norm(self.matrix(s, t) - self.matrix(r, t) @ self.matrix(s, r), 2))


def _singular_extremes(M: np.ndarray) -> tuple[float, float]:
    if M.size == 1:
        v = abs(float(M[0, 0]))
        return v, v
    sv = np.linalg.svd(M, compute_uv=False)
    return float(sv[0]), float(sv[-1])


def ubrs_windows(W: EvolutionFamily, t0_grid: Sequence[float], step: float = 0.05) -> np.ndarray:
    """Per-window constant ``sup ||W(t, t0)||`` over ``t0`` in ``[k, k+1)`` and ``t`` in ``[t0, t0+1]``.

    Both times are sampled with spacing ``step`` starting at the window start.
    """
    m = max(1, int(round(1.0 / step)))
    lags = np.arange(m + 1) * (1.0 / m)
    out = []
    for k in t0_grid:
        best = 1.0
        for j in range(m):
            t0 = k + lags[j]
            for X in W.march(t0, lags):
                best = max(best, _singular_extremes(X)[0])
        out.append(best)
    return np.asarray(out)


def check_ubrs(W: EvolutionFamily, t0_grid: Sequence[float], step: float = 0.05, cap: float = 1e6,
               growth_factor: float = 1.5) -> tuple[bool, float]:
    """``(bounded, K)`` for the one-step reachability constant on the sampled windows.

    ``bounded`` requires ``K`` below ``cap`` and no growth of the windowed
    constant between the first half of the grid and the whole grid.
    """
    ks = ubrs_windows(W, sorted(t0_grid), step)
    K = float(ks.max())
    early = float(ks[: max(1, len(ks) // 2)].max())
    return bool(K < cap and K <= growth_factor * early), K


def ubrs_power_check(W: EvolutionFamily, t0_grid: Sequence[float], K: float, T: float = 3.0,
                     step: float = 0.05) -> bool:
    """Sampled check of ``sup_{t in [t0, t0+T]} ||W(t, t0)|| <= K^ceil(T)``."""
    n = max(1, int(round(T / step)))
    lags = np.linspace(0.0, T, n + 1)
    bound = K ** math.ceil(T) * (1 + 1e-9)
    return all(_singular_extremes(X)[0] <= bound for t0 in t0_grid for X in W.march(t0, lags))


@dataclass(frozen=True)
class ClassifyConfig:
    t0_grid: tuple[float, ...] = tuple(np.arange(0.0, 10.0, 0.5))
    lag_step: float = 0.05
    horizon: float = 12.0
    eps_levels: tuple[float, ...] = (0.5, 0.1, 0.01)
    cap: float = 1e6
    growth_factor: float = 1.5
    ubrs_grid: tuple[float, ...] | None = None
    ubrs_step: float = 0.05
    lower_envelope: bool = False


@dataclass
class StabilityReport:
    uniformly_stable: bool
    N: float
    uniformly_attractive: bool
    T_eps: dict
    T_source: dict
    ubrs: bool
    K: float
    uniformly_exponentially_stable: bool
    k: float
    w: float
    lower_envelope: tuple[float, float] | None
    lower_validated: bool
    lags: np.ndarray
    t0_grid: np.ndarray
    norm_table: np.ndarray
    min_table: np.ndarray

    @property
    def uniformly_asymptotically_stable(self) -> bool:
        return self.uniformly_stable and self.uniformly_attractive

    def summary(self) -> str:
        yes = {True: "yes", False: "no"}
        lines = [
            f"US: {yes[self.uniformly_stable]} N={self.N:.6g}",
            f"UA: {yes[self.uniformly_attractive]} "
            + " ".join(f"T({e:g})={'n/a' if v is None else format(v, '.4g')}[{self.T_source[e]}]"
                       for e, v in self.T_eps.items()),
            f"UBRS: {yes[self.ubrs]} K={self.K:.6g}",
            f"UAS: {yes[self.uniformly_asymptotically_stable]}",
            f"UES: {yes[self.uniformly_exponentially_stable]} k={self.k:.6g} w={self.w:.6g}",
        ]
        if self.lower_envelope is not None:
            M, lam = self.lower_envelope
            lines.append(f"lower envelope: M={M:.6g} lambda={lam:.6g} validated={yes[self.lower_validated]}")
        lines.append("implications: UES => UAS => UA and UBRS: "
                     + ("consistent" if (not self.uniformly_exponentially_stable
                                         or (self.uniformly_attractive and self.ubrs)) else "VIOLATED"))
        return "\n".join(lines)


def _tail_hitting_time(lags, g, eps):
    tail = np.maximum.accumulate(g[::-1])[::-1]
    hit = np.nonzero(tail <= eps)[0]
    return float(lags[hit[0]]) if hit.size else None


def classify_stability(W: EvolutionFamily, cfg: ClassifyConfig = ClassifyConfig()) -> StabilityReport:
    """Sample ``||W(t0 + tau, t0)||`` over a grid and fill a :class:`StabilityReport`."""
    t0s = np.asarray(sorted(cfg.t0_grid), dtype=float)
    n_lag = max(1, int(round(cfg.horizon / cfg.lag_step)))
    lags = np.arange(n_lag + 1) * cfg.lag_step
    table = np.empty((len(t0s), len(lags)))
    mins = np.empty_like(table)
    for i, t0 in enumerate(t0s):
        for j, X in enumerate(W.march(t0, lags)):
            table[i, j], mins[i, j] = _singular_extremes(X)
    if not np.all(np.isfinite(table)):
        raise NonFinite("norm table overflowed")

    half_t0 = max(1, len(t0s) // 2)
    half_lag = max(1, len(lags) // 2)
    N = float(table.max())
    N_early = float(table[:half_t0, :half_lag].max())
    us = bool(N <= cfg.cap and N <= cfg.growth_factor * N_early)

    g = table.max(axis=0)
    g_early = table[:half_t0].max(axis=0)
    pos = g > 0
    slope, _ = np.polyfit(lags[pos], np.log(g[pos]), 1) if np.count_nonzero(pos) > 1 else (0.0, 0.0)
    w = float(-slope)
    k = float(np.max(g * np.exp(w * lags)))

    ubrs_grid = cfg.ubrs_grid if cfg.ubrs_grid is not None else tuple(np.unique(np.floor(t0s)))
    ubrs, K = check_ubrs(W, ubrs_grid, cfg.ubrs_step, cfg.cap, cfg.growth_factor)

    ues = bool(w > 0 and us and ubrs)
    if w <= 0:
        q = max(2, len(g) // 4)
        end = g[-q:]
        if np.all(np.diff(end) < 0) and end[-1] < g.max():
            raise InconclusiveHorizon("majorant slope is nonnegative but the norms still decrease at the horizon")

    T_eps, T_src = {}, {}
    ua = True
    for eps in cfg.eps_levels:
        T = _tail_hitting_time(lags, g, eps)
        if T is not None:
            T_early = _tail_hitting_time(lags, g_early, eps)
            if T_early is not None and T > cfg.growth_factor * T_early + cfg.lag_step:
                ua = False
            T_eps[eps], T_src[eps] = T, "sampled"
        elif ues:
            T_eps[eps], T_src[eps] = max(0.0, math.log(k / eps) / w), "majorant"
        else:
            T_eps[eps], T_src[eps] = None, "none"
            ua = False
    ues = ues and ua

    lower, validated = None, False
    if cfg.lower_envelope:
        lower, validated = _fit_lower(W, t0s, lags, mins.min(axis=0))

    report = StabilityReport(us, N, ua, T_eps, T_src, ubrs, K, ues, max(k, 1.0), w, lower, validated,
                             lags, t0s, table, mins)
    if report.uniformly_exponentially_stable:
        assert report.uniformly_attractive and report.ubrs
    return report


def _fit_lower(W: EvolutionFamily, t0s, lags, m):
    pos = m > 0
    slope, _ = np.polyfit(lags[pos], np.log(m[pos]), 1)
    lam = float(-slope)
    M = float(min(1.0, np.min(m[pos] * np.exp(lam * lags[pos]))))
    step = float(t0s[1] - t0s[0]) if len(t0s) > 1 else 1.0
    held = t0s + 0.5 * step
    ok = True
    for t0 in held:
        for lag, X in zip(lags, W.march(t0, lags)):
            if M * math.exp(-lam * lag) > _singular_extremes(X)[1] * (1 + 1e-9):
                ok = False
    if not ok:
        worst = min(min(_singular_extremes(X)[1] * math.exp(lam * lag) for lag, X in zip(lags, W.march(t0, lags)))
                    for t0 in held)
        M = min(M, worst)
    return (M, lam), ok
