"""Comparison functions and the scalar comparison integrator.

A :class:`ComparisonFunction` wraps either a vectorized closed form or a
piecewise-linear interpolant, tagged with its class (P, K, Kinf, L, KL).
The integrator :func:`comparison_integrate` solves the scalar majorant
equation ``w' = -theta(w) + eta(t)`` with RK4 and nonnegativity clipping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NonFinite, NotUniformlyStable, OutOfRange

KINDS = ("P", "K", "Kinf", "L", "KL")


@dataclass(frozen=True)
class ComparisonFunction:
    """Tagged scalar comparison function.

    ``fn`` is vectorized over numpy arrays.  For ``kind == "KL"`` it takes
    ``(r, t)``.  Piecewise-linear functions also keep their ``nodes`` so that
    inversion can be exact on the node grid.
    """

    kind: str
    fn: Callable
    name: str = "custom"
    nodes: tuple[np.ndarray, np.ndarray] | None = None
    sup: float = np.inf
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown comparison class {self.kind!r}")

    def __call__(self, *args):
        with np.errstate(over="raise", invalid="raise"):
            try:
                out = self.fn(*(np.asarray(a, dtype=float) for a in args))
            except FloatingPointError as exc:
                raise NonFinite(f"{self.name} overflowed") from exc
        if np.ndim(out) == 0:
            return float(out)
        return out


def linear(c: float = 1.0) -> ComparisonFunction:
    if c <= 0:
        raise ValueError("slope must be positive")
    return ComparisonFunction("Kinf", lambda r: c * r, name=f"{c:g}*r", params={"c": c})


def power(c: float, p: float) -> ComparisonFunction:
    if c <= 0 or p <= 0:
        raise ValueError("power law needs c > 0 and p > 0")
    return ComparisonFunction(
        "Kinf", lambda r: c * np.power(r, p), name=f"{c:g}*r^{p:g}", params={"c": c, "p": p}
    )


def from_callable(fn: Callable, kind: str, name: str = "custom", sup: float = np.inf) -> ComparisonFunction:
    return ComparisonFunction(kind, fn, name=name, sup=sup)


def piecewise_linear(xs: Sequence[float], ys: Sequence[float], kind: str = "Kinf") -> ComparisonFunction:
    """Interpolant through ``(xs, ys)``.

    Beyond the last node a Kinf function extends with its last slope; every
    other class is held constant there.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
        raise ValueError("need matching 1-D node arrays with at least two nodes")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("nodes must be strictly increasing")
    slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    def fn(r):
        val = np.interp(r, xs, ys)
        if kind == "Kinf":
            val = np.where(r > xs[-1], ys[-1] + slope * (r - xs[-1]), val)
        return val

    sup = np.inf if kind == "Kinf" else float(ys.max())
    return ComparisonFunction(kind, fn, name="piecewise-linear", nodes=(xs, ys), sup=sup)


def exponential_kl(c: float = 1.0, a: float = 1.0) -> ComparisonFunction:
    """``beta(r, t) = c * r * exp(-a t)``."""
    return ComparisonFunction(
        "KL", lambda r, t: c * r * np.exp(-a * t), name=f"{c:g}*r*exp(-{a:g}t)", params={"c": c, "a": a}
    )


def is_valid(f: ComparisonFunction, r_grid: Sequence[float], t_grid: Sequence[float] | None = None,
             tail_tol: float = 1e-6) -> bool:
    """Sampled check of the defining properties of ``f.kind``."""
    r = np.asarray(r_grid, dtype=float)
    r = np.unique(np.concatenate([[0.0], r[r >= 0]]))
    if f.kind == "KL":
        t = np.unique(np.asarray(t_grid if t_grid is not None else np.linspace(0, 50, 101), dtype=float))
        table = np.array([[f(ri, ti) for ti in t] for ri in r])
        if np.any(table[0] != 0):
            return False
        rows_k = np.all(np.diff(table, axis=0) > 0)
        rows_l = np.all(np.diff(table[1:], axis=1) < 0) and np.all(table[1:, -1] < tail_tol * (1 + r[1:]))
        return bool(rows_k and rows_l)
    vals = np.asarray(f(r), dtype=float)
    if f.kind == "L":
        return bool(np.all(np.diff(vals) < 0) and vals[-1] < tail_tol)
    if vals[0] != 0 or np.any(vals[1:] <= 0):
        return False
    if f.kind == "P":
        return True
    if np.any(np.diff(vals) <= 0):
        return False
    if f.kind == "Kinf":
        far = float(f(r[-1] * 10 + 1))
        return far > vals[-1]
    return True


def monotone_inverse(f: ComparisonFunction, y: float, tol: float = 1e-12) -> float:
    """Solve ``f(x) = y`` for a strictly increasing ``f``."""
    if f.kind not in ("K", "Kinf"):
        raise ValueError("inverse requires a K or Kinf function")
    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0:
        return 0.0
    if f.nodes is not None:
        xs, ys = f.nodes
        if y <= ys[-1]:
            return float(np.interp(y, ys, xs))
        if f.kind == "K":
            raise OutOfRange(f"{y} exceeds sup {ys[-1]}")
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return float(xs[-1] + (y - ys[-1]) / slope)
    if y >= f.sup:
        raise OutOfRange(f"{y} exceeds sup {f.sup}")
    hi = 1.0
    for _ in range(2000):
        if f(hi) >= y:
            break
        hi *= 2.0
    else:
        raise OutOfRange(f"no preimage of {y} found below {hi}")
    x = brentq(lambda s: f(s) - y, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(x) - y) > tol * (1 + y):
        raise OutOfRange(f"inverse residual {abs(f(x) - y):.3e} above tolerance")
    return float(x)


@dataclass(frozen=True)
class SampledBound:
    """Sampled majorant ``omega(t)`` on a time grid."""

    t: np.ndarray
    omega: np.ndarray

    def at(self, t):
        return np.interp(t, self.t, self.omega)


def _eta_pieces(eta, t0, t1):
    if eta is None:
        return [(t0, t1, lambda s: 0.0 * s)]
    return eta.pieces_on(t0, t1)


def comparison_integrate(theta: ComparisonFunction, omega0: float, eta, t0: float, t1: float,
                         dt: float) -> SampledBound:
    """Integrate ``w' = -theta(w) + eta(t)`` with RK4, clipped at zero.

    ``eta`` is a scalar nonnegative :class:`~tviss.signals.InputSignal` or
    ``None`` for zero forcing.  Steps are restarted at every breakpoint of
    ``eta``; inside a piece the piece's own formula is used at both step
    ends, so the right limit at a breakpoint starts the next piece.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if omega0 < 0:
        raise ValueError("omega0 must be nonnegative")

    def rate(w, e):
        val = -float(theta(max(w, 0.0))) + e
        if not np.isfinite(val):
            raise NonFinite("theta evaluation is not finite")
        return val

    ts = [t0]
    ws = [float(omega0)]
    w = float(omega0)
    for a, b, piece in _eta_pieces(eta, t0, t1):
        n = max(1, int(np.ceil((b - a) / dt - 1e-9)))
        grid = np.linspace(a, b, n + 1)
        ev = np.abs(np.asarray(piece(np.concatenate([grid, 0.5 * (grid[:-1] + grid[1:])])), dtype=float))
        ev = ev.reshape(len(ev), -1)[:, 0] if ev.ndim > 1 else ev
        e_nodes, e_mid = ev[: n + 1], ev[n + 1:]
        for i in range(n):
            h = grid[i + 1] - grid[i]
            k1 = rate(w, e_nodes[i])
            k2 = rate(w + 0.5 * h * k1, e_mid[i])
            k3 = rate(w + 0.5 * h * k2, e_mid[i])
            k4 = rate(w + h * k3, e_nodes[i + 1])
            w = max(0.0, w + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
            if not np.isfinite(w):
                raise NonFinite("comparison solution overflowed")
            ts.append(grid[i + 1])
            ws.append(w)
    return SampledBound(np.asarray(ts), np.asarray(ws))


def lower_rate_envelope(theta: ComparisonFunction, r_max: float) -> ComparisonFunction:
    """Nondecreasing minorant ``s -> min(theta on [s, r_max])`` of a P function.

    For piecewise-linear ``theta`` the minimum over ``[s, r_max]`` is attained
    at ``s`` or at a node, which makes the envelope exact.  For closed forms
    the envelope is taken on a fine sample grid.
    """
    if theta.nodes is not None:
        xs, ys = theta.nodes
        keep = xs <= r_max
        xs_in = np.append(xs[keep], r_max)
        ys_in = np.append(ys[keep], float(theta(r_max)))
    else:
        xs_in = np.linspace(0.0, r_max, 4001)
        ys_in = np.asarray(theta(xs_in), dtype=float)
    suffix = np.minimum.accumulate(ys_in[::-1])[::-1]

    def fn(s):
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(xs_in, s, side="right")
        idx = np.clip(idx, 0, len(xs_in) - 1)
        tail = np.where(s < xs_in[-1], suffix[idx], ys_in[-1])
        return np.minimum(np.asarray(theta(s), dtype=float), tail)

    return ComparisonFunction("P", fn, name="lower-envelope")


def corollary_bound(theta: ComparisonFunction, omega0: float, eta, t0: float, t1: float,
                    dt: float) -> SampledBound:
    """Majorant ``beta(omega0, t - t0) + 2 * int eta`` for the forced comparison solution.

    ``beta`` is the zero-forcing flow of the nondecreasing envelope of
    ``theta`` on ``[0, omega0 + int eta]``.
    """
    eta_int = _cumulative(eta, t0, t1, dt)
    r_max = omega0 + eta_int[1][-1] + 1e-12
    free = comparison_integrate(lower_rate_envelope(theta, r_max), omega0, None, t0, t1, dt)
    return SampledBound(free.t, free.omega + 2.0 * np.interp(free.t, *eta_int))


def _cumulative(eta, t0, t1, dt):
    if eta is None:
        return np.array([t0, t1]), np.zeros(2)
    ts, vals = [t0], [0.0]
    acc = 0.0
    for a, b, piece in eta.pieces_on(t0, t1):
        n = 2 * max(1, int(np.ceil((b - a) / dt / 2)))
        grid = np.linspace(a, b, n + 1)
        f = np.abs(np.asarray(piece(grid), dtype=float))
        seg = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(grid))])
        ts.extend(grid[1:])
        vals.extend(acc + seg[1:])
        acc += seg[-1]
    return np.asarray(ts), np.asarray(vals)


def fit_KL_envelope(trajectories, growth_factor: float = 1.5, slack: float = 1e-9) -> ComparisonFunction:
    """Fit ``beta(r, t) = c r exp(-a t)`` majorizing zero-input norm samples.

    Each trajectory is ``(r0, ts, norms)`` or ``(r0, ts, norms, t0)`` with
    ``ts`` measured from the initial time.  The rate ``a`` comes from a
    least-squares fit of ``log(norm / r0)``; ``c`` is then raised until every
    sample is majorized.  When initial times are given, the constant required
    by the later half of the trajectories is compared with the earlier half;
    growth beyond ``growth_factor`` signals non-uniformity.
    """
    lags, logs, t0s, ratios = [], [], [], []
    for item in trajectories:
        r0, ts, norms = item[0], np.asarray(item[1], float), np.asarray(item[2], float)
        t0 = item[3] if len(item) > 3 else None
        if r0 <= 0:
            if np.any(norms > slack):
                raise NotUniformlyStable("nonzero motion from the zero state")
            continue
        lags.append(ts)
        ratios.append(norms / r0)
        t0s.append(t0)
    if not lags:
        return exponential_kl(1.0, 1.0)
    all_t = np.concatenate(lags)
    all_q = np.concatenate(ratios)
    pos = all_q > 0
    if np.count_nonzero(pos) < 2 or np.ptp(all_t[pos]) == 0:
        raise NotUniformlyStable("too few positive samples to fit a decay rate")
    slope, _ = np.polyfit(all_t[pos], np.log(all_q[pos]), 1)
    a = -slope
    if not a > 0:
        raise NotUniformlyStable(f"fitted decay rate {a:.4g} is not positive")

    def needed(idx):
        return max(1.0, max(float(np.max(ratios[i] * np.exp(a * lags[i]))) for i in idx))

    c = needed(range(len(lags))) * (1 + slack)
    if all(t is not None for t in t0s) and len(set(t0s)) > 1:
        order = sorted(range(len(t0s)), key=lambda i: t0s[i])
        first = order[: max(1, len(order) // 2)]
        if c > growth_factor * needed(first):
            raise NotUniformlyStable("majorant constant grows with the initial time")
    return exponential_kl(c, a)


@dataclass(frozen=True)
class EnvelopeFit:
    beta: ComparisonFunction
    gamma: ComparisonFunction
    residual: float


def fit_iss_envelope(samples, beta: ComparisonFunction, gamma_slope_init: float,
                     validation=None) -> EnvelopeFit:
    """Fit a linear gain ``gamma(r) = g r`` on top of a fixed ``beta``.

    ``samples`` holds ``(r0, u_sup, lags, norms)``.  The slope is the smallest
    one that makes every training sample satisfy the estimate, never above the
    variation-of-constants initialization.  ``residual`` is the worst
    ``lhs - rhs`` on ``validation`` (the training set when omitted).
    """
    g = 0.0
    for r0, u_sup, lags, norms in samples:
        excess = np.asarray(norms, float) - np.asarray(beta(r0, np.asarray(lags, float)), float)
        worst = float(np.max(excess))
        if worst > 0:
            if u_sup <= 0:
                g = np.inf
            else:
                g = max(g, worst / u_sup)
    g = min(g, gamma_slope_init) if np.isfinite(g) else gamma_slope_init
    g = max(g, 1e-12)
    gamma = linear(g)
    residual = -np.inf
    for r0, u_sup, lags, norms in (validation if validation is not None else samples):
        rhs = np.asarray(beta(r0, np.asarray(lags, float)), float) + g * u_sup
        residual = max(residual, float(np.max(np.asarray(norms, float) - rhs)))
    return EnvelopeFit(beta, gamma, residual)
