"""Piecewise-continuous, right-continuous input signals on the half line."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np


def _weighted_norm(values: np.ndarray, weight: float) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim <= 1:
        return np.abs(values)
    return np.sqrt(weight * np.sum(values * values, axis=-1))


@dataclass(frozen=True)
class Piece:
    """One continuity piece.

    ``f`` maps an array of absolute times to values (shape ``(len,)`` for
    scalar signals, ``(len, m)`` for vector signals).  ``norm_sup(a, b)``,
    when available, returns the exact supremum of the value norm on
    ``[a, b]`` (``b`` may be ``inf``).
    """

    f: Callable[[np.ndarray], np.ndarray]
    norm_sup: Callable[[float, float], float] | None = None

    def shifted(self, tau: float) -> "Piece":
        f = self.f
        ns = self.norm_sup
        return Piece(lambda t: f(np.asarray(t) + tau),
                     None if ns is None else (lambda a, b: ns(a + tau, b + tau)))


@dataclass(frozen=True)
class InputSignal:
    """Input ``u`` with pieces starting at ``breakpoints`` (first one is 0).

    The last piece extends to infinity.  ``weight`` is the quadrature weight
    of the discrete L2 norm used for grid-valued inputs.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[Piece, ...]
    weight: float = 1.0
    horizon: float = 50.0
    samples_per_unit: int = 400

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        if not bps or bps[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(bps) != len(self.pieces):
            raise ValueError("one piece per breakpoint is required")
        object.__setattr__(self, "breakpoints", bps)

    def index(self, t: float) -> int:
        return int(np.searchsorted(self.breakpoints, t, side="right") - 1)

    def piece_at(self, t_mid: float) -> Callable:
        """Formula valid on the closed continuity interval containing ``t_mid``."""
        return self.pieces[max(0, self.index(t_mid))].f

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < 0):
            raise ValueError("signals are defined on t >= 0")
        idx = np.searchsorted(self.breakpoints, ts, side="right") - 1
        out = None
        for k in np.unique(idx):
            sel = idx == k
            vals = np.asarray(self.pieces[k].f(ts[sel]), dtype=float)
            if out is None:
                out = np.zeros((len(ts),) + vals.shape[1:])
            out[sel] = vals
        return out[0] if scalar else out

    def norm_at(self, t):
        return _weighted_norm(self(np.atleast_1d(t)), self.weight) if np.ndim(t) else float(
            _weighted_norm(self(np.atleast_1d(t)), self.weight)[0])

    def intervals(self):
        ends = self.breakpoints[1:] + (np.inf,)
        return list(zip(self.breakpoints, ends, self.pieces))

    def pieces_on(self, t0: float, t1: float):
        """``(a, b, f)`` for the continuity pieces meeting ``[t0, t1]``."""
        out = []
        for a, b, p in self.intervals():
            lo, hi = max(a, t0), min(b, t1)
            if hi > lo:
                out.append((lo, hi, p.f))
        if not out and t1 == t0:
            out.append((t0, t1, self.piece_at(t0)))
        return out

    def breakpoints_in(self, t0: float, t1: float) -> list[float]:
        return [b for b in self.breakpoints if t0 < b < t1]

    def _piece_sup(self, a, b, p: Piece) -> float:
        if p.norm_sup is not None:
            return float(p.norm_sup(a, b))
        hi = b if np.isfinite(b) else a + self.horizon
        n = max(2, int(np.ceil((hi - a) * self.samples_per_unit)) + 1)
        return float(np.max(_weighted_norm(p.f(np.linspace(a, hi, n)), self.weight)))

    @cached_property
    def sup_norm(self) -> float:
        return max(self._piece_sup(a, b, p) for a, b, p in self.intervals())

    def sup_on(self, t0: float, t1: float) -> float:
        best = 0.0
        for a, b, p in self.intervals():
            lo, hi = max(a, t0), min(b, t1)
            if hi >= lo and lo < b:
                best = max(best, self._piece_sup(lo, hi, p))
        return best


def shift(u: InputSignal, tau: float) -> InputSignal:
    """Time shift ``t -> u(t + tau)``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if tau == 0:
        return u
    k0 = u.index(tau)
    bps = (0.0,) + tuple(b - tau for b in u.breakpoints[k0 + 1:])
    pieces = tuple(p.shifted(tau) for p in u.pieces[k0:])
    return InputSignal(bps, pieces, u.weight, u.horizon, u.samples_per_unit)


def energy(u: InputSignal, mu, t0: float, t1: float, rtol: float = 1e-13) -> float:
    """``int_{t0}^{t1} mu(||u(s)||) ds`` by refined composite Simpson per piece."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    total = 0.0
    for a, b, f in u.pieces_on(t0, t1):
        if b <= a:
            continue

        def simpson(n):
            s = np.linspace(a, b, n + 1)
            g = np.asarray(mu(_weighted_norm(f(s), u.weight)), dtype=float)
            return (b - a) / (3 * n) * (g[0] + g[-1] + 4 * g[1:-1:2].sum() + 2 * g[2:-1:2].sum())

        n = 2 * max(8, int(np.ceil((b - a) * 64)))
        prev = simpson(n)
        while n < 2 ** 22:
            n *= 2
            cur = simpson(n)
            if abs(cur - prev) <= rtol * (1 + abs(cur)):
                prev = cur
                break
            prev = cur
        total += prev
    return float(total)


# -- piece constructors -------------------------------------------------------


def const_piece(value) -> Piece:
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        v = float(value)
        return Piece(lambda t: np.full(np.shape(t), v), lambda a, b: abs(v))
    return Piece(lambda t: np.broadcast_to(value, np.shape(t) + value.shape).copy(), None)


def sine_piece(amp: float, freq: float, phase: float = 0.0, offset: float = 0.0) -> Piece:
    """``offset + amp * sin(2 pi freq t + phase)`` in absolute time."""
    w = 2 * np.pi * freq

    def f(t):
        return offset + amp * np.sin(w * np.asarray(t) + phase)

    def sup(a, b):
        if not np.isfinite(b) or w == 0 or (b - a) * w >= 2 * np.pi:
            return abs(offset) + abs(amp) if w != 0 else abs(offset + amp * np.sin(phase))
        cands = [a, b]
        k0 = np.ceil((w * a + phase - np.pi / 2) / np.pi)
        k1 = np.floor((w * b + phase - np.pi / 2) / np.pi)
        for k in np.arange(k0, k1 + 1):
            cands.append((np.pi / 2 + k * np.pi - phase) / w)
        return float(np.max(np.abs(f(np.asarray(cands)))))

    return Piece(f, sup)


def ramp_piece(start_value: float, slope: float, t_start: float) -> Piece:
    def f(t):
        return start_value + slope * (np.asarray(t) - t_start)

    def sup(a, b):
        if not np.isfinite(b):
            return np.inf if slope != 0 else abs(start_value)
        return float(max(abs(f(a)), abs(f(b))))

    return Piece(f, sup)


def exp_piece(c: float, rate: float) -> Piece:
    def f(t):
        return c * np.exp(-rate * np.asarray(t))

    def sup(a, b):
        if rate >= 0:
            return abs(c) * np.exp(-rate * a)
        return np.inf if not np.isfinite(b) else abs(c) * np.exp(-rate * b)

    return Piece(f, sup)


def grid_piece(times: Sequence[float], values: Sequence[float]) -> Piece:
    """Linear interpolation through samples, held constant outside them."""
    ts = np.asarray(times, dtype=float)
    vs = np.asarray(values, dtype=float)

    def f(t):
        return np.interp(t, ts, vs)

    def sup(a, b):
        inside = vs[(ts > a) & (ts < b)]
        ends = np.abs(f(np.array([a, min(b, ts[-1] if np.isfinite(b) else ts[-1])])))
        if not np.isfinite(b):
            ends = np.append(ends, abs(vs[-1]))
        return float(max(np.max(ends), np.max(np.abs(inside)) if inside.size else 0.0))

    return Piece(f, sup)


def profiled_piece(scalar: Piece, profile: np.ndarray, weight: float) -> Piece:
    """Grid-valued piece ``s(t) * profile``."""
    profile = np.asarray(profile, dtype=float)
    pnorm = float(np.sqrt(weight * np.sum(profile ** 2)))
    sf = scalar.f
    ns = scalar.norm_sup
    return Piece(lambda t: np.multiply.outer(np.asarray(sf(t), dtype=float), profile),
                 None if ns is None else (lambda a, b: ns(a, b) * pnorm))


# -- signal constructors ------------------------------------------------------


def from_pieces(spec: Sequence[tuple[float, Piece]], weight: float = 1.0, **kw) -> InputSignal:
    spec = sorted(spec, key=lambda item: item[0])
    return InputSignal(tuple(s for s, _ in spec), tuple(p for _, p in spec), weight, **kw)


def zero() -> InputSignal:
    return InputSignal((0.0,), (const_piece(0.0),))


def constant(value) -> InputSignal:
    return InputSignal((0.0,), (const_piece(value),))


def step(t_switch: float, before, after) -> InputSignal:
    if t_switch <= 0:
        return constant(after)
    return InputSignal((0.0, float(t_switch)), (const_piece(before), const_piece(after)))


def sine(amp: float, freq: float, phase: float = 0.0, offset: float = 0.0) -> InputSignal:
    return InputSignal((0.0,), (sine_piece(amp, freq, phase, offset),))


def exp_decay(c: float, rate: float) -> InputSignal:
    return InputSignal((0.0,), (exp_piece(c, rate),))


def with_profile(u: InputSignal, profile: np.ndarray, weight: float) -> InputSignal:
    """Grid-valued signal ``u(t) * profile`` measured in the weighted L2 norm."""
    pieces = tuple(profiled_piece(p, profile, weight) for p in u.pieces)
    return InputSignal(u.breakpoints, pieces, weight, u.horizon, u.samples_per_unit)


def scaled(u: InputSignal, c: float) -> InputSignal:
    def wrap(p: Piece) -> Piece:
        f, ns = p.f, p.norm_sup
        return Piece(lambda t: c * np.asarray(f(t)), None if ns is None else (lambda a, b: abs(c) * ns(a, b)))

    return InputSignal(u.breakpoints, tuple(wrap(p) for p in u.pieces), u.weight, u.horizon, u.samples_per_unit)


def splice(u1: InputSignal, u2: InputSignal, t_switch: float) -> InputSignal:
    """``u1`` before ``t_switch`` and ``u2`` from ``t_switch`` on."""
    spec = [(a, p) for a, _, p in u1.intervals() if a < t_switch]
    spec += [(max(a, t_switch), p) for a, b, p in u2.intervals() if b > t_switch]
    return from_pieces(spec, weight=u1.weight, horizon=u1.horizon, samples_per_unit=u1.samples_per_unit)
