"""Mild solutions of ``x' = A(t) x + psi(t, x, u(t))`` with escape detection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_banded

from .errors import Escaped, StepTooLarge
from .evolution import EvolutionFamily, TimeVaryingOperator, _banded
from .signals import InputSignal

SOLVE_STEPPERS = ("rk4", "implicit-euler")


def _norm(x, weight):
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(weight * np.dot(x.ravel(), x.ravel())))


@dataclass(frozen=True)
class NonlinearTerm:
    """Right-hand side perturbation ``psi(t, x, u)``.

    ``h2_bound = (a, b, rho)`` asserts ``||psi|| <= a||x|| + b||u||`` on the
    ball of radius ``rho``.  ``h3_bound = (gamma, delta)`` asserts
    ``||psi(t,x,u) - psi(t,x,0)|| <= gamma ||x|| delta(||u||)``, a bound on
    the input-driven part.
    """

    fn: Callable[[float, np.ndarray, object], np.ndarray]
    lipschitz_bound: Callable[[float, float], float] | None = None
    h2_bound: tuple[float, float, float] | None = None
    h3_bound: tuple | None = None
    x_weight: float = 1.0
    u_weight: float = 1.0
    is_zero: bool = False
    name: str = "psi"

    def __call__(self, t, x, u):
        return np.asarray(self.fn(t, x, u), dtype=float)

    def u_norm(self, u) -> float:
        return _norm(u, self.u_weight) if np.ndim(u) else abs(float(u))

    def check_h2(self, samples) -> float:
        """Worst ``||psi|| - (a||x|| + b||u||)`` over ``(t, x, u)`` samples inside the ball."""
        a, b, rho = self.h2_bound
        worst = -np.inf
        for t, x, u in samples:
            nx, nu = _norm(x, self.x_weight), self.u_norm(u)
            if nx <= rho and nu <= rho:
                worst = max(worst, _norm(self(t, x, u), self.x_weight) - a * nx - b * nu)
        return worst

    def check_h3(self, samples) -> float:
        gamma, delta = self.h3_bound
        worst = -np.inf
        for t, x, u in samples:
            diff = self(t, x, u) - self(t, x, 0.0 * np.asarray(u))
            rhs = gamma * _norm(x, self.x_weight) * float(delta(self.u_norm(u)))
            worst = max(worst, _norm(diff, self.x_weight) - rhs)
        return worst


def zero_term(dim: int) -> NonlinearTerm:
    return NonlinearTerm(lambda t, x, u: np.zeros(dim), is_zero=True, name="zero")


def input_term(B, x_weight: float = 1.0, u_weight: float = 1.0) -> NonlinearTerm:
    """``psi(t, x, u) = B(t) u`` for a matrix or a :class:`TimeVaryingOperator`."""
    if isinstance(B, TimeVaryingOperator):
        Bf = B
        bound = B.bound_sup
    else:
        Bm = np.atleast_2d(np.asarray(B, dtype=float))
        Bf = lambda t: Bm  # noqa: E731
        bound = float(np.linalg.norm(Bm, 2))
    if bound is not None:
        bound *= math.sqrt(x_weight / u_weight)
    return NonlinearTerm(lambda t, x, u: Bf(t) @ np.atleast_1d(u),
                         h2_bound=None if bound is None else (0.0, bound, np.inf),
                         x_weight=x_weight, u_weight=u_weight, name="B u")


def sum_terms(*terms: NonlinearTerm) -> NonlinearTerm:
    live = [p for p in terms if not p.is_zero]
    if not live:
        return terms[0]
    return NonlinearTerm(lambda t, x, u: sum(p(t, x, u) for p in live), x_weight=live[0].x_weight,
                         u_weight=live[0].u_weight, name=" + ".join(p.name for p in live))


@dataclass
class Trajectory:
    t0: float
    times: np.ndarray
    states: np.ndarray
    input_ref: InputSignal | None
    escaped: bool
    t_escape: float | None
    weight: float = 1.0
    _norms: np.ndarray | None = field(default=None, repr=False)

    @property
    def norms(self) -> np.ndarray:
        if self._norms is None:
            s = self.states
            self._norms = np.sqrt(self.weight * np.einsum("ij,ij->i", s, s))
        return self._norms

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path, states: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["t", "norm_x", "escaped"]
            if states:
                header += [f"x{i}" for i in range(self.states.shape[1])]
            w.writerow(header)
            last = len(self.times) - 1
            for i, (t, n) in enumerate(zip(self.times, self.norms)):
                row = [f"{t:.10g}", f"{n:.12g}", int(self.escaped and i == last)]
                if states:
                    row += [f"{v:.12g}" for v in self.states[i]]
                w.writerow(row)


class _Implicit:
    """Solves ``(I - h A(b)) y = r`` with reuse where the operator allows it."""

    def __init__(self, A: TimeVaryingOperator):
        self.A = A
        self.ab = _banded(A.base, A.bandwidth) if A.base is not None and A.bandwidth is not None else None
        self._lu = {}

    def solve(self, a, b, r):
        h = b - a
        A = self.A
        if self.ab is not None:
            ab = -h * self.ab
            ab[A.bandwidth] += 1.0 - h * (A.shift(b) if A.shift is not None else 0.0)
            return solve_banded((A.bandwidth, A.bandwidth), ab, r)
        if A.is_constant:
            key = round(h, 15)
            lu = self._lu.get(key)
            if lu is None:
                lu = self._lu[key] = lu_factor(np.eye(A.dim) - h * A(a))
            return lu_solve(lu, r)
        return np.linalg.solve(np.eye(A.dim) - h * A.piece_at(0.5 * (a + b))(b), r)


def step_nodes(A: TimeVaryingOperator, u: InputSignal | None, t0: float, t_end: float, dt: float) -> list[float]:
    """Nodes ``t0 + j dt`` refined by the breakpoints of ``A`` and ``u``."""
    n = max(1, math.ceil((t_end - t0) / dt - 1e-9))
    pts = [t0 + j * dt for j in range(1, n)]
    pts += A.breakpoints_in(t0, t_end)
    if u is not None:
        pts += u.breakpoints_in(t0, t_end)
    eps = 1e-11 * max(1.0, abs(t_end))
    out = [t0]
    for p in sorted(pts):
        if p - out[-1] > eps and t_end - p > eps:
            out.append(p)
    out.append(t_end)
    return out


def solve_mild(A: TimeVaryingOperator, Psi: NonlinearTerm, t0: float, x0, u: InputSignal | None, t_end: float,
               dt: float, stepper: str = "rk4", blowup_cap: float = 1e8, record_every: int = 1,
               local_tol: float | None = None, patience: int = 5) -> Trajectory:
    """Integrate the semilinear system from ``(t0, x0)`` up to ``t_end`` or escape.

    Within each continuity piece of the input the piece's own formula is used
    at both step ends, so inputs agreeing on ``[t0, t)`` give identical states
    at ``t``.  ``stepper='implicit-euler'`` treats ``A`` implicitly and
    ``psi`` explicitly.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    if stepper not in SOLVE_STEPPERS:
        raise ValueError(f"unknown stepper {stepper!r}")
    x = np.array(x0, dtype=float, copy=True).ravel()
    weight = A.weight
    nodes = step_nodes(A, u, t0, t_end, dt)
    times, states = [t0], [x.copy()]
    implicit = _Implicit(A) if stepper == "implicit-euler" else None
    escaped, t_escape, strikes = False, None, 0
    zero_u = 0.0

    def u_piece(mid):
        return u.piece_at(mid) if u is not None else (lambda s: zero_u)

    def rk4(a, b, y, fa, fu):
        h = b - a
        m = a + 0.5 * h
        Am = fa(m)
        um = fu(m)
        k1 = fa(a) @ y + Psi(a, y, fu(a))
        k2 = Am @ (y + 0.5 * h * k1) + Psi(m, y + 0.5 * h * k1, um)
        k3 = Am @ (y + 0.5 * h * k2) + Psi(m, y + 0.5 * h * k2, um)
        k4 = fa(b) @ (y + h * k3) + Psi(b, y + h * k3, fu(b))
        return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    with np.errstate(over="ignore", invalid="ignore"):
        for i, (a, b) in enumerate(zip(nodes[:-1], nodes[1:])):
            mid = 0.5 * (a + b)
            fu = u_piece(mid)
            if implicit is not None:
                x_new = implicit.solve(a, b, x + (b - a) * Psi(a, x, fu(a)))
            else:
                fa = A.piece_at(mid)
                x_new = rk4(a, b, x, fa, fu)
                if local_tol is not None:
                    half = rk4(mid, b, rk4(a, mid, x, fa, fu), fa, fu)
                    err = _norm(half - x_new, weight)
                    strikes = strikes + 1 if err > local_tol * (1 + _norm(x, weight)) else 0
                    if strikes >= patience:
                        raise StepTooLarge(f"local error {err:.3e} above tolerance near t={b:.6g}")
            x = x_new
            nx = _norm(x, weight)
            if not np.isfinite(nx) or nx > blowup_cap:
                escaped, t_escape = True, b
                if not np.isfinite(nx):
                    x = np.where(np.isfinite(x), x, np.inf)
                times.append(b)
                states.append(x.copy())
                break
            if (i + 1) % record_every == 0 or i == len(nodes) - 2:
                times.append(b)
                states.append(x.copy())
    return Trajectory(t0, np.asarray(times), np.asarray(states), u, escaped, t_escape, weight)


def check_cocycle(A, Psi, t0, x0, u, t_mid, t_end, dt, stepper="rk4") -> float:
    """``||phi(t_end, t_mid, phi(t_mid, t0, x0)) - phi(t_end, t0, x0)||``."""
    if not t0 < t_mid < t_end:
        raise ValueError("need t0 < t_mid < t_end")
    full = solve_mild(A, Psi, t0, x0, u, t_end, dt, stepper, record_every=10 ** 9)
    first = solve_mild(A, Psi, t0, x0, u, t_mid, dt, stepper, record_every=10 ** 9)
    if full.escaped or first.escaped:
        raise Escaped("trajectory escaped before t_end")
    second = solve_mild(A, Psi, t_mid, first.final_state, u, t_end, dt, stepper, record_every=10 ** 9)
    if second.escaped:
        raise Escaped("trajectory escaped before t_end")
    return _norm(second.final_state - full.final_state, A.weight)


def check_causality(A, Psi, t0, x0, u1, u2, t, dt, stepper="rk4", tol: float = 1e-10) -> bool:
    """True iff the states reached at ``t`` under ``u1`` and ``u2`` agree within ``tol``."""
    y1 = solve_mild(A, Psi, t0, x0, u1, t, dt, stepper, record_every=10 ** 9)
    y2 = solve_mild(A, Psi, t0, x0, u2, t, dt, stepper, record_every=10 ** 9)
    if y1.escaped or y2.escaped:
        return bool(y1.escaped and y2.escaped and y1.t_escape == y2.t_escape)
    return _norm(y1.final_state - y2.final_state, A.weight) <= tol


def variation_of_constants(W: EvolutionFamily, B, t0: float, x0, u: InputSignal, t_end: float) -> np.ndarray:
    """``W(t, t0) x0 + int W(t, s) B(s) u(s) ds`` on the step grid of ``W``.

    The integral uses the left-rectangle rule for the implicit stepper (which
    reproduces implicit/explicit stepping exactly) and Simpson's rule per
    step otherwise.
    """
    Bf = B if callable(B) else (lambda s, _B=np.atleast_2d(np.asarray(B, float)): _B)
    nodes = step_nodes(W.generator, u, t0, t_end, W.dt)
    x = W.propagate(t0, t_end, x0)
    P = np.eye(W.dim)
    total = np.zeros(W.dim)
    for a, b in reversed(list(zip(nodes[:-1], nodes[1:]))):
        h = b - a
        fu = u.piece_at(0.5 * (a + b))
        if W.stepper == "implicit-euler":
            Wa = P @ W._step(a, b, np.eye(W.dim))
            total += h * Wa @ (Bf(a) @ np.atleast_1d(fu(a)))
            P = Wa
        else:
            m = a + 0.5 * h
            Wm = P @ W._step(m, b, np.eye(W.dim))
            Wa = Wm @ W._step(a, m, np.eye(W.dim))
            total += h / 6.0 * (Wa @ (Bf(a) @ np.atleast_1d(fu(a))) + 4 * Wm @ (Bf(m) @ np.atleast_1d(fu(m)))
                                + P @ (Bf(b) @ np.atleast_1d(fu(b))))
            P = Wa
    return x + total
