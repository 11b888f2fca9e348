"""Initial-value integration for the trajectory-level checks.

Two methods: an adaptive Dormand-Prince 5(4) pair (local extrapolation,
FSAL) and classical fixed-step RK4. Both report the solution on a uniform
output grid: the adaptive pair through its own 4th-order continuous
extension, RK4 by cubic Hermite interpolation between accepted steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from symflow import expr as ex
from symflow.errors import EvaluationError, IntegrationFailure
from symflow.expr import Point

# Dormand & Prince (1980), RK5(4)7M
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array(_A[6] + [0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4
# continuous extension: y(t + x h) = y + h * (k.T @ _P) @ (x, x^2, x^3, x^4)
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

METHODS = ("dopri45", "rk4")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "dopri45"
    atol: float = 1e-10
    rtol: float = 1e-10
    first_step: float = 1e-3
    min_step: float = 1e-13
    max_steps: int = 1_000_000
    n_out: int = 201

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.min_step > 0 and self.first_step > 0):
            raise ValueError("step sizes must be positive")
        if self.max_steps < 1 or self.n_out < 2:
            raise ValueError("max_steps >= 1 and n_out >= 2 required")


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    accepted: int
    rejected: int
    n_eval: int

    def stats(self) -> dict:
        return {"accepted_steps": self.accepted, "rejected_steps": self.rejected, "rhs_evaluations": self.n_eval}


def _hermite(t0, t1, y0, y1, f0, f1, ts):
    h = t1 - t0
    s = ((ts - t0) / h)[:, None]
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


class _Stepper:
    """Shared bookkeeping: rhs wrapper, grid filling."""

    def __init__(self, rhs, t0, t1, u0, cfg):
        self.rhs = rhs
        self.cfg = cfg
        self.t0, self.t1 = float(t0), float(t1)
        self.direction = 1.0 if t1 >= t0 else -1.0
        self.grid = np.linspace(self.t0, self.t1, cfg.n_out)
        self.out = np.empty((cfg.n_out, len(u0)))
        self.out[0] = u0
        self.next_out = 1
        self.n_eval = 0

    def f(self, t, u):
        self.n_eval += 1
        try:
            du = np.asarray(self.rhs(t, u), dtype=float)
        except EvaluationError as exc:
            raise IntegrationFailure(f"right-hand side failed at t={t}: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise IntegrationFailure(f"non-finite derivative at t={t}")
        return du

    def _pending(self, t1):
        d = self.direction
        k = self.next_out
        while k < len(self.grid) and d * (self.grid[k] - t1) <= 0:
            k += 1
        return k

    def emit(self, t0, t1, y0, y1, f0, f1):
        k = self._pending(t1)
        if k > self.next_out:
            ts = self.grid[self.next_out:k]
            self.out[self.next_out:k] = _hermite(t0, t1, y0, y1, f0, f1, ts)
            self.next_out = k

    def emit_dense(self, t0, hs, y0, stages):
        k = self._pending(t0 + hs)
        if k > self.next_out:
            x = (self.grid[self.next_out:k] - t0) / hs
            powers = x[:, None] ** np.arange(1, 5)
            self.out[self.next_out:k] = y0 + hs * powers @ (stages.T @ _P).T
            self.next_out = k

    def finish(self, y_end, accepted, rejected):
        self.out[-1] = y_end
        if not np.all(np.isfinite(self.out)):
            raise IntegrationFailure("non-finite state on output grid")
        return Trajectory(self.grid, self.out, accepted, rejected, self.n_eval)


def _error_norm(err, y0, y1, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err) / scale)) if err.size else 0.0


def _dopri(st: _Stepper, u0):
    cfg = st.cfg
    d = st.direction
    t, y = st.t0, np.array(u0, dtype=float)
    span = abs(st.t1 - st.t0)
    h = min(cfg.first_step, span)
    f0 = st.f(t, y)
    k = np.empty((7, len(y)))
    accepted = rejected = 0
    while d * (st.t1 - t) > 0:
        if accepted + rejected >= cfg.max_steps:
            raise IntegrationFailure(f"max_steps={cfg.max_steps} exceeded at t={t}")
        if h < cfg.min_step:
            raise IntegrationFailure(f"step size {h:g} below min_step at t={t}")
        last = h >= abs(st.t1 - t)
        if last:
            h = abs(st.t1 - t)
        hs = d * h
        k[0] = f0
        for i in range(1, 7):
            yi = y + hs * np.dot(_A[i], k[:i])
            k[i] = st.f(t + _C[i] * hs, yi)
        y_new = yi  # stage 7 is evaluated at the 5th-order solution (FSAL)
        err = _error_norm(hs * (_E @ k), y, y_new, cfg)
        if err <= 1.0:
            t_new = st.t1 if last else t + hs
            st.emit_dense(t, t_new - t, y, k)
            t, y, f0 = t_new, y_new, k[6].copy()
            accepted += 1
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
        else:
            rejected += 1
            factor = max(0.2, 0.9 * err ** -0.2)
        h = h * factor
    return st.finish(y, accepted, rejected)


def _rk4(st: _Stepper, u0):
    cfg = st.cfg
    d = st.direction
    span = abs(st.t1 - st.t0)
    n_steps = max(1, int(np.ceil(span / cfg.first_step - 1e-9)))
    if n_steps > cfg.max_steps:
        raise IntegrationFailure(f"{n_steps} fixed steps exceed max_steps={cfg.max_steps}")
    hs = d * span / n_steps
    t, y = st.t0, np.array(u0, dtype=float)
    f0 = st.f(t, y)
    for i in range(n_steps):
        k1 = f0
        k2 = st.f(t + hs / 2, y + hs / 2 * k1)
        k3 = st.f(t + hs / 2, y + hs / 2 * k2)
        k4 = st.f(t + hs, y + hs * k3)
        y_new = y + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t_new = st.t1 if i == n_steps - 1 else st.t0 + (i + 1) * hs
        f_new = st.f(t_new, y_new)
        st.emit(t, t_new, y, y_new, f0, f_new)
        t, y, f0 = t_new, y_new, f_new
    return st.finish(y, n_steps, 0)


def solve(rhs, u0, t_span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate ``du/dt = rhs(t, u)`` over ``t_span = (t0, t1)``; ``t1 < t0`` runs backwards."""
    cfg = cfg or IntegratorConfig()
    u0 = np.asarray(u0, dtype=float)
    t0, t1 = t_span
    if not np.all(np.isfinite(u0)):
        raise IntegrationFailure("non-finite initial state")
    st = _Stepper(rhs, t0, t1, u0, cfg)
    if t0 == t1:
        st.out[:] = u0
        return st.finish(u0, 0, 0)
    return _dopri(st, u0) if cfg.method == "dopri45" else _rk4(st, u0)


def _initial_vector(variables, u0):
    if isinstance(u0, dict):
        return np.array([u0[v] for v in variables], dtype=float)
    if isinstance(u0, Point):
        return np.array([u0.values[v] for v in variables], dtype=float)
    return np.asarray(u0, dtype=float)


def integrate(ds, u0, t_span, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Trajectory of a :class:`~symflow.dynsys.DynamicalSystem` from ``u0`` at ``t_span[0]``."""
    return solve(ds.rhs(), _initial_vector(ds.variables, u0), t_span, cfg)


def flow_map(fld, u0, s, cfg: IntegratorConfig | None = None, variables=None, time="t", t=None):
    """Flow of a vector field for group parameter ``s`` with time frozen.

    ``u0`` is a :class:`~symflow.expr.Point` (its variables and time are used)
    or a vector together with ``variables``. Returns the end state as a Point.
    """
    if isinstance(u0, Point):
        variables, time, t = u0.names, u0.time, u0.t if t is None else t
    if variables is None:
        raise ValueError("variables are needed when u0 is not a Point")
    t = 0.0 if t is None else float(t)
    fn = ex.compile_scalar(fld.phi, tuple(variables) + (time,))

    def rhs(_s, u):
        return np.array(fn(*u, t))

    traj = solve(rhs, _initial_vector(variables, u0), (0.0, float(s)), cfg)
    return Point.from_vector(variables, traj.u[-1], t, time)
