"""Constants of motion: pointwise and trajectory checks, symmetries built
from a full set of first integrals, and Liouville fields built from n-1 of them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from symflow import expr as ex
from symflow.dynsys import (
    DynamicalSystem,
    VectorField,
    bracket_from_jets,
    field_jet,
    total_derivative_batch,
)
from symflow.errors import BindingError, DomainError, SingularJacobianError
from symflow.expr import Expr, Point
from symflow.numint import IntegratorConfig, integrate
from symflow.sampling import CheckReport, Sampler, aggregate, guard_mask

DEFAULT_TOL = 1e-8
MAX_CONDITION = 1e10


def _sample(ds, sampler, guards):
    sampler = sampler or Sampler()
    env = sampler.for_system(ds)
    keep = guard_mask(guards, env) if guards else True
    return sampler, env, keep


def check_constant_pointwise(ds, kappa, sampler=None, tol=DEFAULT_TOL, guards=()) -> CheckReport:
    """Max of ``|D_t kappa|`` over sampled points."""
    kappa = ds.parse(kappa)
    sampler, env, keep = _sample(ds, sampler, guards)
    dk, ok = total_derivative_batch(kappa, ds, env)
    return aggregate(
        "constant", np.abs(dk), ok & keep, env, ds.variables, ds.time, tol, sampler,
        ds.positive, {"kappa": str(kappa)},
    )


@dataclass
class ConservationReport:
    kappa: str
    t_span: tuple
    pointwise_max: float
    drift: float
    pointwise_tol: float
    drift_tol: float
    integrator: dict = field(default_factory=dict)
    grid_points: int = 0

    @property
    def passed(self) -> bool:
        return self.pointwise_max <= self.pointwise_tol and self.drift <= self.drift_tol

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "check": "drift",
            "params": {"kappa": self.kappa, "t_span": list(self.t_span)},
            "grid_points": self.grid_points,
            "pointwise_max": self.pointwise_max,
            "drift": self.drift,
            "pointwise_tolerance": self.pointwise_tol,
            "drift_tolerance": self.drift_tol,
            "integrator": self.integrator,
            "verdict": self.verdict,
        }


def trajectory_env(ds, traj) -> dict:
    env = {v: traj.u[:, i] for i, v in enumerate(ds.variables)}
    env[ds.time] = traj.t
    return env


def check_drift(
    ds,
    kappa,
    u0,
    t_span,
    cfg: IntegratorConfig | None = None,
    drift_tol=1e-6,
    pointwise_tol=DEFAULT_TOL,
) -> ConservationReport:
    """Integrate from ``u0`` and measure ``max |kappa(u(t), t) - kappa(u0, t0)|``
    on the output grid, plus ``|D_t kappa|`` at the same grid points."""
    kappa = ds.parse(kappa)
    cfg = cfg or IntegratorConfig()
    traj = integrate(ds, u0, t_span, cfg)
    env = trajectory_env(ds, traj)
    values, ok = ex.evaluate_batch(kappa, env)
    dk, ok_d = total_derivative_batch(kappa, ds, env)
    if not np.all(ok & ok_d):
        bad = int(np.flatnonzero(~(ok & ok_d))[0])
        raise DomainError(f"{kappa} undefined along the trajectory at t={traj.t[bad]}")
    return ConservationReport(
        kappa=str(kappa),
        t_span=(float(t_span[0]), float(t_span[1])),
        pointwise_max=float(np.max(np.abs(dk))),
        drift=float(np.max(np.abs(values - values[0]))),
        pointwise_tol=pointwise_tol,
        drift_tol=drift_tol,
        integrator={"method": cfg.method, "atol": cfg.atol, "rtol": cfg.rtol, **traj.stats()},
        grid_points=len(traj.t),
    )


# ---------------------------------------------------------------------------
# symmetries from n constants of motion


class OvsjannikovResult(NamedTuple):
    p: np.ndarray
    fields: np.ndarray
    residuals: np.ndarray
    condition_number: float
    identity_error: float


def _single_env(pt):
    return {k: np.float64(v) for k, v in pt.env().items()}


def _dependent_rows(K):
    u, s, _ = np.linalg.svd(K)
    weights = np.abs(u[:, -1])
    return [i for i, w in enumerate(weights) if w > 1e-8 * weights.max()]


def ovsjannikov_construct(ds, kappas: Sequence, pt, max_condition=MAX_CONDITION) -> OvsjannikovResult:
    """Symmetries from ``n`` independent constants of motion at one point.

    Solves ``sum_a p_ab dkappa_a/du_c = delta_bc`` and returns ``p`` (row ``a``
    holds the components of the a-th field), the fields, and for each field
    the infinity norm of ``[f, phi] + d_t phi`` at ``pt``. The derivatives of
    ``p`` come from ``d(K^-1) = -K^-1 dK K^-1`` with exact second derivatives
    of the kappas.
    """
    kappas = [ds.parse(k) for k in kappas]
    n = ds.n
    if len(kappas) != n:
        raise BindingError(f"need {n} constants of motion, got {len(kappas)}")
    pt = ds.point(pt)
    env = _single_env(pt)

    grads, hessians = [], []
    for k in kappas:
        _, g, h, ok = ex.hessian_batch(k, env, ds.names)
        if not ok:
            raise DomainError(f"{k} or its derivatives undefined at {pt.to_dict()}")
        grads.append(g)
        hessians.append(h)
    K = np.array([g[:n] for g in grads])
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > max_condition:
        dep = _dependent_rows(K)
        raise SingularJacobianError(
            f"Jacobian of the constants is singular (condition number {cond:.3g}); "
            f"locally dependent: {[str(kappas[i]) for i in dep]}",
            cond,
            dep,
        )
    M = np.linalg.solve(K, np.eye(n))  # column a of K^-1 is field a
    p = M.T

    # dK[c][a, b] = d^2 kappa_a / du_b dx_c, x_c over state variables and time
    dK = np.array([[h[:n, c] for h in hessians] for c in range(n + 1)])
    dM = -np.einsum("ij,cjk,kl->cil", M, dK, M)
    f, jf, _, ok = field_jet(ds.f, env, ds.variables, ds.time)
    if not ok:
        raise DomainError(f"right-hand side undefined at {pt.to_dict()}")
    # R[b, a] = sum_c f_c d_c M[b, a] - sum_c M[c, a] d_c f_b + d_t M[b, a]
    R = np.einsum("c,cba->ba", f, dM[:n]) - jf @ M + dM[n]
    residuals = np.max(np.abs(R), axis=0)
    identity_error = float(np.max(np.abs(p @ K.T - np.eye(n))))
    return OvsjannikovResult(p, p.copy(), residuals, cond, identity_error)


# ---------------------------------------------------------------------------
# Liouville fields


def _parity(perm):
    inversions = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
    return -1 if inversions % 2 else 1


def levi_civita_contract(vectors) -> np.ndarray:
    """``psi_a = eps_{a b c ...} v1_b v2_c ...`` for n-1 vectors in R^n, with
    ``eps_{12...n} = +1`` (generalized cross product)."""
    vectors = np.asarray(vectors, dtype=float)
    m, n = vectors.shape
    if m != n - 1:
        raise ValueError(f"need n-1 vectors of length n, got {m} of length {n}")
    psi = np.zeros(n)
    for perm in itertools.permutations(range(n)):
        term = _parity(perm)
        for k in range(m):
            term *= vectors[k, perm[k + 1]]
        psi[perm[0]] += term
    return psi


def liouville_from_constants(kappas_hat: Sequence, pt: Point) -> np.ndarray:
    """The generalized cross product of the gradients of n-1 functions at ``pt``.

    Dependent inputs give the zero vector.
    """
    n = len(pt.names)
    if n < 2:
        raise ValueError("needs at least two state variables")
    if len(kappas_hat) != n - 1:
        raise BindingError(f"need {n - 1} functions, got {len(kappas_hat)}")
    names = pt.names + (pt.time,)
    grads = [ex.grad(ex.as_expr(k, names), pt) for k in kappas_hat]
    return levi_civita_contract(grads)


def liouville_field(ds: DynamicalSystem, kappas_hat: Sequence) -> VectorField:
    """Same contraction as :func:`liouville_from_constants` but as expression
    trees, via structural derivatives."""
    n = ds.n
    kappas_hat = [ds.parse(k) for k in kappas_hat]
    if len(kappas_hat) != n - 1:
        raise BindingError(f"need {n - 1} functions, got {len(kappas_hat)}")
    partials = [[ex.diff(k, v) for v in ds.variables] for k in kappas_hat]
    psi = [ex.Const(0.0)] * n
    for perm in itertools.permutations(range(n)):
        term = ex.Const(float(_parity(perm)))
        for k in range(n - 1):
            term = ex.mul(term, partials[k][perm[k + 1]])
        psi[perm[0]] = ex.add(psi[perm[0]], term)
    return VectorField(tuple(psi))


def check_liouville_field(ds, psi: VectorField, sampler=None, tol=DEFAULT_TOL, guards=()) -> CheckReport:
    """Residual ``d_t psi + [f, psi] + (Div f) psi``; ``Div psi`` goes to ``extra``."""
    psi.bind(ds)
    sampler, env, keep = _sample(ds, sampler, guards)
    f, jf, _, ok_f = field_jet(ds.f, env, ds.variables, ds.time)
    ps, jps, dt_ps, ok_p = field_jet(psi.phi, env, ds.variables, ds.time)
    div_f = np.trace(jf, axis1=-2, axis2=-1)
    res = dt_ps + bracket_from_jets(f, jf, ps, jps) + div_f[..., None] * ps
    ok = ok_f & ok_p & keep
    div_psi = np.abs(np.trace(jps, axis1=-2, axis2=-1))
    report = aggregate(
        "liouville", np.max(np.abs(res), axis=-1), ok, env, ds.variables, ds.time, tol,
        sampler, ds.positive,
    )
    report.extra["max_div_psi"] = float(np.max(div_psi[ok]))
    report.extra["mean_div_psi"] = float(np.mean(div_psi[ok]))
    return report


def check_cross_orthogonality(ds, psi: VectorField, kappas_hat, sampler=None, tol=1e-10, guards=()) -> CheckReport:
    """``|psi . grad kappa_j|`` for each of the functions ``psi`` was built from."""
    psi.bind(ds)
    sampler, env, keep = _sample(ds, sampler, guards)
    ps, _, _, ok = field_jet(psi.phi, env, ds.variables, ds.time)
    worst = np.zeros(ps.shape[:-1])
    for k in kappas_hat:
        _, g, ok_k = ex.gradient_batch(ds.parse(k), env, ds.names)
        worst = np.maximum(worst, np.abs(np.einsum("...a,...a->...", ps, g[..., :-1])))
        ok = ok & ok_k
    return aggregate(
        "cross_orthogonality", worst, ok & keep, env, ds.variables, ds.time, tol, sampler, ds.positive,
    )


def check_integrating_factor(ds, q, sampler=None, tol=DEFAULT_TOL, guards=()) -> CheckReport:
    """Residual ``d_t q + f . grad q + (Div f) q``."""
    q = ds.parse(q)
    sampler, env, keep = _sample(ds, sampler, guards)
    dq, ok_q = total_derivative_batch(q, ds, env)
    qv, ok_v = ex.evaluate_batch(q, env)
    _, jf, _, ok_f = field_jet(ds.f, env, ds.variables, ds.time)
    res = dq + np.trace(jf, axis1=-2, axis2=-1) * qv
    return aggregate(
        "integrating_factor", np.abs(res), ok_q & ok_v & ok_f & keep, env, ds.variables,
        ds.time, tol, sampler, ds.positive, {"q": str(q)},
    )
