"""Pointwise verification of standard, lambda- and Lambda-symmetries.

All checks evaluate a residual vector at seeded sample points and report
its infinity norm (worst component) aggregated over the sample:

* standard:  ``[f, phi] + d_t phi``
* lambda:    ``[f, phi] + d_t phi + lambda phi``
* Lambda:    ``[f, phi] + d_t phi + Lambda phi``

A field with a time component is first replaced by its evolutionary form.
"""

from __future__ import annotations

import numpy as np

from symflow import expr as ex
from symflow.dynsys import (
    DynamicalSystem,
    VectorField,
    bracket_from_jets,
    evolutionary_form,
    field_jet,
    lie_bracket_batch,
)
from symflow.errors import BindingError, DegenerateFieldError, DomainError
from symflow.expr import Expr, Point
from symflow.sampling import CheckReport, Sampler, aggregate, guard_mask

DEFAULT_TOL = 1e-8
DOT_SUFFIX = "_dot"

SymmetryReport = CheckReport


def symmetry_residual_batch(ds: DynamicalSystem, X: VectorField, env):
    """``[f, phi] + d_t phi`` for the evolutionary form of ``X``; ``(N, n)`` and mask."""
    Xe = evolutionary_form(X, ds)
    f, jf, _, ok_f = field_jet(ds.f, env, ds.variables, ds.time)
    phi, jphi, dt_phi, ok_p = field_jet(Xe.phi, env, ds.variables, ds.time)
    return bracket_from_jets(f, jf, phi, jphi) + dt_phi, phi, ok_f & ok_p


def tau_form_residual_batch(ds: DynamicalSystem, X: VectorField, env):
    """Residual of the determining equations written with ``tau`` kept:

    ``[f, phi]_a + d_t(phi_a - tau f_a) - (d tau / d u_b) f_a f_b``.

    Assembled from pointwise values and derivatives of ``f``, ``phi`` and
    ``tau`` directly, without building the evolutionary field.
    """
    X.bind(ds)
    bracket, ok = lie_bracket_batch(ds.f, X.phi, env, ds.variables, ds.time)
    f, _, dt_f, ok_f = field_jet(ds.f, env, ds.variables, ds.time)
    _, _, dt_phi, ok_p = field_jet(X.phi, env, ds.variables, ds.time)
    tau = X.tau if X.tau is not None else ex.Const(0.0)
    tau_v, tau_g, ok_t = ex.gradient_batch(tau, env, ds.names)
    dtau_du, dtau_dt = tau_g[..., :-1], tau_g[..., -1]
    dt_tau_f = dtau_dt[..., None] * f + tau_v[..., None] * dt_f
    f_dot_grad_tau = np.einsum("...b,...b->...", dtau_du, f)
    res = bracket + dt_phi - dt_tau_f - f_dot_grad_tau[..., None] * f
    return res, ok & ok_f & ok_p & ok_t


def _sample(ds, sampler, guards):
    env = sampler.for_system(ds)
    keep = guard_mask(guards, env) if guards else True
    return env, keep


def _report(kind, ds, res, ok, env, tol, sampler, params=None):
    norms = np.max(np.abs(res), axis=-1)
    return aggregate(
        kind, norms, ok, env, ds.variables, ds.time, tol, sampler, ds.positive, params
    )


def check_standard(ds, X, sampler=None, tol=DEFAULT_TOL, guards=()) -> CheckReport:
    """Is ``X`` a Lie point-symmetry of ``ds`` on the sampled box?"""
    sampler = sampler or Sampler()
    env, keep = _sample(ds, sampler, guards)
    res, _, ok = symmetry_residual_batch(ds, X, env)
    return _report("standard", ds, res, ok & keep, env, tol, sampler)


def on_shell(ds: DynamicalSystem, e: Expr) -> Expr:
    """Substitute ``<var>_dot`` by ``f_var``: lambda may depend on u, u_dot and t."""
    mapping = {v + DOT_SUFFIX: fa for v, fa in zip(ds.variables, ds.f)}
    return ex.substitute(e, mapping)


def lambda_names(ds: DynamicalSystem) -> tuple:
    """Names a lambda expression may use."""
    return ds.names + tuple(v + DOT_SUFFIX for v in ds.variables)


def lambda_expr(ds, lam) -> Expr:
    lam = ex.as_expr(lam, lambda_names(ds))
    return on_shell(ds, lam)


def lambda_residual_batch(ds, X, lam, env):
    res, phi, ok = symmetry_residual_batch(ds, X, env)
    lam_v, ok_l = ex.evaluate_batch(lambda_expr(ds, lam), env)
    return res + lam_v[..., None] * phi, ok & ok_l


def check_lambda(ds, X, lam, sampler=None, tol=DEFAULT_TOL, guards=()) -> CheckReport:
    """Is ``X`` a lambda-symmetry with the given scalar ``lam``?"""
    sampler = sampler or Sampler()
    env, keep = _sample(ds, sampler, guards)
    res, ok = lambda_residual_batch(ds, X, lam, env)
    return _report("lambda", ds, res, ok & keep, env, tol, sampler, {"lambda": str(lambda_expr(ds, lam))})


def _matrix_exprs(ds, Lambda):
    rows = [[lambda_expr(ds, e) for e in row] for row in Lambda]
    if len(rows) != ds.n or any(len(r) != ds.n for r in rows):
        raise BindingError(f"Lambda must be {ds.n} x {ds.n}")
    return rows


def capital_lambda_residual_batch(ds, X, Lambda, env):
    res, phi, ok = symmetry_residual_batch(ds, X, env)
    rows = _matrix_exprs(ds, Lambda)
    shape = phi.shape[:-1]
    mat = np.zeros(shape + (ds.n, ds.n))
    for a, row in enumerate(rows):
        for b, e in enumerate(row):
            v, ok_e = ex.evaluate_batch(e, env)
            mat[..., a, b] = v
            ok = ok & ok_e
    return res + np.einsum("...ab,...b->...a", mat, phi), ok


def check_capital_lambda(ds, X, Lambda, sampler=None, tol=DEFAULT_TOL, guards=()) -> CheckReport:
    """Is ``X`` a Lambda-symmetry for the n x n matrix ``Lambda``?"""
    sampler = sampler or Sampler()
    env, keep = _sample(ds, sampler, guards)
    res, ok = capital_lambda_residual_batch(ds, X, Lambda, env)
    return _report("Lambda", ds, res, ok & keep, env, tol, sampler)


def estimate_lambda_batch(ds, X, env, eps=1e-8):
    """Least-squares scalar lambda per point and the part of the residual
    it cannot explain. Returns ``(lambda_hat, defect, ok)``; points with
    ``|phi| <= eps`` are marked not ok."""
    res, phi, ok = symmetry_residual_batch(ds, X, env)
    phi2 = np.einsum("...a,...a->...", phi, phi)
    degenerate = np.sqrt(phi2) <= eps
    with np.errstate(all="ignore"):
        lam = -np.einsum("...a,...a->...", res, phi) / phi2
    defect = np.linalg.norm(res + lam[..., None] * phi, axis=-1)
    return lam, defect, ok & ~degenerate


def estimate_lambda(ds, X, pt: Point, eps=1e-8):
    """``(lambda_hat, defect)`` at one point.

    ``lambda_hat = -(R . phi) / (phi . phi)`` with ``R`` the standard residual;
    ``defect = |R + lambda_hat phi|`` vanishes exactly when ``R`` is parallel
    to ``phi``.
    """
    pt = ds.point(pt)
    env = {k: np.float64(v) for k, v in pt.env().items()}
    res, phi, ok = symmetry_residual_batch(ds, X, env)
    if not ok:
        raise DomainError(f"symmetry residual undefined at {pt.to_dict()}")
    if np.linalg.norm(phi) <= eps:
        raise DegenerateFieldError(f"|phi| <= {eps} at {pt.to_dict()}")
    lam, defect, _ = estimate_lambda_batch(ds, X, env, eps)
    return float(lam), float(defect)


def exponential_lift(X: VectorField, lambda0: float, time: str = "t") -> VectorField:
    """``exp(lambda0 t) X``: for constant lambda this turns a lambda-symmetry
    into a standard one."""
    if lambda0 == 0:
        return X
    factor = ex.call("exp", ex.mul(ex.Const(float(lambda0)), ex.Var(time)))
    tau = None if X.tau is None else ex.mul(factor, X.tau)
    return VectorField(tuple(ex.mul(factor, p) for p in X.phi), tau)
