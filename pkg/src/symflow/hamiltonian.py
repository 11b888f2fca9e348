"""Canonical systems: Hamiltonian fields, generating functions, Poisson
brackets and the deviation of a generating function from conservation.

Vectors are ordered ``(q1..qm, p1..pm)`` and ``J = [[0, I], [-I, 0]]``, so
the equations of motion read ``du/dt = J grad H``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from symflow import expr as ex
from symflow.conserved import trajectory_env
from symflow.dynsys import DynamicalSystem, VectorField, bracket_from_jets, field_jet
from symflow.errors import BindingError, DomainError, MissingGeneratingFunction, PreconditionFailed
from symflow.expr import Expr, Point
from symflow.numint import IntegratorConfig, integrate
from symflow.sampling import CheckReport, Sampler, aggregate
from symflow.symmetry import lambda_expr, check_standard

DEFAULT_TOL = 1e-8


def canonical_names(m: int) -> tuple:
    return tuple(f"q{i + 1}" for i in range(m)) + tuple(f"p{i + 1}" for i in range(m))


def symplectic_matrix(m: int) -> np.ndarray:
    """The 2m x 2m integer matrix ``[[0, I], [-I, 0]]``."""
    eye = np.eye(m, dtype=int)
    zero = np.zeros((m, m), dtype=int)
    return np.block([[zero, eye], [-eye, zero]])


@dataclass(frozen=True)
class HamiltonianSystem:
    """Hamiltonian ``H(q, p, t)`` in ``m`` degrees of freedom and an optional
    time-independent generating function ``G(q, p)``."""

    m: int
    H: Expr
    G: Expr | None = None
    time: str = "t"
    name: str = ""

    def __post_init__(self):
        if self.m < 1:
            raise BindingError("m must be at least 1")
        variables = canonical_names(self.m)
        object.__setattr__(self, "H", ex.as_expr(self.H, variables + (self.time,)))
        if self.G is not None:
            G = ex.as_expr(self.G, variables + (self.time,))
            if self.time in G.variables:
                raise BindingError(f"generating function must not depend on {self.time}: {G}")
            object.__setattr__(self, "G", G)

    @property
    def variables(self) -> tuple:
        return canonical_names(self.m)

    @property
    def n(self) -> int:
        return 2 * self.m

    @property
    def names(self) -> tuple:
        return self.variables + (self.time,)

    @property
    def J(self) -> np.ndarray:
        return symplectic_matrix(self.m)

    def parse(self, text) -> Expr:
        return ex.as_expr(text, self.names)

    def require_G(self) -> Expr:
        if self.G is None:
            raise MissingGeneratingFunction("this operation needs a generating function G")
        return self.G


def _symplectic_gradient(e: Expr, m: int) -> tuple:
    """``J grad e`` as expression trees: ``(d_p e, -d_q e)``."""
    q, p = canonical_names(m)[:m], canonical_names(m)[m:]
    return tuple(ex.diff(e, v) for v in p) + tuple(ex.neg(ex.diff(e, v)) for v in q)


def ham_vector_field(hs: HamiltonianSystem) -> DynamicalSystem:
    """``dq/dt = dH/dp``, ``dp/dt = -dH/dq``."""
    return DynamicalSystem(hs.variables, _symplectic_gradient(hs.H, hs.m), hs.time, name=hs.name)


def field_from_generating(hs: HamiltonianSystem) -> VectorField:
    """``Phi = J grad G``."""
    return VectorField(_symplectic_gradient(hs.require_G(), hs.m))


def poisson_bracket_batch(m, A: Expr, B: Expr, env, names):
    """``{A, B} = sum_k dA/dq_k dB/dp_k - dA/dp_k dB/dq_k``, with gradients."""
    _, ga, ok_a = ex.gradient_batch(A, env, names)
    _, gb, ok_b = ex.gradient_batch(B, env, names)
    out = np.einsum("...k,...k->...", ga[..., :m], gb[..., m:2 * m]) - np.einsum(
        "...k,...k->...", ga[..., m:2 * m], gb[..., :m]
    )
    return out, ok_a & ok_b


def poisson_bracket(hs: HamiltonianSystem, A, B, pt) -> float:
    A, B = hs.parse(A), hs.parse(B)
    pt = _point(hs, pt)
    env = {k: np.float64(v) for k, v in pt.env().items()}
    out, ok = poisson_bracket_batch(hs.m, A, B, env, hs.names)
    if not ok:
        raise DomainError(f"Poisson bracket undefined at {pt.to_dict()}")
    return float(out)


def _point(hs, pt, t=0.0) -> Point:
    if isinstance(pt, Point):
        return pt
    if isinstance(pt, dict):
        return Point({v: pt[v] for v in hs.variables}, pt.get(hs.time, t), hs.time)
    return Point.from_vector(hs.variables, pt, t, hs.time)


def gdot_gradient_batch(hs: HamiltonianSystem, env):
    """``G_dot = {G, H}`` and its gradient over ``(q, p)`` from exact second derivatives."""
    m, n = hs.m, hs.n
    G = hs.require_G()
    _, gG, hG, ok_g = ex.hessian_batch(G, env, hs.names)
    _, gH, hH, ok_h = ex.hessian_batch(hs.H, env, hs.names)
    Gq, Gp, Hq, Hp = gG[..., :m], gG[..., m:n], gH[..., :m], gH[..., m:n]
    value = np.einsum("...k,...k->...", Gq, Hp) - np.einsum("...k,...k->...", Gp, Hq)
    # d/du_c of each product, restricted to state components c < n
    grad = (
        np.einsum("...kc,...k->...c", hG[..., :m, :n], Hp)
        + np.einsum("...k,...kc->...c", Gq, hH[..., m:n, :n])
        - np.einsum("...kc,...k->...c", hG[..., m:n, :n], Hq)
        - np.einsum("...k,...kc->...c", Gp, hH[..., :m, :n])
    )
    return value, grad, ok_g & ok_h


def _sample(hs, sampler):
    sampler = sampler or Sampler()
    return sampler, sampler.draw(hs.variables, hs.time)


def _report(check, hs, res, ok, env, tol, sampler, params=None):
    return aggregate(
        check, np.max(np.abs(res), axis=-1), ok, env, hs.variables, hs.time, tol, sampler, (), params
    )


def check_gradient_identity(hs: HamiltonianSystem, sampler=None, tol=DEFAULT_TOL) -> CheckReport:
    """``grad(D_t G) = -J([F, Phi] + d_t Phi)``, which holds for any smooth ``G`` and ``H``.

    The left side uses nested-dual second derivatives of ``G`` and ``H``;
    the right side the Lie bracket of the structurally differentiated fields.
    """
    sampler, env = _sample(hs, sampler)
    _, lhs, ok_l = gdot_gradient_batch(hs, env)
    ds = ham_vector_field(hs)
    F, jF, _, ok_f = field_jet(ds.f, env, hs.variables, hs.time)
    Phi, jPhi, dt_phi, ok_p = field_jet(field_from_generating(hs).phi, env, hs.variables, hs.time)
    rhs = -np.einsum("ab,...b->...a", hs.J, bracket_from_jets(F, jF, Phi, jPhi) + dt_phi)
    return _report("gradient_identity", hs, lhs - rhs, ok_l & ok_f & ok_p, env, tol, sampler)


def check_generator_conserved(hs: HamiltonianSystem, sampler=None, tol=DEFAULT_TOL) -> CheckReport:
    """A generating function of a standard symmetry is conserved and invariant.

    Raises :class:`PreconditionFailed` unless ``J grad G`` passes the standard
    symmetry check. The residual is ``max(|D_t G|, |X G|)``.
    """
    sampler = sampler or Sampler()
    ds = ham_vector_field(hs)
    Phi = field_from_generating(hs)
    sym = check_standard(ds, Phi, sampler, tol)
    if not sym.passed:
        raise PreconditionFailed(
            f"J grad G is not a standard symmetry (max residual {sym.max_residual:.3g})"
        )
    _, env = _sample(hs, sampler)
    G = hs.require_G()
    gdot, ok_d = poisson_bracket_batch(hs.m, G, hs.H, env, hs.names)
    _, gG, ok_g = ex.gradient_batch(G, env, hs.names)
    phi = np.einsum("ab,...b->...a", hs.J, gG[..., :-1])
    xg = np.einsum("...a,...a->...", phi, gG[..., :-1])
    report = _report("generator_conserved", hs, np.stack([gdot, xg], axis=-1), ok_d & ok_g, env, tol, sampler)
    report.extra["max_Gdot"] = float(np.nanmax(np.abs(gdot)))
    report.extra["max_XG"] = float(np.nanmax(np.abs(xg)))
    return report


def check_deviation_lambda(hs: HamiltonianSystem, lam, sampler=None, tol=DEFAULT_TOL) -> CheckReport:
    """Residual ``grad(G_dot) + lambda grad G``."""
    ds = ham_vector_field(hs)
    lam = lambda_expr(ds, lam)
    sampler, env = _sample(hs, sampler)
    _, lhs, ok = gdot_gradient_batch(hs, env)
    _, gG, ok_g = ex.gradient_batch(hs.require_G(), env, hs.names)
    lv, ok_l = ex.evaluate_batch(lam, env)
    res = lhs + np.asarray(lv)[..., None] * gG[..., :-1]
    return _report("deviation_lambda", hs, res, ok & ok_g & ok_l, env, tol, sampler, {"lambda": str(lam)})


def check_deviation_capital_lambda(hs: HamiltonianSystem, Lambda, sampler=None, tol=DEFAULT_TOL) -> CheckReport:
    """Residual ``grad(G_dot) - J Lambda J grad G``."""
    ds = ham_vector_field(hs)
    rows = [[lambda_expr(ds, e) for e in row] for row in Lambda]
    n = hs.n
    if len(rows) != n or any(len(r) != n for r in rows):
        raise BindingError(f"Lambda must be {n} x {n}")
    sampler, env = _sample(hs, sampler)
    _, lhs, ok = gdot_gradient_batch(hs, env)
    _, gG, ok_g = ex.gradient_batch(hs.require_G(), env, hs.names)
    ok = ok & ok_g
    mat = np.zeros(lhs.shape[:-1] + (n, n))
    for a, row in enumerate(rows):
        for b, e in enumerate(row):
            v, ok_e = ex.evaluate_batch(e, env)
            mat[..., a, b] = v
            ok = ok & ok_e
    J = hs.J
    target = np.einsum("ab,...bc,cd,...d->...a", J, mat, J, gG[..., :-1])
    return _report("deviation_Lambda", hs, lhs - target, ok, env, tol, sampler)


@dataclass
class DeviationSeries:
    """``G`` and ``G_dot = {G, H}`` on the output grid, plus optional columns."""

    t: np.ndarray
    G: np.ndarray
    Gdot: np.ndarray
    columns: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)

    def table(self) -> tuple:
        """Header and rows for CSV output."""
        header = ["t", "G", "Gdot", *self.columns]
        data = np.column_stack([self.t, self.G, self.Gdot, *self.columns.values()])
        return header, data


def track_generating_function(
    hs: HamiltonianSystem,
    u0,
    t_span,
    cfg: IntegratorConfig | None = None,
    closed_forms: Mapping | None = None,
    invariants: Mapping | None = None,
) -> DeviationSeries:
    """Integrate the Hamiltonian flow and record ``G`` and ``G_dot`` along it.

    ``closed_forms`` are expressions in ``t`` and ``G0`` (the initial value of
    ``G``) to compare against. ``invariants`` are expressions in the canonical
    variables, time and ``G``; each becomes an extra column.
    """
    G = hs.require_G()
    ds = ham_vector_field(hs)
    cfg = cfg or IntegratorConfig()
    traj = integrate(ds, u0, t_span, cfg)
    env = trajectory_env(ds, traj)
    g, ok_g = ex.evaluate_batch(G, env)
    gdot, ok_d = poisson_bracket_batch(hs.m, G, hs.H, env, hs.names)
    if not np.all(ok_g & ok_d):
        raise DomainError("G or {G, H} undefined along the trajectory")
    g = np.broadcast_to(g, traj.t.shape).astype(float)

    columns = {}
    for name, text in (closed_forms or {}).items():
        e = ex.as_expr(text, (hs.time, "G0"))
        v, ok = ex.evaluate_batch(e, {hs.time: traj.t, "G0": np.full_like(traj.t, g[0])})
        if not np.all(ok):
            raise DomainError(f"closed form {name} undefined on the grid")
        columns[name] = np.broadcast_to(v, traj.t.shape).astype(float)
    for name, text in (invariants or {}).items():
        e = ex.substitute(ex.as_expr(text, hs.names + ("G",)), {"G": G})
        v, ok = ex.evaluate_batch(e, env)
        if not np.all(ok):
            raise DomainError(f"invariant {name} undefined on the grid")
        columns[name] = np.broadcast_to(v, traj.t.shape).astype(float)
    return DeviationSeries(traj.t, g, np.asarray(gdot, dtype=float), columns, traj.stats())
