"""Dynamical systems, vector fields and the algebra between them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from symflow import expr as ex
from symflow.errors import BindingError, DomainError, ZeroSigmaError
from symflow.expr import Expr, Point


@dataclass(frozen=True)
class DynamicalSystem:
    """``du_a/dt = f_a(u, t)`` for ``a = 1..n``.

    ``f`` may be given as strings; they are parsed against ``variables`` and
    ``time``. ``positive`` names variables that must be sampled > 0.
    """

    variables: tuple
    f: tuple
    time: str = "t"
    positive: frozenset = field(default_factory=frozenset)
    name: str = ""

    def __post_init__(self):
        variables = tuple(self.variables)
        if not variables:
            raise BindingError("a dynamical system needs at least one variable")
        if len(set(variables)) != len(variables) or self.time in variables:
            raise BindingError(f"variable names must be distinct from each other and from time: {variables}")
        names = variables + (self.time,)
        f = tuple(ex.as_expr(fa, names) for fa in self.f)
        if len(f) != len(variables):
            raise BindingError(f"{len(variables)} variables but {len(f)} right-hand sides")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "positive", frozenset(self.positive))

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> tuple:
        """State variables followed by the time name."""
        return self.variables + (self.time,)

    def parse(self, text) -> Expr:
        return ex.as_expr(text, self.names)

    def point(self, u, t=0.0) -> Point:
        if isinstance(u, Point):
            return u
        if isinstance(u, dict):
            return Point({v: u[v] for v in self.variables}, u.get(self.time, t), self.time)
        return Point.from_vector(self.variables, u, t, self.time)

    def as_field(self) -> VectorField:
        return VectorField(self.f)

    def rhs(self):
        """Fast ``rhs(t, u) -> ndarray`` for integrators."""
        fn = ex.compile_scalar(self.f, self.names)

        def rhs(t, u):
            return np.array(fn(*u, t))

        return rhs


@dataclass(frozen=True)
class VectorField:
    """``X = phi . grad_u + tau d/dt``; ``tau=None`` means no time component."""

    phi: tuple
    tau: Expr | None = None

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(self.phi))

    @classmethod
    def parse(cls, phi, names, tau=None) -> VectorField:
        return cls(
            tuple(ex.as_expr(p, names) for p in phi),
            None if tau is None else ex.as_expr(tau, names),
        )

    @property
    def n(self) -> int:
        return len(self.phi)

    def bind(self, ds: DynamicalSystem) -> VectorField:
        """Check component count and variables against ``ds``."""
        if self.n != ds.n:
            raise BindingError(f"field has {self.n} components, system has {ds.n}")
        allowed = set(ds.names)
        for e in self.phi + ((self.tau,) if self.tau is not None else ()):
            unknown = e.variables - allowed
            if unknown:
                raise BindingError(f"field uses undeclared variables {sorted(unknown)}")
        return self


@dataclass(frozen=True)
class LambdaSpec:
    """Either a scalar ``lambda(u, t)`` or an n x n matrix ``Lambda(u, t)``."""

    scalar: Expr | None = None
    matrix: tuple | None = None

    def __post_init__(self):
        if (self.scalar is None) == (self.matrix is None):
            raise ValueError("give exactly one of scalar or matrix")
        if self.matrix is not None:
            rows = tuple(tuple(r) for r in self.matrix)
            if any(len(r) != len(rows) for r in rows):
                raise BindingError("Lambda must be square")
            object.__setattr__(self, "matrix", rows)

    @property
    def is_scalar(self) -> bool:
        return self.scalar is not None


def _components(obj):
    if isinstance(obj, DynamicalSystem):
        return obj.f
    if isinstance(obj, VectorField):
        return obj.phi
    return tuple(obj)


# ---------------------------------------------------------------------------
# batch kernels; env maps every name to an array of points


def field_jet(exprs, env, variables, time):
    """Values ``(N, n)``, Jacobian ``(N, n, n)`` with ``[.., a, b] = d e_a / d u_b``,
    time derivatives ``(N, n)`` and the validity mask."""
    wrt = tuple(variables) + (time,)
    vals, grads, oks = [], [], []
    for e in exprs:
        v, g, ok = ex.gradient_batch(e, env, wrt)
        vals.append(v)
        grads.append(g)
        oks.append(ok)
    vals = np.stack(vals, axis=-1)
    grads = np.stack(grads, axis=-2)
    ok = np.logical_and.reduce(oks)
    return vals, grads[..., :-1], grads[..., -1], ok


def bracket_from_jets(f, jf, phi, jphi):
    return np.einsum("...ab,...b->...a", jphi, f) - np.einsum("...ab,...b->...a", jf, phi)


def lie_bracket_batch(f_exprs, phi_exprs, env, variables, time):
    """``[f, phi]_a = f_b d_b phi_a - phi_b d_b f_a`` over a batch."""
    f, jf, _, ok_f = field_jet(f_exprs, env, variables, time)
    phi, jphi, _, ok_p = field_jet(phi_exprs, env, variables, time)
    return bracket_from_jets(f, jf, phi, jphi), ok_f & ok_p


def total_derivative_batch(kappa, ds, env):
    """``D_t kappa = d_t kappa + f . grad kappa`` over a batch."""
    _, g, ok = ex.gradient_batch(kappa, env, ds.names)
    evals = [ex.evaluate_batch(fa, env) for fa in ds.f]
    f = np.stack([v for v, _ in evals], axis=-1)
    ok_f = np.logical_and.reduce([o for _, o in evals])
    return g[..., -1] + np.einsum("...a,...a->...", f, g[..., :-1]), ok & ok_f


def divergence_batch(exprs, env, variables, time):
    _, jac, _, ok = field_jet(exprs, env, variables, time)
    return np.trace(jac, axis1=-2, axis2=-1), ok


def _single(pt):
    return {k: np.float64(v) for k, v in pt.env().items()}


def _raise_unless(ok, what, pt):
    if not np.all(ok):
        raise DomainError(f"{what} is undefined at {pt.to_dict()}")


# ---------------------------------------------------------------------------
# pointwise operations


def lie_bracket(f, phi, pt: Point) -> np.ndarray:
    """``[f, phi]`` at ``pt``; ``f`` and ``phi`` are systems, fields or expression lists."""
    out, ok = lie_bracket_batch(_components(f), _components(phi), _single(pt), pt.names, pt.time)
    _raise_unless(ok, "Lie bracket", pt)
    return out


def total_derivative(kappa: Expr, ds: DynamicalSystem, pt: Point) -> float:
    out, ok = total_derivative_batch(kappa, ds, _single(ds.point(pt)))
    _raise_unless(ok, "total derivative", pt)
    return float(out)


def divergence(fld, pt: Point) -> float:
    out, ok = divergence_batch(_components(fld), _single(pt), pt.names, pt.time)
    _raise_unless(ok, "divergence", pt)
    return float(out)


def evolutionary_form(X: VectorField, ds: DynamicalSystem) -> VectorField:
    """``phi - tau f`` with the time component dropped."""
    X.bind(ds)
    if X.tau is None:
        return X
    return VectorField(tuple(ex.sub(p, ex.mul(X.tau, fa)) for p, fa in zip(X.phi, ds.f)))


# ---------------------------------------------------------------------------
# constructive families


class ScalingFamily(NamedTuple):
    system: DynamicalSystem
    symmetry: VectorField
    lambda_field: VectorField | None
    lam: LambdaSpec | None


def _monomial(name, exponent):
    if float(exponent).is_integer():
        return ex.power(ex.Var(name), ex.Const(float(exponent)))
    return ex.call("exp", ex.mul(ex.Const(float(exponent)), ex.call("log", ex.Var(name))))


def build_scaling_family(
    sigma: Sequence[float],
    lambda0: float,
    P: Sequence,
    variables: Sequence[str] | None = None,
    time: str = "t",
) -> ScalingFamily:
    """System ``du_a/dt = sigma_a u_a + g_a`` with ``g_a = u_a^(1 - lambda0/sigma_a) P_a``.

    It admits ``X = exp(lambda0 t) g . grad`` whenever each ``P_a`` is a
    function of the ratios ``u_b^sigma_c / u_c^sigma_b``. That structure is
    not checked here; run :func:`symflow.symmetry.check_standard` on the result.
    For ``lambda0 != 0`` the plain field ``g . grad`` is returned as well,
    with the constant scalar lambda it satisfies.
    """
    n = len(sigma)
    if variables is None:
        variables = tuple(f"u{i + 1}" for i in range(n))
    variables = tuple(variables)
    if len(P) != n or len(variables) != n:
        raise BindingError("sigma, P and variables must have the same length")
    if any(s == 0 for s in sigma):
        raise ZeroSigmaError(f"sigma entries must be nonzero: {list(sigma)}")
    names = variables + (time,)
    P = [ex.as_expr(p, names) for p in P]

    g, positive = [], set()
    for name, s, p in zip(variables, sigma, P):
        exponent = 1.0 - lambda0 / s
        if not float(exponent).is_integer():
            positive.add(name)
        g.append(ex.mul(_monomial(name, exponent), p))
    f = [ex.add(ex.mul(ex.Const(float(s)), ex.Var(v)), ga) for s, v, ga in zip(sigma, variables, g)]
    ds = DynamicalSystem(variables, tuple(f), time, frozenset(positive))

    if lambda0 == 0:
        return ScalingFamily(ds, VectorField(tuple(g)), None, None)
    factor = ex.call("exp", ex.mul(ex.Const(float(lambda0)), ex.Var(time)))
    X = VectorField(tuple(ex.mul(factor, ga) for ga in g))
    return ScalingFamily(ds, X, VectorField(tuple(g)), LambdaSpec(scalar=ex.Const(float(lambda0))))


class GammaFamily(NamedTuple):
    system: DynamicalSystem
    symmetry: VectorField
    gamma_x: Expr


def build_gamma_family(
    gamma,
    F,
    variables: Sequence[str] = ("x", "y"),
    time: str = "t",
    w_name: str = "w",
) -> GammaFamily:
    """``x' = y``, ``y' = y^2 gamma_x / gamma + gamma F(y / gamma)`` with the
    symmetry ``gamma d/dx + y gamma_x d/dy``.

    ``gamma`` is an expression in ``x`` only and ``F`` one in ``w_name`` only.
    """
    x, y = variables
    gamma = ex.as_expr(gamma, (x,))
    F = ex.as_expr(F, (w_name,))
    gamma_x = ex.diff(gamma, x)
    Y = ex.Var(y)
    F_of = ex.substitute(F, {w_name: ex.div(Y, gamma)})
    ydot = ex.add(ex.div(ex.mul(ex.power(Y, ex.Const(2.0)), gamma_x), gamma), ex.mul(gamma, F_of))
    ds = DynamicalSystem((x, y), (Y, ydot), time)
    sym = VectorField((gamma, ex.mul(Y, gamma_x)))
    return GammaFamily(ds, sym, gamma_x)
