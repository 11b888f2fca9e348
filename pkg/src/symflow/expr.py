"""Expression trees over named variables: parsing, printing, evaluation and
exact differentiation.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``a^b^c`` is ``a^(b^c)``.

Numeric work happens in three places:

* :func:`evaluate_batch` / :func:`gradient_batch` / :func:`hessian_batch` walk
  the tree once per derivative direction with (nested) :class:`~symflow.dual.Dual`
  numbers whose parts are numpy arrays, so a whole batch of points is handled
  per walk.  Points that hit a domain error are masked, not raised.
* :func:`compile_scalar` turns a tree into a plain Python function of floats.
  Integrators call it thousands of times, where the batch machinery is too slow.
* :func:`diff` builds the derivative as a new tree, for the few places where a
  derivative has to be an expression (Hamiltonian fields, gamma_x, ...).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from symflow import dual
from symflow.dual import Dual
from symflow.errors import (
    BindingError,
    DomainError,
    ExprSyntaxError,
    NonFiniteError,
    UnknownIdentifierError,
)

FUNCTIONS = {
    "exp": 1,
    "log": 1,
    "sin": 1,
    "cos": 1,
    "sinh": 1,
    "cosh": 1,
    "tanh": 1,
    "sqrt": 1,
    "abs": 1,
    "pow": 2,
}


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class of all expression nodes. Nodes are immutable."""

    @cached_property
    def variables(self) -> frozenset:
        """Names referenced anywhere in the tree."""
        return frozenset().union(*(c.variables for c in self.children()))

    def children(self) -> tuple:
        return ()

    def __str__(self):
        return to_string(self)

    # building trees from Python; these fold trivial constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __pow__(self, other):
        return power(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    # pointwise conveniences
    def eval(self, pt: Point) -> float:
        return evaluate(self, pt)

    def grad(self, pt: Point) -> np.ndarray:
        return grad(self, pt)

    def hessian(self, pt: Point) -> np.ndarray:
        return hessian(self, pt)


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    @cached_property
    def variables(self):
        return frozenset()


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str

    @cached_property
    def variables(self):
        return frozenset((self.name,))


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class _Binary(Expr):
    left: Expr
    right: Expr
    symbol = "?"

    def children(self):
        return (self.left, self.right)


class Add(_Binary):
    symbol = "+"


class Sub(_Binary):
    symbol = "-"


class Mul(_Binary):
    symbol = "*"


class Div(_Binary):
    symbol = "/"


class Pow(_Binary):
    symbol = "^"


@dataclass(frozen=True, eq=True)
class Call(Expr):
    func: str
    args: tuple

    def children(self):
        return self.args


def _wrap(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


# ---------------------------------------------------------------------------
# constructors with constant folding (no further simplification)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


def add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a):
    if isinstance(a, Const):
        return Const(0.0 - a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a, b):
    if _is_const(b, 0.0):
        return Const(1.0)
    if _is_const(b, 1.0):
        return a
    return Pow(a, b)


def call(func, *args):
    if FUNCTIONS.get(func) != len(args):
        raise ValueError(f"{func} takes {FUNCTIONS.get(func)} argument(s)")
    return Call(func, tuple(_wrap(a) for a in args))


def var(name: str) -> Var:
    return Var(name)


def const(value: float) -> Const:
    return Const(float(value))


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", text, start)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.names = names
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.advance()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self.text, pos)

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", self.text, pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self):
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return Pow(base, self.factor())
        return base

    def atom(self):
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise UnknownIdentifierError(
                        f"unknown function {val!r}", self.text, pos
                    )
                self.advance()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ExprSyntaxError(
                        f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}",
                        self.text,
                        pos,
                    )
                return Call(val, tuple(args))
            if val in self.names:
                return Var(val)
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} needs arguments", self.text, pos)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", self.text, pos)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", self.text, pos)


def parse(text: str, variables: Iterable[str]) -> Expr:
    """Parse ``text`` into a tree. Identifiers must be in ``variables`` or
    be one of the reserved function names."""
    names = set(variables)
    clash = names & FUNCTIONS.keys()
    if clash:
        raise BindingError(f"variable names clash with functions: {sorted(clash)}")
    return _Parser(text, names).parse()


def as_expr(value, variables: Iterable[str]) -> Expr:
    """Accept an Expr, a number or expression text."""
    if isinstance(value, Expr):
        unknown = value.variables - set(variables)
        if unknown:
            raise BindingError(f"undeclared variables {sorted(unknown)}")
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    return parse(value, variables)


# ---------------------------------------------------------------------------
# printing

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e):
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return _PREC.get(type(e), 5)


def _fmt_const(v):
    if not math.isfinite(v):
        raise ValueError(f"cannot print non-finite constant {v}")
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v)) if v != 0 or math.copysign(1.0, v) > 0 else "-0"
    return repr(v)


def to_string(e: Expr) -> str:
    """Render ``e`` so that :func:`parse` gives the same tree back."""

    def wrap(child, ok):
        s = to_string(child)
        return s if ok else f"({s})"

    if isinstance(e, Const):
        return _fmt_const(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return "-" + wrap(e.arg, _prec(e.arg) >= 3)
    if isinstance(e, Pow):
        return f"{wrap(e.left, _prec(e.left) >= 5)}^{wrap(e.right, _prec(e.right) >= 3)}"
    if isinstance(e, _Binary):
        p = _PREC[type(e)]
        lhs = wrap(e.left, _prec(e.left) >= p)
        rhs = wrap(e.right, _prec(e.right) > p)
        return f"{lhs} {e.symbol} {rhs}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    raise TypeError(type(e))


# ---------------------------------------------------------------------------
# structural operations


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if not (e.variables & mapping.keys()):
        return e
    if isinstance(e, Var):
        return mapping[e.name]
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, _Binary):
        return type(e)(substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.func, tuple(substitute(a, mapping) for a in e.args))
    return e


def diff(e: Expr, name: str) -> Expr:
    """Derivative of ``e`` with respect to ``name`` as a new tree."""
    if name not in e.variables:
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0)
    if isinstance(e, Neg):
        return neg(diff(e.arg, name))
    if isinstance(e, Add):
        return add(diff(e.left, name), diff(e.right, name))
    if isinstance(e, Sub):
        return sub(diff(e.left, name), diff(e.right, name))
    if isinstance(e, Mul):
        a, b = e.left, e.right
        return add(mul(diff(a, name), b), mul(a, diff(b, name)))
    if isinstance(e, Div):
        a, b = e.left, e.right
        return sub(div(diff(a, name), b), div(mul(a, diff(b, name)), power(b, Const(2.0))))
    if isinstance(e, Pow):
        return _diff_pow(e, e.left, e.right, name)
    if isinstance(e, Call):
        a = e.args[0]
        da = diff(a, name)
        f = e.func
        if f == "exp":
            return mul(e, da)
        if f == "log":
            return div(da, a)
        if f == "sin":
            return mul(call("cos", a), da)
        if f == "cos":
            return neg(mul(call("sin", a), da))
        if f == "sinh":
            return mul(call("cosh", a), da)
        if f == "cosh":
            return mul(call("sinh", a), da)
        if f == "tanh":
            return mul(sub(Const(1.0), power(e, Const(2.0))), da)
        if f == "sqrt":
            return div(da, mul(Const(2.0), e))
        if f == "abs":
            return mul(div(a, e), da)
        if f == "pow":
            return _diff_pow(e, e.args[0], e.args[1], name)
    raise TypeError(type(e))


def _diff_pow(e, base, expo, name):
    if name not in expo.variables:
        return mul(mul(expo, power(base, sub(expo, Const(1.0)))), diff(base, name))
    return mul(
        e,
        add(
            mul(diff(expo, name), call("log", base)),
            div(mul(expo, diff(base, name)), base),
        ),
    )


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True)
class Point:
    """Values of the state variables (in order) plus the time."""

    values: dict
    t: float = 0.0
    time: str = "t"

    def __post_init__(self):
        vals = {k: float(v) for k, v in dict(self.values).items()}
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t", float(self.t))
        if not all(math.isfinite(v) for v in vals.values()) or not math.isfinite(self.t):
            raise ValueError(f"point has non-finite coordinates: {vals}, t={self.t}")
        if self.time in vals:
            raise BindingError(f"time name {self.time!r} is also a state variable")

    @classmethod
    def from_vector(cls, names, u, t=0.0, time="t") -> Point:
        return cls(dict(zip(names, (float(x) for x in u))), t, time)

    @property
    def names(self) -> tuple:
        return tuple(self.values)

    def vector(self) -> np.ndarray:
        return np.array(list(self.values.values()), dtype=float)

    def env(self) -> dict:
        return {**self.values, self.time: self.t}

    def to_dict(self) -> dict:
        return {**self.values, self.time: self.t}


# ---------------------------------------------------------------------------
# batch evaluation


class _Walker:
    """One tree walk over a batch; collects a domain-violation mask."""

    def __init__(self, env):
        self.env = env
        self.bad = False

    def flag(self, mask):
        self.bad = self.bad | mask

    def run(self, e):
        return self._dispatch[type(e)](self, e)

    def _const(self, e):
        return e.value

    def _var(self, e):
        try:
            return self.env[e.name]
        except KeyError:
            raise BindingError(f"no value bound for variable {e.name!r}") from None

    def _neg(self, e):
        return -self.run(e.arg)

    def _add(self, e):
        return self.run(e.left) + self.run(e.right)

    def _sub(self, e):
        return self.run(e.left) - self.run(e.right)

    def _mul(self, e):
        return self.run(e.left) * self.run(e.right)

    def _div(self, e):
        a = self.run(e.left)
        b = self.run(e.right)
        self.flag(dual.primal(b) == 0)
        return a / b

    def _pow(self, e):
        return self._power(e.left, e.right)

    def _power(self, base_node, expo_node):
        base = self.run(base_node)
        pb = dual.primal(base)
        if not expo_node.variables:
            c = float(self.run(expo_node))
            if not c.is_integer():
                self.flag(pb < 0)
            if c < 0:
                self.flag(pb == 0)
            return dual.power_const(base, c)
        expo = self.run(expo_node)
        if isinstance(base, Dual) or isinstance(expo, Dual):
            self.flag(pb <= 0)
        else:
            pe = dual.primal(expo)
            self.flag((pb < 0) & (np.floor(pe) != pe))
            self.flag((pb == 0) & (pe < 0))
        return dual.power(base, expo)

    def _call(self, e):
        f = e.func
        if f == "pow":
            return self._power(e.args[0], e.args[1])
        x = self.run(e.args[0])
        px = dual.primal(x)
        if f == "log" or f == "sqrt":
            self.flag(px <= 0)
        elif f == "abs" and isinstance(x, Dual):
            self.flag(px == 0)
        return _UNARY[f](x)

    _dispatch = {
        Const: _const,
        Var: _var,
        Neg: _neg,
        Add: _add,
        Sub: _sub,
        Mul: _mul,
        Div: _div,
        Pow: _pow,
        Call: _call,
    }


_UNARY = {
    "exp": dual.exp,
    "log": dual.log,
    "sin": dual.sin,
    "cos": dual.cos,
    "sinh": dual.sinh,
    "cosh": dual.cosh,
    "tanh": dual.tanh,
    "sqrt": dual.sqrt,
    "abs": dual.absolute,
}


def _batch_shape(env):
    arrays = [np.asarray(dual.primal(v)) for v in env.values()]
    return np.broadcast_shapes(*(a.shape for a in arrays)) if arrays else ()


def _walk(e, env, shape):
    """Returns (result, domain_mask, nonfinite_mask)."""
    w = _Walker(env)
    with np.errstate(all="ignore"):
        out = w.run(e)
        domain = np.broadcast_to(np.asarray(w.bad, dtype=bool), shape)
        finite = np.ones(shape, dtype=bool)
        for part in dual.parts(out):
            finite &= np.isfinite(np.broadcast_to(part, shape))
    return out, domain, ~finite & ~domain


def _real(x, shape):
    return np.broadcast_to(np.asarray(x, dtype=float), shape).copy()


def _tangent(x, shape):
    if isinstance(x, Dual):
        return _real(x.du, shape)
    return np.zeros(shape)


def evaluate_batch(e: Expr, env: Mapping) -> tuple[np.ndarray, np.ndarray]:
    """Values of ``e`` over a batch; returns ``(values, ok)``. Values at
    points where ``ok`` is False are meaningless."""
    shape = _batch_shape(env)
    out, domain, nonfinite = _walk(e, env, shape)
    return _real(out, shape), ~(domain | nonfinite)


def gradient_batch(e: Expr, env: Mapping, wrt) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values and exact first derivatives with respect to ``wrt``.

    Returns ``(values, grads, ok)`` with ``grads`` of shape ``batch + (len(wrt),)``.
    """
    shape = _batch_shape(env)
    values, ok = evaluate_batch(e, env)
    grads = np.zeros(shape + (len(wrt),))
    for i, name in enumerate(wrt):
        if name not in e.variables:
            continue
        seeded = dict(env)
        seeded[name] = Dual(env[name], 1.0)
        out, domain, nonfinite = _walk(e, seeded, shape)
        grads[..., i] = _tangent(out, shape)
        ok &= ~(domain | nonfinite)
    return values, grads, ok


def hessian_batch(e: Expr, env: Mapping, wrt):
    """Values, gradient and Hessian via dual-over-dual numbers.

    Returns ``(values, grads, hess, ok)``. Only the upper triangle is
    computed; the lower one is mirrored, so the result is exactly symmetric.
    """
    shape = _batch_shape(env)
    k = len(wrt)
    values, grads, ok = gradient_batch(e, env, wrt)
    hess = np.zeros(shape + (k, k))
    for i in range(k):
        if wrt[i] not in e.variables:
            continue
        for j in range(i, k):
            if wrt[j] not in e.variables:
                continue
            seeded = dict(env)
            xi, xj = env[wrt[i]], env[wrt[j]]
            if i == j:
                seeded[wrt[i]] = Dual(Dual(xi, 1.0), Dual(1.0, 0.0))
            else:
                seeded[wrt[i]] = Dual(Dual(xi, 1.0), 0.0)
                seeded[wrt[j]] = Dual(xj, Dual(1.0, 0.0))
            out, domain, nonfinite = _walk(e, seeded, shape)
            if isinstance(out, Dual) and isinstance(out.du, Dual):
                hess[..., i, j] = _real(out.du.du, shape)
            hess[..., j, i] = hess[..., i, j]
            ok &= ~(domain | nonfinite)
    return values, grads, hess, ok


# ---------------------------------------------------------------------------
# pointwise API


def _raise_for(e, env):
    shape = ()
    _, domain, nonfinite = _walk(e, env, shape)
    if domain.any():
        raise DomainError(f"{to_string(e)} is undefined at {env}")
    raise NonFiniteError(f"{to_string(e)} is not finite at {env}")


def _check_bound(e, pt):
    missing = e.variables - set(pt.values) - {pt.time}
    if missing:
        raise BindingError(f"no value bound for {sorted(missing)}")


def evaluate(e: Expr, pt: Point) -> float:
    _check_bound(e, pt)
    env = {k: np.float64(v) for k, v in pt.env().items()}
    values, ok = evaluate_batch(e, env)
    if not ok:
        _raise_for(e, env)
    return float(values)


def grad(e: Expr, pt: Point) -> np.ndarray:
    """Exact gradient with respect to the state variables of ``pt``."""
    _check_bound(e, pt)
    env = {k: np.float64(v) for k, v in pt.env().items()}
    _, g, ok = gradient_batch(e, env, pt.names)
    if not ok:
        raise DomainError(f"derivative of {to_string(e)} is undefined at {pt.to_dict()}")
    return g


def partial_t(e: Expr, pt: Point) -> float:
    _check_bound(e, pt)
    env = {k: np.float64(v) for k, v in pt.env().items()}
    _, g, ok = gradient_batch(e, env, [pt.time])
    if not ok:
        raise DomainError(f"derivative of {to_string(e)} is undefined at {pt.to_dict()}")
    return float(g[0])


def hessian(e: Expr, pt: Point) -> np.ndarray:
    """Exact Hessian with respect to the state variables of ``pt``."""
    _check_bound(e, pt)
    env = {k: np.float64(v) for k, v in pt.env().items()}
    _, _, h, ok = hessian_batch(e, env, pt.names)
    if not ok:
        raise DomainError(f"second derivative of {to_string(e)} is undefined at {pt.to_dict()}")
    return h


# ---------------------------------------------------------------------------
# compiled scalar evaluation


def _c_div(a, b):
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _c_log(a):
    if a <= 0:
        raise DomainError(f"log of non-positive value {a}")
    return math.log(a)


def _c_sqrt(a):
    if a <= 0:
        raise DomainError(f"sqrt of non-positive value {a}")
    return math.sqrt(a)


def _c_pow(a, b):
    if a < 0 and not float(b).is_integer():
        raise DomainError(f"negative base {a} with non-integer exponent {b}")
    if a == 0 and b < 0:
        raise DomainError("zero to a negative power")
    return a**b


_C_FUNCS = {
    "exp": "math.exp",
    "log": "_c_log",
    "sin": "math.sin",
    "cos": "math.cos",
    "sinh": "math.sinh",
    "cosh": "math.cosh",
    "tanh": "math.tanh",
    "sqrt": "_c_sqrt",
    "abs": "abs",
    "pow": "_c_pow",
}


def _py_source(e, argnames):
    if isinstance(e, Const):
        return f"({e.value!r})"
    if isinstance(e, Var):
        return argnames[e.name]
    if isinstance(e, Neg):
        return f"(-{_py_source(e.arg, argnames)})"
    if isinstance(e, Div):
        return f"_c_div({_py_source(e.left, argnames)}, {_py_source(e.right, argnames)})"
    if isinstance(e, Pow):
        return f"_c_pow({_py_source(e.left, argnames)}, {_py_source(e.right, argnames)})"
    if isinstance(e, _Binary):
        return f"({_py_source(e.left, argnames)} {e.symbol} {_py_source(e.right, argnames)})"
    if isinstance(e, Call):
        args = ", ".join(_py_source(a, argnames) for a in e.args)
        return f"{_C_FUNCS[e.func]}({args})"
    raise TypeError(type(e))


def compile_scalar(exprs, names):
    """Compile expressions into ``fn(*values) -> list[float]`` over ``names``.

    Raises DomainError / NonFiniteError like :func:`evaluate`.
    """
    exprs = list(exprs)
    argnames = {n: f"_a{i}" for i, n in enumerate(names)}
    for e in exprs:
        unknown = e.variables - argnames.keys()
        if unknown:
            raise BindingError(f"undeclared variables {sorted(unknown)}")
    body = ", ".join(_py_source(e, argnames) for e in exprs)
    src = f"def _fn({', '.join(argnames.values())}):\n    return [{body}]\n"
    scope = {
        "math": math,
        "_c_div": _c_div,
        "_c_log": _c_log,
        "_c_sqrt": _c_sqrt,
        "_c_pow": _c_pow,
    }
    exec(compile(src, "<symflow-expr>", "exec"), scope)
    raw = scope["_fn"]

    def fn(*values):
        try:
            out = raw(*values)
        except (ValueError, ZeroDivisionError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(str(exc)) from None
        except OverflowError as exc:
            raise NonFiniteError(str(exc)) from None
        for v in out:
            if not math.isfinite(v):
                raise NonFiniteError("non-finite value")
        return out

    return fn
