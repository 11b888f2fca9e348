"""Dual numbers for forward-mode differentiation.

A :class:`Dual` carries a value ``re`` and a tangent ``du``.  Both parts may
themselves be duals, so nesting two levels gives exact second derivatives
(``Dual(Dual(x, dx), Dual(dy, dxdy))``).  Parts may also be numpy arrays, in
which case one dual evaluates a whole batch of points at once.
"""

import numpy as np


class Dual:
    __slots__ = ("re", "du")
    # numpy must defer to our reflected operators instead of building object arrays
    __array_ufunc__ = None

    def __init__(self, re, du):
        self.re = re
        self.du = du

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r})"

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re + other.re, self.du + other.du)
        return Dual(self.re + other, self.du)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re - other.re, self.du - other.du)
        return Dual(self.re - other, self.du)

    def __rsub__(self, other):
        return Dual(other - self.re, -self.du)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.re * other.re, self.re * other.du + self.du * other.re)
        return Dual(self.re * other, self.du * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.re / other.re
            return Dual(q, (self.du - q * other.du) / other.re)
        return Dual(self.re / other, self.du / other)

    def __rtruediv__(self, other):
        q = other / self.re
        return Dual(q, -q * self.du / self.re)


def primal(x):
    """Innermost real value of a (possibly nested) dual."""
    while isinstance(x, Dual):
        x = x.re
    return x


def parts(x):
    """Every real component of a nested dual, outermost first."""
    if isinstance(x, Dual):
        return parts(x.re) + parts(x.du)
    return [x]


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.du)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.re), x.du / x.re)
    return np.log(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.du)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.du)
    return np.cos(x)


def sinh(x):
    if isinstance(x, Dual):
        return Dual(sinh(x.re), cosh(x.re) * x.du)
    return np.sinh(x)


def cosh(x):
    if isinstance(x, Dual):
        return Dual(cosh(x.re), sinh(x.re) * x.du)
    return np.cosh(x)


def tanh(x):
    if isinstance(x, Dual):
        th = tanh(x.re)
        return Dual(th, (1.0 - th * th) * x.du)
    return np.tanh(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.re)
        return Dual(s, x.du / (2.0 * s))
    return np.sqrt(x)


def absolute(x):
    # sign is locally constant away from 0, so it carries no tangent
    if isinstance(x, Dual):
        return x * np.sign(primal(x))
    return np.abs(x)


def power_const(x, c):
    """``x**c`` for a real constant exponent ``c``."""
    if c == 0.0:
        return np.ones_like(primal(x)) if isinstance(x, Dual) else np.power(x, 0.0)
    if c == 1.0:
        return x
    if isinstance(x, Dual):
        return Dual(power_const(x.re, c), c * power_const(x.re, c - 1.0) * x.du)
    return np.power(x, c)


def power(x, y):
    """``x**y`` with a non-constant exponent, through exp(y log x)."""
    if isinstance(x, Dual) or isinstance(y, Dual):
        return exp(y * log(x))
    return np.power(x, y)
