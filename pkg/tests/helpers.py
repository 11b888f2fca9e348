"""Shared strategies and independent numerical oracles for the test suite."""

import itertools

import numpy as np
from hypothesis import strategies as st

from symflow import expr as ex


def monomials(names, max_degree):
    """All exponent tuples of total degree <= max_degree."""
    return [e for e in itertools.product(range(max_degree + 1), repeat=len(names)) if sum(e) <= max_degree]


def poly_text(names, coeffs):
    """Polynomial text from ``{exponent tuple: coefficient}``."""
    terms = []
    for expo, c in coeffs.items():
        factors = [repr(float(c))]
        for n, k in zip(names, expo):
            if k:
                factors.append(n if k == 1 else f"{n}^{k}")
        terms.append("*".join(factors))
    return " + ".join(terms) if terms else "0"


def random_poly(rng, names, max_degree=3, n_terms=5, scale=1.0):
    basis = monomials(names, max_degree)
    picks = rng.choice(len(basis), size=min(n_terms, len(basis)), replace=False)
    return poly_text(names, {basis[i]: rng.uniform(-scale, scale) for i in picks})


@st.composite
def polynomials(draw, names, max_degree=3, max_terms=5):
    basis = monomials(names, max_degree)
    chosen = draw(st.lists(st.sampled_from(basis), min_size=1, max_size=max_terms, unique=True))
    coeffs = {e: draw(st.floats(-2, 2, allow_nan=False).filter(lambda c: abs(c) > 1e-3)) for e in chosen}
    return poly_text(names, coeffs)


def trees(names):
    """Raw expression trees (no folding) with non-negative constants."""
    leaves = st.one_of(
        st.sampled_from(names).map(ex.Var),
        st.one_of(
            st.integers(0, 50).map(float),
            st.floats(0, 1e6, allow_nan=False, allow_infinity=False),
        ).map(ex.Const),
    )

    def extend(children):
        binary = st.sampled_from([ex.Add, ex.Sub, ex.Mul, ex.Div, ex.Pow])
        unary_funcs = st.sampled_from(["exp", "log", "sin", "cos", "sinh", "cosh", "tanh", "sqrt", "abs"])
        return st.one_of(
            st.builds(lambda c, a, b: c(a, b), binary, children, children),
            children.map(ex.Neg),
            st.builds(lambda f, a: ex.Call(f, (a,)), unary_funcs, children),
            st.builds(lambda a, b: ex.Call("pow", (a, b)), children, children),
        )

    return st.recursive(leaves, extend, max_leaves=12)


def fd_gradient(fn, x, h=1e-6):
    """Central differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def fd_hessian(fn, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            ei, ej = np.zeros(n), np.zeros(n)
            ei[i], ej[j] = h, h
            H[i, j] = (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)) / (4 * h * h)
    return H


def scalar_fn(e, names, t=0.0, time="t"):
    """Plain-float evaluation of ``e`` as a function of the state vector."""
    def fn(u):
        return ex.evaluate(e, ex.Point.from_vector(names, u, t, time))
    return fn
