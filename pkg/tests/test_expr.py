import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from helpers import fd_gradient, fd_hessian, polynomials, scalar_fn, trees
from symflow import expr as ex
from symflow.errors import (
    BindingError,
    DomainError,
    ExprSyntaxError,
    NonFiniteError,
    UnknownIdentifierError,
)
from symflow.expr import Add, Call, Const, Div, Mul, Neg, Point, Pow, Sub, Var

XYZ = ("x", "y", "z")
CANON = ("q1", "q2", "p1", "p2")


def pt(**values):
    t = values.pop("t", 0.0)
    return Point(values, t)


class TestParse:
    def test_division_by_power(self):
        assert ex.parse("z/y^2", XYZ) == Div(Var("z"), Pow(Var("y"), Const(2.0)))

    def test_function_call(self):
        assert ex.parse("exp(q1+q2)", CANON) == Call("exp", (Add(Var("q1"), Var("q2")),))

    def test_unknown_function(self):
        with pytest.raises(UnknownIdentifierError):
            ex.parse("foo(x)", ["x"])

    def test_unknown_variable(self):
        with pytest.raises(UnknownIdentifierError):
            ex.parse("x + w", ["x"])

    def test_unary_minus_looser_than_power(self):
        assert ex.parse("-x^2", ["x"]) == Neg(Pow(Var("x"), Const(2.0)))

    def test_power_right_associative(self):
        assert ex.parse("x^2^3", ["x"]) == Pow(Var("x"), Pow(Const(2.0), Const(3.0)))

    def test_negative_exponent(self):
        assert ex.parse("x^-1", ["x"]) == Pow(Var("x"), Neg(Const(1.0)))

    def test_left_associative_subtraction(self):
        assert ex.parse("x - y - z", XYZ) == Sub(Sub(Var("x"), Var("y")), Var("z"))

    def test_precedence(self):
        assert ex.parse("x + y*z", XYZ) == Add(Var("x"), Mul(Var("y"), Var("z")))

    def test_scientific_notation(self):
        assert ex.parse("1.5e-3", []) == Const(1.5e-3)

    def test_pow_function_arity(self):
        assert ex.parse("pow(x, 2)", ["x"]) == Call("pow", (Var("x"), Const(2.0)))
        with pytest.raises(ExprSyntaxError):
            ex.parse("pow(x)", ["x"])

    @pytest.mark.parametrize("text", ["x +", "(x", "x)", "x $ y", "2 3", "", "exp"])
    def test_syntax_errors_carry_position(self, text):
        with pytest.raises(ExprSyntaxError) as info:
            ex.parse(text, ["x", "y"])
        assert 0 <= info.value.position <= len(text)

    def test_variable_named_like_function(self):
        with pytest.raises(BindingError):
            ex.parse("exp + 1", ["exp"])


class TestPrintRoundTrip:
    @given(trees(XYZ))
    @settings(max_examples=300, deadline=None)
    def test_raw_trees(self, e):
        assert ex.parse(ex.to_string(e), XYZ) == e

    @given(polynomials(XYZ))
    @settings(max_examples=100, deadline=None)
    def test_parsed_polynomials(self, text):
        e = ex.parse(text, XYZ)
        assert ex.parse(str(e), XYZ) == e

    @pytest.mark.parametrize("text", ["-x^2", "(-x)^2", "x^y^z", "(x^y)^z", "x - (y - z)", "x / (y * z)", "--x", "x * -y"])
    def test_tricky(self, text):
        e = ex.parse(text, XYZ)
        assert ex.parse(ex.to_string(e), XYZ) == e


class TestEvaluate:
    def test_arithmetic(self):
        assert ex.evaluate(ex.parse("z - 2*y^2", XYZ), pt(x=0, y=1, z=3)) == 1.0

    def test_exp_at_zero(self):
        assert ex.evaluate(ex.parse("exp(x)", ["x"]), pt(x=0)) == 1.0

    @pytest.mark.parametrize(
        "text, value",
        [("log(x)", -1.0), ("sqrt(x)", -1.0), ("1/x", 0.0), ("x^-2", 0.0), ("x^0.5", -4.0), ("log(x)", 0.0)],
    )
    def test_domain_errors(self, text, value):
        with pytest.raises(DomainError):
            ex.evaluate(ex.parse(text, ["x"]), pt(x=value))

    def test_overflow(self):
        with pytest.raises(NonFiniteError):
            ex.evaluate(ex.parse("exp(x)", ["x"]), pt(x=1000.0))

    def test_abs_is_total(self):
        assert ex.evaluate(ex.parse("abs(x)", ["x"]), pt(x=0.0)) == 0.0

    def test_integer_power_of_negative(self):
        assert ex.evaluate(ex.parse("x^3", ["x"]), pt(x=-2.0)) == -8.0

    def test_time_variable(self):
        e = ex.parse("x*t", ["x", "t"])
        assert ex.evaluate(e, pt(x=2.0, t=3.0)) == 6.0

    def test_deterministic(self):
        e = ex.parse("sin(x)*exp(y) - log(z)/3", XYZ)
        p = pt(x=0.3, y=-0.7, z=1.9)
        assert ex.evaluate(e, p) == ex.evaluate(e, p)

    def test_unbound_variable(self):
        with pytest.raises(BindingError):
            ex.evaluate(ex.parse("x + y", XYZ), pt(x=1.0))

    def test_batch_masks_bad_points(self):
        vals, ok = ex.evaluate_batch(ex.parse("log(x)", ["x"]), {"x": np.array([1.0, -1.0, 0.0, 2.0])})
        assert ok.tolist() == [True, False, False, True]
        assert vals[0] == 0.0 and vals[3] == pytest.approx(math.log(2))


class TestDerivatives:
    def test_power_rule(self):
        assert ex.grad(ex.parse("x^2", ["x"]), pt(x=3.0)).tolist() == [6.0]

    def test_constant_gradient_is_zero(self):
        assert ex.grad(ex.parse("4.2", XYZ), pt(x=1.0, y=2.0, z=3.0)).tolist() == [0.0, 0.0, 0.0]

    def test_toda_gradient_against_finite_differences(self):
        H = ex.parse("p1^2/2 + p2^2/2 + exp(q1 + q2) + exp(q1 - q2)", CANON)
        p0 = Point.from_vector(CANON, [0, 0, 0, 0])
        g = ex.grad(H, p0)
        assert g[:2] == pytest.approx([2.0, 0.0], abs=1e-12)
        assert np.allclose(g, fd_gradient(scalar_fn(H, CANON), np.zeros(4)), atol=1e-6)

    def test_partial_t(self):
        e = ex.parse("exp(2*t)*x", ["x", "t"])
        assert ex.partial_t(e, pt(x=1.5, t=0.0)) == pytest.approx(3.0)

    def test_hessian_bilinear(self):
        assert ex.hessian(ex.parse("x*y", ["x", "y"]), pt(x=0.4, y=-1.1)).tolist() == [[0.0, 1.0], [1.0, 0.0]]

    def test_hessian_exp_sum(self):
        h = ex.hessian(ex.parse("exp(q1+q2)", ["q1", "q2"]), pt(q1=0.0, q2=0.0))
        assert h.tolist() == [[1.0, 1.0], [1.0, 1.0]]

    def test_hessian_of_kappa2_against_finite_differences(self):
        k2 = ex.parse("exp(2*t)*(x^2 + y^2 - z/2)", XYZ + ("t",))
        u = np.array([0.7, 1.3, 0.4])
        p0 = Point.from_vector(XYZ, u, 0.35)
        fd = fd_hessian(scalar_fn(k2, XYZ, 0.35), u)
        assert np.allclose(ex.hessian(k2, p0)[:3, :3], fd, atol=1e-5)

    def test_abs_derivative_at_kink(self):
        with pytest.raises(DomainError):
            ex.grad(ex.parse("abs(x)", ["x"]), pt(x=0.0))

    def test_abs_derivative_is_sign(self):
        e = ex.parse("abs(x)", ["x"])
        assert ex.grad(e, pt(x=-2.0))[0] == -1.0 and ex.grad(e, pt(x=3.0))[0] == 1.0

    @given(polynomials(XYZ), st.tuples(*[st.floats(-2, 2)] * 3))
    @settings(max_examples=100, deadline=None)
    def test_gradient_matches_finite_differences(self, text, u):
        e = ex.parse(text, XYZ)
        g = ex.grad(e, Point.from_vector(XYZ, u))
        fd = fd_gradient(scalar_fn(e, XYZ), np.array(u))
        assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)

    @given(polynomials(XYZ + ("t",), max_degree=3), st.tuples(*[st.floats(-2, 2)] * 4))
    @settings(max_examples=60, deadline=None)
    def test_hessian_exactly_symmetric(self, text, u):
        e = ex.parse(text, XYZ + ("t",))
        h = ex.hessian(e, Point.from_vector(XYZ, u[:3], u[3]))
        assert np.array_equal(h, h.T)

    @given(st.sampled_from(["sin(x)*exp(y)", "log(1 + x^2)*cosh(y)", "sqrt(2 + x)*tanh(x*y)",
                            "pow(x^2 + 1, y)", "abs(x - 3)/(1 + y^2)", "sinh(x)/cos(y)"]),
           st.floats(-1, 1), st.floats(-1, 1))
    @settings(max_examples=60, deadline=None)
    def test_transcendental_gradient_and_hessian(self, text, x, y):
        e = ex.parse(text, ["x", "y"])
        u = np.array([x, y])
        p0 = Point.from_vector(("x", "y"), u)
        fn = scalar_fn(e, ("x", "y"))
        assert np.allclose(ex.grad(e, p0), fd_gradient(fn, u), rtol=1e-6, atol=1e-6)
        assert np.allclose(ex.hessian(e, p0), fd_hessian(fn, u), rtol=1e-4, atol=1e-4)


class TestStructural:
    @pytest.mark.parametrize(
        "text", ["x^3*y", "exp(x*y)", "log(x^2 + 1)", "sin(x)/y", "x^y", "sqrt(x^2 + y^2)", "abs(x)*y", "pow(x, 3)"]
    )
    def test_diff_agrees_with_dual_numbers(self, text):
        e = ex.parse(text, ["x", "y"])
        p0 = pt(x=0.8, y=1.7)
        for i, name in enumerate(["x", "y"]):
            assert ex.evaluate(ex.diff(e, name), p0) == pytest.approx(ex.grad(e, p0)[i], rel=1e-13)

    def test_diff_folds_constants(self):
        assert ex.diff(ex.parse("3*x + 2", ["x"]), "x") == Const(3.0)
        assert ex.diff(ex.parse("y", ["x", "y"]), "x") == Const(0.0)

    def test_substitute(self):
        e = ex.substitute(ex.parse("x*y", ["x", "y"]), {"y": ex.parse("x + 1", ["x"])})
        assert ex.evaluate(e, pt(x=2.0)) == 6.0

    def test_operator_overloads(self):
        x, y = Var("x"), Var("y")
        e = (x + 1) * y - x / 2
        assert ex.evaluate(e, pt(x=2.0, y=3.0)) == 8.0


class TestCompiled:
    @given(polynomials(XYZ), st.tuples(*[st.floats(-2, 2)] * 3))
    @settings(max_examples=60, deadline=None)
    def test_compiled_matches_batch(self, text, u):
        e = ex.parse(text, XYZ)
        fn = ex.compile_scalar([e], XYZ)
        batch, ok = ex.evaluate_batch(e, dict(zip(XYZ, (np.float64(v) for v in u))))
        assert ok
        assert fn(*u)[0] == pytest.approx(float(batch), rel=1e-12, abs=1e-12)

    def test_compiled_domain_error(self):
        fn = ex.compile_scalar([ex.parse("log(x)", ["x"])], ["x"])
        with pytest.raises(DomainError):
            fn(-1.0)


class TestPoint:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Point({"x": float("nan")})

    def test_time_clash(self):
        with pytest.raises(BindingError):
            Point({"t": 1.0})

    def test_vector_round_trip(self):
        p0 = Point.from_vector(XYZ, [1, 2, 3], 0.5)
        assert p0.vector().tolist() == [1.0, 2.0, 3.0] and p0.t == 0.5
