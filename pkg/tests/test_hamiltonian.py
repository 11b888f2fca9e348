import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import polynomials, random_poly
from symflow import expr as ex
from symflow.errors import BindingError, MissingGeneratingFunction, PreconditionFailed
from symflow.hamiltonian import (
    HamiltonianSystem,
    canonical_names,
    check_deviation_capital_lambda,
    check_deviation_lambda,
    check_gradient_identity,
    check_generator_conserved,
    field_from_generating,
    gdot_gradient_batch,
    ham_vector_field,
    poisson_bracket,
    symplectic_matrix,
    track_generating_function,
)
from symflow.sampling import Sampler

CANON = canonical_names(2)
point4 = st.tuples(*[st.floats(-2, 2)] * 4)
TODA_LAMBDA = [[0, 0, 0, 0], [0, 0, 0, 0], ["-2*exp(q1 + q2)", 0, 0, 0], [0, "-2*exp(q1 + q2)", 0, 0]]


def values(exprs, pt):
    return [ex.evaluate(e, pt) for e in exprs]


class TestStructure:
    @pytest.mark.parametrize("m", [1, 2, 3, 5])
    def test_symplectic_algebra(self, m):
        J = symplectic_matrix(m)
        assert np.array_equal(J @ J, -np.eye(2 * m))
        assert np.array_equal(J.T @ J, np.eye(2 * m))
        assert np.array_equal(J.T, -J)

    def test_time_dependent_generating_function(self):
        with pytest.raises(BindingError):
            HamiltonianSystem(1, "p1^2/2", "q1*t")

    def test_missing_generating_function(self):
        with pytest.raises(MissingGeneratingFunction):
            field_from_generating(HamiltonianSystem(1, "p1^2/2"))

    def test_oscillator_field(self):
        ds = ham_vector_field(HamiltonianSystem(1, "(p1^2 + q1^2)/2"))
        p = ds.point([0.3, -0.8])
        assert values(ds.f, p) == [-0.8, -0.3]

    def test_example3_field(self, example):
        hs = example("example3").hamiltonian
        ds = ham_vector_field(hs)
        p = ds.point([0.4, -0.2, 1.3, 0.5])
        assert values(ds.f, p)[2] == pytest.approx(-0.5 * 1.3 ** 3)

    def test_toda_field(self, example):
        hs = example("example4").hamiltonian
        ds = ham_vector_field(hs)
        q1, q2 = 0.4, -0.2
        p = ds.point([q1, q2, 1.3, 0.5])
        assert values(ds.f, p)[2] == pytest.approx(-(np.exp(q1 + q2) + np.exp(q1 - q2)))

    @pytest.mark.parametrize("name, phi", [("example3", [1, 0, 0, 0]), ("example4", [1, 1, 0, 0])])
    def test_generating_field(self, example, name, phi):
        hs = example(name).hamiltonian
        p = ex.Point.from_vector(CANON, [0.1, 0.2, 0.3, 0.4])
        assert values(field_from_generating(hs).phi, p) == phi

    def test_generating_with_hamiltonian(self):
        H = "p1^2*q2 + sin(q1)*p2"
        hs = HamiltonianSystem(2, H, H)
        p = ex.Point.from_vector(CANON, [0.1, 0.2, 0.3, 0.4])
        assert values(field_from_generating(hs).phi, p) == values(ham_vector_field(hs).f, p)


class TestPoisson:
    def test_canonical(self):
        hs = HamiltonianSystem(2, "0")
        for u in ([0, 0, 0, 0], [1.0, -2.0, 0.3, 0.7]):
            assert poisson_bracket(hs, "q1", "p1", u) == 1.0
            assert poisson_bracket(hs, "q1", "p2", u) == 0.0

    def test_toda_gdot(self, example):
        hs = example("example4").hamiltonian
        u = [0.3, -0.5, 0.2, 0.9]
        assert poisson_bracket(hs, hs.G, hs.H, u) == pytest.approx(-2 * np.exp(-0.2), rel=1e-13)

    @given(polynomials(CANON), polynomials(CANON), point4)
    @settings(max_examples=60, deadline=None)
    def test_antisymmetry(self, a, b, u):
        hs = HamiltonianSystem(2, "0")
        assert poisson_bracket(hs, a, b, u) == pytest.approx(-poisson_bracket(hs, b, a, u), abs=1e-10)
        assert poisson_bracket(hs, a, a, u) == 0.0

    @given(polynomials(CANON, 2, 3), polynomials(CANON, 2, 3), polynomials(CANON, 2, 3), point4)
    @settings(max_examples=60, deadline=None)
    def test_leibniz(self, a, b, c, u):
        hs = HamiltonianSystem(2, "0")
        p = ex.Point.from_vector(CANON, u)
        A, B, C = (hs.parse(s) for s in (a, b, c))
        lhs = poisson_bracket(hs, A, ex.mul(B, C), u)
        rhs = ex.evaluate(B, p) * poisson_bracket(hs, A, C, u) + poisson_bracket(hs, A, B, u) * ex.evaluate(C, p)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("fixture", ["example3", "example4", "rotation", "free_particle"])
    def test_field_annihilates_generator(self, example, fixture):
        hs = example(fixture).hamiltonian
        env = Sampler(n_points=200).draw(hs.variables, hs.time)
        G = hs.require_G()
        _, g, ok = ex.gradient_batch(G, env, hs.names)
        phi = np.einsum("ab,...b->...a", hs.J, g[..., :-1])
        assert np.max(np.abs(np.einsum("...a,...a->...", phi, g[..., :-1]))[ok]) <= 1e-12


class TestGradientIdentity:
    def test_random_polynomials(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            hs = HamiltonianSystem(2, random_poly(rng, CANON), random_poly(rng, CANON))
            assert check_gradient_identity(hs, Sampler(n_points=500, seed=int(rng.integers(1 << 30)))).passed

    @given(polynomials(CANON + ("t",), 3, 5), polynomials(CANON, 3, 5))
    @settings(max_examples=30, deadline=None)
    def test_time_dependent_hamiltonian(self, H, G):
        assert check_gradient_identity(HamiltonianSystem(2, H, G), Sampler(n_points=50)).passed

    @pytest.mark.parametrize("fixture", ["example3", "example4", "rotation"])
    def test_fixtures(self, example, fixture):
        assert check_gradient_identity(example(fixture).hamiltonian, example(fixture).sampler(200)).passed

    def test_example3_value(self, example):
        # grad of G_dot = -p1^3/2
        hs = example("example3").hamiltonian
        env = {k: np.float64(v) for k, v in zip(hs.names, [0.2, 0.4, 1.1, -0.3, 0.0])}
        value, grad, ok = gdot_gradient_batch(hs, env)
        assert value == pytest.approx(-0.5 * 1.1 ** 3)
        assert grad.tolist() == pytest.approx([0, 0, -1.5 * 1.1 ** 2, 0])

    def test_constant_generator(self):
        rep = check_gradient_identity(HamiltonianSystem(1, "p1^4 + q1^3", "2.5"), Sampler(n_points=50))
        assert rep.max_residual == 0.0


class TestGeneratorConserved:
    @pytest.mark.parametrize("fixture", ["free_particle", "rotation"])
    def test_passes(self, example, fixture):
        rep = check_generator_conserved(example(fixture).hamiltonian, example(fixture).sampler(200))
        assert rep.passed and rep.extra["max_XG"] <= 1e-12

    def test_lambda_symmetry_is_rejected(self, example):
        with pytest.raises(PreconditionFailed):
            check_generator_conserved(example("example3").hamiltonian)


class TestDeviation:
    def test_example3_lambda(self, example):
        spec = example("example3")
        assert check_deviation_lambda(spec.hamiltonian, "3*p1^2/2", spec.sampler(500)).passed

    def test_zero_lambda_for_conserved_pair(self, example):
        assert check_deviation_lambda(example("rotation").hamiltonian, "0").max_residual <= 1e-12

    @pytest.mark.parametrize("lam", ["0", "1", "exp(q1 + q2)", "p1*p2"])
    def test_example4_no_scalar(self, example, lam):
        assert not check_deviation_lambda(example("example4").hamiltonian, lam).passed

    def test_example4_matrix(self, example):
        spec = example("example4")
        assert check_deviation_capital_lambda(spec.hamiltonian, TODA_LAMBDA, spec.sampler(500), 1e-8).passed

    def test_example4_transposed(self, example):
        transposed = [list(r) for r in zip(*TODA_LAMBDA)]
        assert not check_deviation_capital_lambda(example("example4").hamiltonian, transposed).passed

    def test_zero_matrix_for_conserved_pair(self, example):
        zero = [[0] * 4 for _ in range(4)]
        assert check_deviation_capital_lambda(example("free_particle").hamiltonian, zero).max_residual == 0.0


class TestTracking:
    def test_example3_closed_form(self, example):
        spec = example("example3")
        series = track_generating_function(
            spec.hamiltonian, spec.trajectory["u0"], (0, 10), closed_forms=spec.closed_forms
        )
        assert np.max(np.abs(series.G - (1 + series.t) ** -0.5)) <= 1e-6
        assert np.max(np.abs(series.G - series.columns["G_exact"])) <= 1e-6
        assert np.max(np.abs(series.Gdot - series.columns["Gdot_exact"])) <= 1e-6

    def test_gdot_is_not_differenced(self, example):
        spec = example("example3")
        series = track_generating_function(spec.hamiltonian, [0, 0, 1, 0], (0, 10))
        assert np.allclose(series.Gdot, -0.5 * series.G ** 3, rtol=1e-13)

    def test_conserved_pair(self, example):
        spec = example("rotation")
        series = track_generating_function(spec.hamiltonian, spec.trajectory["u0"], (0, 10))
        assert np.max(np.abs(series.G - series.G[0])) <= 1e-8

    def test_toda_bounds(self, example):
        spec = example("example4")
        series = track_generating_function(
            spec.hamiltonian, spec.trajectory["u0"], (0, 10), invariants=spec.invariants
        )
        I = series.columns["I"]
        c1 = np.sqrt(I[0])
        assert np.max(np.abs(I - I[0])) <= 1e-6
        assert np.all(np.abs(series.G) <= 2 * c1 + 1e-6)
        assert np.all(np.abs(series.Gdot) <= 2 * c1 ** 2 + 1e-6)

    def test_table(self, example):
        spec = example("example3")
        header, data = track_generating_function(
            spec.hamiltonian, [0, 0, 1, 0], (0, 1), closed_forms=spec.closed_forms
        ).table()
        assert header == ["t", "G", "Gdot", "G_exact", "Gdot_exact"]
        assert data.shape == (201, 5)
