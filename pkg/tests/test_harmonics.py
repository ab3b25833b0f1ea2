import itertools
import math

import numpy as np
import pytest

from fraclab.core import ObstacleSpec, WeightParams
from fraclab.harmonics import (GrushinModelSolution, PolynomialOnRn,
                               SolidHarmonic, XYPolynomial,
                               basis_solid_harmonics, extension_coefficients,
                               extend_la_harmonic, extend_polynomial,
                               grushin_model_solution, la_apply,
                               nonneg_trace_check, orthogonality_check,
                               stratum_dimension, taylor_polynomial)


def all_monomials(n, max_deg):
    for d in range(max_deg + 1):
        for combo in itertools.combinations_with_replacement(range(n), d):
            beta = [0] * n
            for i in combo:
                beta[i] += 1
            yield tuple(beta)


class TestExtension:
    def test_x2_classical(self):
        p = WeightParams.from_s(0.5, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        assert e.coeffs == {((2,), 0): 1.0, ((0,), 2): -1.0}

    @pytest.mark.parametrize("s", [0.2, 0.4, 0.6, 0.8])
    def test_x2_general_s(self, s):
        p = WeightParams.from_s(s, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        assert e.coeffs[((0,), 2)] == pytest.approx(-1.0 / (2 - 2 * s))
        assert la_apply(e, p).max_abs_coeff() == 0.0

    def test_x4_classical(self):
        p = WeightParams.from_s(0.5, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        assert e.coeffs == {((4,), 0): 1.0, ((2,), 2): -6.0, ((0,), 4): 1.0}

    def test_constant_unchanged(self):
        p = WeightParams.from_s(0.3, 2)
        e = extend_la_harmonic(PolynomialOnRn(2, {(0, 0): 3.0}), p)
        assert e.coeffs == {((0, 0), 0): 3.0}

    def test_rejects_nonhomogeneous(self):
        p = WeightParams.from_s(0.3, 1)
        with pytest.raises(ValueError):
            extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0, (1,): 1.0}), p)

    def test_all_monomials_annihilated(self):
        # every monomial with |beta| <= 6, n <= 3, three values of s
        for s in (0.25, 0.5, 0.75):
            for n in (1, 2, 3):
                p = WeightParams.from_s(s, n)
                for beta in all_monomials(n, 6):
                    q = PolynomialOnRn.monomial(n, beta)
                    ext = extend_la_harmonic(q, p)
                    res = la_apply(ext, p)
                    scale = max(ext.max_abs_coeff(), 1.0)
                    assert res.max_abs_coeff() <= 1e-12 * scale, (s, n, beta)
                    # trace recovery is exact
                    tr = ext.trace()
                    assert tr.coeffs == q.coeffs

    def test_linearity_and_zero(self):
        p = WeightParams.from_s(0.4, 2)
        q1 = PolynomialOnRn(2, {(2, 0): 1.0})
        q2 = PolynomialOnRn(2, {(0, 2): -0.5})
        lhs = extend_la_harmonic(q1.add(q2), p)
        rhs = extend_la_harmonic(q1, p).add(extend_la_harmonic(q2, p))
        diff = lhs.add(rhs.scale(-1.0))
        assert diff.max_abs_coeff() <= 1e-15
        zero = extend_polynomial(PolynomialOnRn(2), p)
        assert zero.is_zero()

    def test_extend_polynomial_mixed_degrees(self):
        p = WeightParams.from_s(0.3, 1)
        q = PolynomialOnRn(1, {(0,): 2.0, (2,): 1.0, (3,): -1.0})
        ext = extend_polynomial(q, p)
        assert la_apply(ext, p).max_abs_coeff() <= 1e-14
        assert ext.trace().coeffs == q.coeffs

    def test_coefficient_growth_bound(self):
        # |c_2k| <= 2 sqrt(k) for k <= 20; the constant is s-dependent
        # (c_2 = 1/(2-2s) alone exceeds any fixed bound as s -> 1), so the
        # check runs on the working s grid where 2 is valid
        for s in (0.25, 0.5, 0.75):
            cs = extension_coefficients(20, WeightParams.from_s(s, 1))
            for k, c in enumerate(cs[1:], start=1):
                assert abs(c) <= 2.0 * math.sqrt(k)


class TestLaApply:
    def test_reference_values(self):
        p = WeightParams.from_s(0.3, 1)  # a = 0.4
        res = la_apply(XYPolynomial(1, {((2,), 0): 1.0}), p)
        assert res.coeffs == {((0,), 0): 2.0}
        res = la_apply(XYPolynomial(1, {((0,), 2): 1.0}), p)
        assert res.coeffs[((0,), 0)] == pytest.approx(2.0 + 2 * 0.4)

    def test_rejects_odd_powers(self):
        p = WeightParams.from_s(0.3, 1)
        with pytest.raises(ValueError):
            la_apply(XYPolynomial(1, {((0,), 1): 1.0}), p)


class TestBasis:
    def test_degree_zero(self):
        p = WeightParams.from_s(0.4, 2)
        basis = basis_solid_harmonics(0, 2, p)
        assert len(basis) == 1
        assert basis[0].coeffs == {((0, 0), 0): 1.0}

    def test_counts(self):
        p = WeightParams.from_s(0.4, 2)
        assert len(basis_solid_harmonics(2, 2, p)) == 3
        assert len(basis_solid_harmonics(3, 1, p)) == 1
        p3 = WeightParams.from_s(0.4, 3)
        assert len(basis_solid_harmonics(4, 3, p3)) == math.comb(4 + 2, 2)

    def test_traces_are_normalized_monomials(self):
        p = WeightParams.from_s(0.4, 2)
        traces = [b.trace().coeffs for b in basis_solid_harmonics(2, 2, p)]
        assert {(2, 0): 0.5} in traces
        assert {(1, 1): 1.0} in traces
        assert {(0, 2): 0.5} in traces

    def test_linear_independence(self):
        p = WeightParams.from_s(0.3, 2)
        basis = basis_solid_harmonics(4, 2, p)
        keys = sorted({k for b in basis for k in b.coeffs})
        M = np.array([[b.coeffs.get(k, 0.0) for k in keys] for b in basis])
        assert np.linalg.matrix_rank(M) == len(basis)


class TestNonnegTrace:
    def test_psd_quadratic(self):
        p = WeightParams.from_s(0.5, 2)
        sh = extend_la_harmonic(PolynomialOnRn(2, {(2, 0): 1.0}), p)
        assert nonneg_trace_check(sh)["status"] == "certified-nonneg"

    def test_indefinite_quadratic_witness(self):
        p = WeightParams.from_s(0.5, 2)
        sh = extend_la_harmonic(
            PolynomialOnRn(2, {(2, 0): 1.0, (0, 2): -1.0}), p)
        out = nonneg_trace_check(sh)
        assert out["status"] == "certified-negative-witness"
        w = out["witness"]
        assert sh.trace().evaluate(w[None, :])[0] < 0

    def test_diagonal_quartic(self):
        p = WeightParams.from_s(0.5, 2)
        sh = extend_la_harmonic(
            PolynomialOnRn(2, {(4, 0): 1.0, (0, 4): 1.0}), p)
        assert nonneg_trace_check(sh, budget=10000)["status"] == "certified-nonneg"

    def test_undetermined_path(self):
        # nonnegative quartic that is neither diagonal nor degree two:
        # (x1^2 - x2^2)^2 has mixed negative coefficient
        p = WeightParams.from_s(0.5, 2)
        q = PolynomialOnRn(2, {(4, 0): 1.0, (2, 2): -2.0, (0, 4): 1.0})
        sh = extend_la_harmonic(q, p)
        assert nonneg_trace_check(sh, budget=2000)["status"] == "undetermined"


class TestStratumDimension:
    def test_line_degeneracy(self):
        p = WeightParams.from_s(0.5, 2)
        sh = extend_la_harmonic(PolynomialOnRn(2, {(2, 0): 1.0}), p)
        assert stratum_dimension(sh) == 1

    def test_isolated_point(self):
        p = WeightParams.from_s(0.5, 2)
        sh = extend_la_harmonic(
            PolynomialOnRn(2, {(2, 0): 1.0, (0, 2): 1.0}), p)
        assert stratum_dimension(sh) == 0

    def test_one_dimensional_case(self):
        p = WeightParams.from_s(0.5, 1)
        sh = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        assert stratum_dimension(sh) == 0

    def test_rotation_invariance(self, rng):
        p = WeightParams.from_s(0.5, 2)
        for _ in range(10):
            th = rng.uniform(0, 2 * np.pi)
            c, s = math.cos(th), math.sin(th)
            # rotate the rank-one trace (c x1 + s x2)^2
            q = PolynomialOnRn(2, {(2, 0): c * c, (1, 1): 2 * c * s,
                                   (0, 2): s * s})
            sh = extend_la_harmonic(q, p)
            assert stratum_dimension(sh) == 1

    def test_zero_rejected(self):
        p = WeightParams.from_s(0.5, 2)
        sh = SolidHarmonic(2, {((0, 0), 0): 0.0}, p, degree=0)
        with pytest.raises(ValueError):
            stratum_dimension(sh)


class TestGrushinModel:
    def test_alpha_one(self):
        gm = grushin_model_solution(1, 1.0)
        assert gm.A == pytest.approx(6.0)
        poly = gm.as_polynomial()
        assert poly.coeffs == {((2,), 0): 6.0, ((0,), 4): -1.0}
        # D_zz P + z^2 P_xx = -12 z^2 + 12 z^2 = 0 at samples
        x = np.array([[0.3], [1.0]])
        z = np.array([0.5, -1.2])
        dzz = -12.0 * z ** 2
        lap_x = 2 * gm.A * np.ones(2)
        assert np.allclose(dzz + np.abs(z) ** 2 * lap_x, 0.0)

    def test_alpha_zero_classical(self):
        gm = grushin_model_solution(1, 0.0)
        assert gm.A == pytest.approx(1.0)
        assert gm.degree == pytest.approx(2.0)

    def test_n2_alpha_zero(self):
        gm = grushin_model_solution(2, 0.0)
        assert gm.A == pytest.approx(0.5)

    def test_homogeneity(self):
        gm = grushin_model_solution(1, 0.7)
        x = np.array([[0.4]])
        z = np.array([0.9])
        lam = 1.7
        scaled = gm.evaluate(lam ** 1.7 * x, lam * z)
        assert scaled[0] == pytest.approx(lam ** gm.degree * gm.evaluate(x, z)[0])


class TestTaylor:
    def test_polynomial_reproduced(self):
        obs = ObstacleSpec(kind="polynomial", n=1, k=3, gamma=0.5,
                           coefficients={"0": 1.0, "2": -1.0, "3": 0.5})
        q = taylor_polynomial(obs, [0.2], 3)
        # q is in the shifted variable; compare values
        d = np.linspace(-0.5, 0.5, 11)[:, None]
        assert np.allclose(q.evaluate(d), obs.value(0.2 + d), atol=1e-12)

    def test_sine_reference(self):
        obs = ObstacleSpec(
            kind="callable", n=1, k=3, gamma=0.5,
            func=lambda x: np.sin(x[:, 0]),
            derivatives={(1,): lambda x: np.cos(x[:, 0]),
                         (2,): lambda x: -np.sin(x[:, 0]),
                         (3,): lambda x: -np.cos(x[:, 0])})
        q = taylor_polynomial(obs, [0.0], 3)
        assert q.coeffs[(1,)] == pytest.approx(1.0)
        assert q.coeffs[(3,)] == pytest.approx(-1.0 / 6.0)
        assert (2,) not in q.coeffs

    def test_degree_zero(self):
        obs = ObstacleSpec(kind="polynomial", n=1, k=2, gamma=0.5,
                           coefficients={"0": 2.5, "1": 1.0})
        q = taylor_polynomial(obs, [0.3], 0)
        assert q.coeffs == {(0,): pytest.approx(2.8)}

    def test_remainder_order(self):
        obs = ObstacleSpec(
            kind="callable", n=1, k=2, gamma=1.0 - 1e-9,
            func=lambda x: np.cos(x[:, 0]),
            derivatives={(1,): lambda x: -np.sin(x[:, 0]),
                         (2,): lambda x: -np.cos(x[:, 0])})
        q = taylor_polynomial(obs, [0.0], 2)
        d = np.array([[0.1], [0.05], [0.025]])
        err = np.abs(obs.value(d) - q.evaluate(d))
        assert np.all(err <= 1.1 * np.abs(d[:, 0]) ** 3 / 6)

    def test_missing_derivative_errors(self):
        obs = ObstacleSpec(kind="callable", n=1, k=2, gamma=0.5,
                           func=lambda x: np.sin(x[:, 0]),
                           derivatives={(1,): lambda x: np.cos(x[:, 0])})
        with pytest.raises(ValueError):
            taylor_polynomial(obs, [0.0], 2)


class TestOrthogonality:
    def test_model_solution_vs_constant(self):
        p = WeightParams.from_s(0.25, 1)  # alpha = 1
        gm = grushin_model_solution(1, p.alpha)

        class One:
            degree = 0.0

            def evaluate(self, x, z):
                return np.ones(np.atleast_2d(x).shape[0])

        val = orthogonality_check(gm, One(), p, r=1.0)
        assert abs(val) <= 1e-8

    def test_odd_pair_vanishes(self):
        p = WeightParams.from_s(0.25, 1)

        class X1:
            degree = p.alpha + 1.0

            def evaluate(self, x, z):
                return np.atleast_2d(x)[:, 0]

        class Z:
            degree = 1.0

            def evaluate(self, x, z):
                return np.asarray(z, dtype=float)

        val = orthogonality_check(X1(), Z(), p, r=0.8)
        assert abs(val) <= 1e-12

    def test_classical_spherical_harmonics(self):
        p = WeightParams.from_s(0.5, 1)  # alpha = 0: Euclidean circle

        class P1:
            degree = 1.0

            def evaluate(self, x, z):
                return np.atleast_2d(x)[:, 0]

        class P2:
            degree = 2.0

            def evaluate(self, x, z):
                return np.atleast_2d(x)[:, 0] ** 2 - np.asarray(z) ** 2

        val = orthogonality_check(P1(), P2(), p, r=1.0)
        assert abs(val) <= 1e-10

    def test_equal_degrees_rejected(self):
        p = WeightParams.from_s(0.25, 1)
        gm = grushin_model_solution(1, p.alpha)
        with pytest.raises(ValueError):
            orthogonality_check(gm, gm, p, r=1.0)


class TestSerialization:
    def test_json_roundtrip(self):
        p = WeightParams.from_s(0.3, 2)
        sh = extend_la_harmonic(PolynomialOnRn(2, {(2, 0): 1.0}), p)
        text = sh.to_json(s=p.s)
        back = XYPolynomial.from_json(text)
        assert back.coeffs == sh.coeffs
