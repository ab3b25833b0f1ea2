import math

import numpy as np
import pytest

from fraclab.core import CallableField, WeightParams, h_transform
from fraclab.functionals import (FunctionalConfig, RadialProfile, dirichlet,
                                 frequency, generalized_frequency,
                                 geometric_radii, grushin_dirichlet,
                                 grushin_frequency, grushin_height, height,
                                 monneau, monneau_drift_check,
                                 monotonicity_report, surface_flux, weiss)
from fraclab.grushin import to_grushin
from fraclab.harmonics import PolynomialOnRn, XYPolynomial, extend_la_harmonic
from fraclab.instances import SignoriniField
from fraclab.quadrature import weighted_sphere_area


def const_field(n, c=1.0):
    return CallableField(n, lambda x, y: np.full(np.atleast_2d(x).shape[0], c),
                         grad=lambda x, y: (np.zeros_like(np.atleast_2d(x)),
                                            np.zeros(np.atleast_2d(x).shape[0])))


class TestHeightDirichletFrequency:
    def test_constant_field(self):
        p = WeightParams.from_s(0.3, 1)
        f = const_field(1)
        r = 0.7
        assert dirichlet(f, [0.0], r, p) == pytest.approx(0.0, abs=1e-14)
        assert frequency(f, [0.0], r, p) == pytest.approx(0.0, abs=1e-12)
        want = r ** (1 + p.a) * weighted_sphere_area(1, p.a)
        assert height(f, [0.0], r, p) == pytest.approx(want, rel=1e-10)

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_exact_extension_frequency_two(self, s):
        p = WeightParams.from_s(s, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        for r in (0.05, 0.2, 0.5):
            assert abs(frequency(e, [0.0], r, p) - 2.0) < 1e-3

    def test_signorini_closed_forms(self):
        # independent derivation: on the circle, u = r^(3/2) cos(3 theta / 2)
        # so H(r) = pi r^4 and |grad u|^2 = (9/4) r gives D(r) = (3 pi/2) r^3
        p = WeightParams.from_s(0.5, 1)
        f = SignoriniField()
        for r in (0.3, 0.8):
            assert height(f, [0.0], r, p) == pytest.approx(math.pi * r ** 4,
                                                           rel=1e-10)
            assert dirichlet(f, [0.0], r, p) == pytest.approx(
                1.5 * math.pi * r ** 3, rel=1e-10)
            assert frequency(f, [0.0], r, p) == pytest.approx(1.5, abs=1e-3)

    def test_vanishing_height_errors(self):
        p = WeightParams.from_s(0.5, 1)
        zero = const_field(1, 0.0)
        with pytest.raises(ValueError):
            frequency(zero, [0.0], 0.5, p)

    def test_grid_ball_bound(self):
        from fraclab.core import GridField, GridSpec
        spec = GridSpec.make(1, 1.0, 1.0, 17, 9, grading=1.0)
        f = GridField(spec, np.ones(spec.shape()))
        p = WeightParams.from_s(0.5, 1)
        with pytest.raises(ValueError):
            height(f, [0.9], 0.5, p)


class TestCorrespondence:
    FIELDS = [
        {(2,): 1.0},
        {(3,): 1.0},
        {(4,): 0.5},
        {(2,): 1.0, (0,): -0.2},
        {(1,): 1.0, (3,): -0.5},
    ]

    @pytest.mark.parametrize("a", [0.0, 0.5])
    def test_height_and_frequency_transport(self, a):
        p = WeightParams.from_a(a, 1)
        radii = geometric_radii(0.15, 0.8, 10)
        for coeffs in self.FIELDS:
            from fraclab.harmonics import extend_polynomial
            e = extend_polynomial(PolynomialOnRn(1, coeffs), p)
            u = to_grushin(e, p)
            for r in radii:
                g = float(h_transform(r, p))
                Ht = height(e, [0.0], r, p)
                H = grushin_height(u, g, p)
                assert Ht == pytest.approx(r ** a * H, rel=1e-6)
                Nt = frequency(e, [0.0], r, p)
                N = grushin_frequency(u, g, p)
                assert Nt == pytest.approx((1 - a) * N, rel=1e-6)

    def test_dirichlet_transport(self):
        # D_tilde = (1-a)^a D(h(r))
        p = WeightParams.from_a(0.5, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        u = to_grushin(e, p)
        for r in (0.3, 0.6):
            Dt = dirichlet(e, [0.0], r, p)
            D = grushin_dirichlet(u, float(h_transform(r, p)), p)
            assert Dt == pytest.approx((1 - p.a) ** p.a * D, rel=1e-6)

    def test_model_solution_frequencies(self):
        # gauge degree 4 and extension degree (1-a)*4 = 2
        p = WeightParams.from_a(0.5, 1)
        from fraclab.harmonics import grushin_model_solution
        gm = grushin_model_solution(1, p.alpha)
        N = grushin_frequency(gm, 0.7, p)
        assert N == pytest.approx(4.0, abs=2e-3)
        from fraclab.grushin import from_grushin
        f = from_grushin(gm, p)
        Nt = frequency(f, [0.0], 0.5, p)
        assert Nt == pytest.approx(2.0, abs=1e-3)


class TestWeiss:
    def test_vanishes_on_homogeneous_harmonics(self):
        for s in (0.25, 0.5, 0.75):
            p = WeightParams.from_s(s, 1)
            for kappa, beta in ((2, (2,)), (3, (3,)), (4, (4,))):
                e = extend_la_harmonic(PolynomialOnRn(1, {beta: 1.0}), p)
                for r in (0.2, 0.7):
                    scale = height(e, [0.0], r, p) / r ** (p.n + p.a + 2 * kappa)
                    assert abs(weiss(e, [0.0], kappa, r, p)) <= 1e-10 * max(scale, 1.0)

    def test_constant_field_sign_and_value(self):
        p = WeightParams.from_s(0.3, 1)
        f = const_field(1)
        r = 0.6
        got = weiss(f, [0.0], 1.0, r, p)
        want = -weighted_sphere_area(1, p.a) / r ** 2
        assert got == pytest.approx(want, rel=1e-9)
        assert got < 0

    def test_identity_with_frequency(self):
        # W = H (N - kappa) / r^(n + a + 2 kappa), same quadratures
        p = WeightParams.from_s(0.25, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        q4 = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        mix = XYPolynomial(1, dict(e.coeffs))
        mix = mix.add(q4.scale(0.1))
        kappa = 2.0
        for r in (0.2, 0.5, 0.9):
            W = weiss(mix, [0.0], kappa, r, p)
            H = height(mix, [0.0], r, p)
            N = frequency(mix, [0.0], r, p)
            want = H * (N - kappa) / r ** (p.n + p.a + 2 * kappa)
            assert W == pytest.approx(want, rel=1e-8)

    def test_nondecreasing_on_mixture(self):
        p = WeightParams.from_s(0.5, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        q4 = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        mix = e.add(q4.scale(0.3))
        radii = geometric_radii(0.1, 0.9, 12)
        vals = [weiss(mix, [0.0], 2.0, r, p) for r in radii]
        prof = RadialProfile(radii, vals, name="W")
        rep = monotonicity_report(prof, slack=1e-12)
        assert rep["status"] == "nondecreasing-within-slack"


class TestMonneau:
    def test_zero_for_matching_polynomial(self):
        p = WeightParams.from_s(0.4, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        for r in (0.2, 0.6):
            assert monneau(e, [0.0], e, r, p) == pytest.approx(0.0, abs=1e-14)

    def test_cross_term_vanishes_by_orthogonality(self):
        # field = p2 + q4: distance reduces to the q4 mass, scaling like
        # r^(2 (mu - kappa)) times its unit-sphere mass
        p = WeightParams.from_s(0.25, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        q4 = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        mix = e.add(q4.scale(1.0))
        mass_q4 = height(q4, [0.0], 1.0, p)
        for r in (0.3, 0.7):
            got = monneau(mix, [0.0], e, r, p)
            assert got == pytest.approx(r ** (2 * (4 - 2)) * mass_q4, rel=1e-9)

    def test_monotone_on_mixture(self):
        p = WeightParams.from_s(0.5, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        q4 = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        mix = e.add(q4.scale(0.2))
        radii = geometric_radii(0.1, 0.9, 10)
        vals = [monneau(mix, [0.0], e, r, p) for r in radii]
        rep = monotonicity_report(RadialProfile(radii, vals), slack=1e-14)
        assert rep["status"] == "nondecreasing-within-slack"

    def test_rejects_odd_polynomial(self):
        p = WeightParams.from_s(0.5, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        odd = XYPolynomial(1, {((0,), 1): 1.0})
        with pytest.raises(ValueError):
            monneau(e, [0.0], odd, 0.5, p)


class TestGeneralizedFrequency:
    def test_manufactured_height_branch(self):
        # on the quadratic solid harmonic the quotient by (1 + C0 r^theta)
        # equals n + a + 4 identically
        p = WeightParams.from_s(0.4, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        cfg = FunctionalConfig(theta=0.25, C0=10.0)
        for r in (0.05, 0.2, 0.5):
            val, branch = generalized_frequency(e, [0.0], cfg, 2, 0.5, r, p,
                                                return_branch=True)
            assert branch == "height"
            quotient = val / (1.0 + cfg.C0 * r ** cfg.theta)
            assert quotient == pytest.approx(p.n + p.a + 4.0, rel=1e-10)

    def test_truncation_branch_exactly_linear(self):
        p = WeightParams.from_s(0.4, 1)
        tiny = const_field(1, 0.0)
        cfg = FunctionalConfig(theta=0.2, C0=5.0)
        k, gamma = 2, 0.5
        radii = np.array([0.1, 0.2, 0.4])
        vals = []
        for r in radii:
            val, branch = generalized_frequency(tiny, [0.0], cfg, k, gamma,
                                                r, p, return_branch=True)
            assert branch == "truncation"
            vals.append(val)
        base = p.n + p.a + 2 * (k + gamma - cfg.theta)
        want = base * (1.0 + cfg.C0 * radii ** cfg.theta)
        assert np.allclose(vals, want, rtol=1e-14)

    def test_perturbed_instance_nondecreasing(self):
        # v = p2 + b x^3: the normalized field of a cubic obstacle
        p = WeightParams.from_s(0.4, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        v = e.add(XYPolynomial(1, {((3,), 0): 0.3}))
        cfg = FunctionalConfig.for_instance(gamma=0.5)
        radii = geometric_radii(0.02, 0.5, 15)
        vals = [generalized_frequency(v, [0.0], cfg, 2, 0.5, r, p)
                for r in radii]
        rep = monotonicity_report(RadialProfile(radii, vals), slack=1e-10)
        assert rep["status"] == "nondecreasing-within-slack"

    def test_rejects_zero_radius(self):
        p = WeightParams.from_s(0.4, 1)
        cfg = FunctionalConfig()
        with pytest.raises(ValueError):
            generalized_frequency(const_field(1), [0.0], cfg, 2, 0.5, 0.0, p)


class TestDriftCheck:
    def test_pure_monotone_passes(self):
        r = geometric_radii(0.1, 1.0, 8)
        prof = RadialProfile(r, r ** 2, name="M")
        rep = monneau_drift_check(prof, gamma=0.5, C_M=1.0)
        assert rep["status"] == "drift-bound-holds"

    def test_small_admissible_drift_passes(self):
        r = geometric_radii(0.1, 1.0, 20)
        # slope -0.5 * r^(gamma - 1) stays above the -C_M bound with C_M = 1
        vals = -0.5 / 0.5 * r ** 0.5
        prof = RadialProfile(r, vals, name="M")
        rep = monneau_drift_check(prof, gamma=0.5, C_M=1.2)
        assert rep["status"] == "drift-bound-holds"

    def test_synthetic_violation_located(self):
        r = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
        vals = np.array([0.0, 0.1, -5.0, 0.2, 0.3])
        prof = RadialProfile(r, vals, name="M")
        rep = monneau_drift_check(prof, gamma=0.5, C_M=1.0)
        assert rep["status"] == "violation"
        assert rep["r_star"] == pytest.approx(0.2)


class TestMonotonicityReport:
    def test_increasing(self):
        prof = RadialProfile([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
        assert monotonicity_report(prof, 1e-12)["status"] == \
            "nondecreasing-within-slack"

    def test_constant(self):
        prof = RadialProfile([0.1, 0.2, 0.3], [1.0, 1.0, 1.0])
        assert monotonicity_report(prof, 0.0)["status"] == \
            "nondecreasing-within-slack"

    def test_dip_located(self):
        prof = RadialProfile([0.1, 0.2, 0.3, 0.4], [1.0, 0.5, 1.5, 2.0])
        rep = monotonicity_report(prof, 1e-3)
        assert rep["status"] == "violation"
        assert rep["r_star"] == pytest.approx(0.2)
        assert rep["worst_violation"] == pytest.approx(0.5)

    def test_needs_three_radii(self):
        with pytest.raises(ValueError):
            monotonicity_report(RadialProfile([0.1, 0.2], [1.0, 2.0]), 0.0)


class TestInvariants:
    def test_scale_invariance_of_frequency(self):
        from fraclab.blowup import rescale
        p = WeightParams.from_s(0.25, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        q4 = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        mix = e.add(q4.scale(0.2))
        for r, rho in ((0.3, 0.5), (0.2, 0.8), (0.5, 0.6)):
            resc = rescale(mix, [0.0], r, p, normalization="almgren")
            lhs = frequency(resc, [0.0], rho, p)
            rhs = frequency(mix, [0.0], r * rho, p)
            assert lhs == pytest.approx(rhs, rel=1e-6)

    def test_height_log_derivative_identity(self):
        # d/dr log H = 2 N / r + (n + a) / r by finite differences
        p = WeightParams.from_s(0.5, 1)
        f = SignoriniField()
        for r in (0.3, 0.6):
            dr = 1e-5 * r
            lhs = (math.log(height(f, [0.0], r + dr, p))
                   - math.log(height(f, [0.0], r - dr, p))) / (2 * dr)
            rhs = 2 * frequency(f, [0.0], r, p) / r + (p.n + p.a) / r
            assert lhs == pytest.approx(rhs, rel=1e-3)

    def test_flux_equals_dirichlet_on_solutions(self):
        p = WeightParams.from_s(0.3, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(3,): 1.0}), p)
        for r in (0.2, 0.7):
            assert surface_flux(e, [0.0], r, p) == pytest.approx(
                dirichlet(e, [0.0], r, p), rel=1e-9)

    def test_doubling_bounds(self):
        # with N(0+) = kappa: H(r) <= H(1) r^(n+a+2 kappa), and the reverse
        # bound with an epsilon allowance at small radii
        p = WeightParams.from_s(0.25, 1)
        e = extend_la_harmonic(PolynomialOnRn(1, {(2,): 1.0}), p)
        q4 = extend_la_harmonic(PolynomialOnRn(1, {(4,): 1.0}), p)
        mix = e.add(q4.scale(0.2))
        kappa = 2.0
        H1 = height(mix, [0.0], 1.0, p)
        eps = 0.05
        r_eps = 0.3
        Hre = height(mix, [0.0], r_eps, p)
        for r in np.geomspace(0.05, 0.99, 12):
            H = height(mix, [0.0], r, p)
            assert H <= H1 * r ** (p.n + p.a + 2 * kappa) * (1 + 1e-12)
            if r < r_eps:
                lower = Hre / r_eps ** (p.n + p.a + 2 * kappa + eps) \
                    * r ** (p.n + p.a + 2 * kappa + eps)
                assert H >= lower * (1 - 1e-12)
