from pohozaevsuite.core.radial_core import make_grid, gaussian, normalize_mass, lq_norm, RadialFunction
from pohozaevsuite.core.scaling_fibering import (
    ProblemParams, FiberCoefficients, FiberingCase, gamma_exponent,
    fibering_value, fibering_derivative, fibering_second_derivative, reduced_derivative,
    s_star, mu_from_coefficients, mu_of_u, energy, pohozaev, degeneracy_margin,
    classify_coefficients, classify_fibering, mass_scale, project_to_manifold,
)
from pohozaevsuite.utils.errors import (
    RegimeError, ValidationError, DegenerateInputError,
    ResolutionLossError, ProjectionUnavailableError,
)
import unittest

import numpy as np
from scipy.optimize import brentq

PARAMS = ProblemParams(N=3, p=2.0, q1=2.5, q2=4.0, a=1.0, mu=1.0)


def _random_profile(grid, rng) -> RadialFunction:
    values = np.zeros_like(grid.nodes)
    for _ in range(rng.integers(1, 4)):
        center = rng.uniform(0.0, 3.0)
        width = rng.uniform(0.4, 2.0)
        values += rng.uniform(0.2, 1.0) * np.exp(-((grid.nodes - center) / width) ** 2)
    values[-1] = 0.0
    return RadialFunction(grid, values)


class ProblemParamsTests(unittest.TestCase):
    """Tests for the admissible exponent regime"""

    def test_derived_exponents(self):
        params = ProblemParams(N=3, p=2.0, q1=3.0, q2=6.0)
        self.assertAlmostEqual(params.p_star, 6.0)
        self.assertAlmostEqual(params.mass_critical, 2.0 + 4.0 / 3.0)
        self.assertAlmostEqual(params.gamma1, 0.5)
        self.assertAlmostEqual(params.c2, 6.0)
        self.assertTrue(params.critical)
        self.assertFalse(PARAMS.critical)

    def test_violations_name_the_inequality(self):
        cases = {
            "q1 must exceed p": dict(q1=2.0),
            "q1 must be below": dict(q1=3.5),
            "q2 must exceed": dict(q2=3.0),
            "q2 must not exceed": dict(q2=7.0),
            "p must satisfy": dict(p=3.0),
            "mass a must be positive": dict(a=0.0),
            "coupling mu must be positive": dict(mu=-1.0),
        }
        base = dict(N=3, p=2.0, q1=2.5, q2=4.0, a=1.0, mu=1.0)
        for message, change in cases.items():
            with self.subTest(message=message):
                with self.assertRaises(RegimeError) as ctx:
                    ProblemParams(**{**base, **change}).validate()
                self.assertIn(message, ctx.exception.message)

    def test_mu_optional(self):
        PARAMS.with_mu(0.0).validate(require_mu=False)

    def test_gamma_exponent_range(self):
        self.assertAlmostEqual(gamma_exponent(4.0, PARAMS), 0.75)
        with self.assertRaises(ValidationError):
            gamma_exponent(1.5, PARAMS)
        with self.assertRaises(ValidationError):
            gamma_exponent(6.5, PARAMS)


class FiberAlgebraTests(unittest.TestCase):
    """Closed-form identities of the fibering map"""

    def setUp(self):
        self.coef = FiberCoefficients(A=2.0, B=1.5, C=0.7)

    def test_pohozaev_of_dilation_is_t_times_derivative(self):
        for t in (0.3, 1.0, 2.7):
            with self.subTest(t=t):
                d = self.coef.dilated(t, PARAMS)
                pohozaev_value = d.A - PARAMS.mu * PARAMS.gamma1 * d.B - PARAMS.gamma2 * d.C
                self.assertAlmostEqual(pohozaev_value, t * fibering_derivative(self.coef, t, PARAMS), places=12)

    def test_derivatives_match_finite_differences(self):
        t, h = 1.3, 1e-6
        numeric = (fibering_value(self.coef, t + h, PARAMS) - fibering_value(self.coef, t - h, PARAMS)) / (2 * h)
        self.assertAlmostEqual(numeric, fibering_derivative(self.coef, t, PARAMS), places=7)
        numeric = (fibering_derivative(self.coef, t + h, PARAMS)
                   - fibering_derivative(self.coef, t - h, PARAMS)) / (2 * h)
        self.assertAlmostEqual(numeric, fibering_second_derivative(self.coef, t, PARAMS), places=6)

    def test_threshold_is_maximum_of_reduced_function(self):
        mu_u = mu_from_coefficients(self.coef, PARAMS)
        s0 = s_star(self.coef, PARAMS)
        at_threshold = PARAMS.with_mu(mu_u)
        self.assertAlmostEqual(reduced_derivative(self.coef, s0, at_threshold), 0.0, places=10)
        self.assertAlmostEqual(fibering_second_derivative(self.coef, s0, at_threshold), 0.0, places=10)

    def test_threshold_is_dilation_invariant(self):
        mu_u = mu_from_coefficients(self.coef, PARAMS)
        for s in (0.1, 4.0):
            self.assertAlmostEqual(mu_from_coefficients(self.coef.dilated(s, PARAMS), PARAMS) / mu_u,
                                   1.0, places=12)

    def test_degenerate_coefficients(self):
        with self.assertRaises(DegenerateInputError):
            mu_from_coefficients(FiberCoefficients(1.0, 0.0, 1.0), PARAMS)


class ClassificationTests(unittest.TestCase):
    """Tests for the fibering trichotomy against a dense sign scan"""

    def setUp(self):
        self.grid = make_grid(15.0, 600, 3)
        self.rng = np.random.default_rng(2024)

    def test_against_dense_sign_scan(self):
        exponents = [ProblemParams(3, 2.0, 2.5, 4.0), ProblemParams(3, 2.0, 3.0, 6.0),
                     ProblemParams(4, 2.5, 3.5, 5.0)]
        for draw in range(200):
            base = exponents[draw % len(exponents)]
            u = normalize_mass(_random_profile(self.grid, self.rng), self.rng.uniform(0.5, 2.0), base.p)
            params = base.with_mass(lq_norm(u, base.p))
            coef = FiberCoefficients.of(u, params)
            mu_u = mu_from_coefficients(coef, params)
            s0 = s_star(coef, params)
            t = s0 * np.logspace(-6, 6, 100001)
            for factor in (0.5, 1.0, 2.0):
                with self.subTest(draw=draw, factor=factor):
                    p_mu = params.with_mu(factor * mu_u)
                    report = classify_coefficients(coef, p_mu)
                    if factor == 1.0:
                        self.assertEqual(report.case, FiberingCase.DEGENERATE)
                        self.assertAlmostEqual(report.t_zero / s0, 1.0, places=12)
                        continue
                    g = reduced_derivative(coef, t, p_mu)
                    flips = np.nonzero(np.diff(np.sign(g)) != 0)[0]
                    if factor == 2.0:
                        self.assertEqual(report.case, FiberingCase.NO_ROOTS)
                        self.assertEqual(flips.size, 0)
                        continue
                    self.assertEqual(report.case, FiberingCase.TWO_ROOTS)
                    self.assertEqual(flips.size, 2)
                    for root, k in ((report.t_plus, flips[0]), (report.t_minus, flips[1])):
                        exact = brentq(lambda s: reduced_derivative(coef, s, p_mu), t[k], t[k + 1],
                                       xtol=1e-300, rtol=1e-14)
                        self.assertAlmostEqual(root / exact, 1.0, delta=1e-6)
                    self.assertLess(report.phi_plus, 0.0)
                    self.assertGreater(report.phi_minus, report.phi_plus)

    def test_roots_by_branch(self):
        u = normalize_mass(gaussian(self.grid, 1.0), 1.0, 2.0)
        mu_u = mu_of_u(u, PARAMS)
        report = classify_fibering(u, PARAMS.with_mu(2.0 * mu_u))
        with self.assertRaises(ProjectionUnavailableError):
            report.root("plus")
        report = classify_fibering(u, PARAMS.with_mu(0.5 * mu_u))
        self.assertLess(report.root("plus"), report.s_star)
        self.assertGreater(report.root("minus"), report.s_star)
        self.assertEqual(report.to_dict()['case'], "TwoRoots")

    def test_zero_profile(self):
        with self.assertRaises(DegenerateInputError):
            classify_fibering(gaussian(self.grid).scaled(0.0), PARAMS)
        with self.assertRaises(DegenerateInputError):
            mu_of_u(gaussian(self.grid).scaled(0.0), PARAMS)


class DilationTests(unittest.TestCase):
    """Tests for the mass-preserving dilation and the manifold projection"""

    def setUp(self):
        self.grid = make_grid(30.0, 3000, 3)
        self.u = normalize_mass(gaussian(self.grid, 1.5), 1.0, 2.0)

    def test_mass_scale_preserves_mass_and_scales_coefficients(self):
        coef = FiberCoefficients.of(self.u, PARAMS)
        for s in (0.6, 1.7):
            with self.subTest(s=s):
                v = mass_scale(self.u, s, PARAMS)
                self.assertAlmostEqual(lq_norm(v, 2.0), 1.0, delta=1e-5)
                expected = coef.dilated(s, PARAMS)
                actual = FiberCoefficients.of(v, PARAMS)
                self.assertAlmostEqual(actual.A / expected.A, 1.0, delta=1e-3)
                self.assertAlmostEqual(actual.C / expected.C, 1.0, delta=1e-4)
                self.assertAlmostEqual(mu_of_u(v, PARAMS) / mu_of_u(self.u, PARAMS), 1.0, delta=1e-3)

    def test_energy_and_pohozaev_from_fiber(self):
        coef = FiberCoefficients.of(self.u, PARAMS)
        self.assertAlmostEqual(energy(self.u, PARAMS), fibering_value(coef, 1.0, PARAMS), places=12)
        self.assertAlmostEqual(pohozaev(self.u, PARAMS), fibering_derivative(coef, 1.0, PARAMS), places=12)

    def test_invalid_dilations(self):
        with self.assertRaises(ValidationError):
            mass_scale(self.u, 0.0, PARAMS)
        with self.assertRaises(ResolutionLossError):
            mass_scale(self.u, 5000.0, PARAMS)
        self.assertIs(mass_scale(self.u, 1.0, PARAMS), self.u)

    def test_projection_onto_both_branches(self):
        mu = 0.5 * mu_of_u(self.u, PARAMS)
        params = PARAMS.with_mu(mu)
        for branch, sign in (("plus", 1.0), ("minus", -1.0)):
            with self.subTest(branch=branch):
                v = project_to_manifold(self.u, branch, params)
                coef = FiberCoefficients.of(v, params)
                self.assertLess(abs(pohozaev(v, params)) / coef.A, 1e-9)
                self.assertGreater(sign * fibering_second_derivative(coef, 1.0, params), 0.0)

    def test_projection_onto_degenerate_branch(self):
        # s_* of this profile is far from 1, so the result is judged at its own coupling
        params = PARAMS.with_mu(mu_of_u(self.u, PARAMS))
        v = project_to_manifold(self.u, "zero", params)
        own = params.with_mu(mu_of_u(v, params))
        self.assertLess(abs(pohozaev(v, own)) / FiberCoefficients.of(v, own).A, 1e-9)
        self.assertLess(degeneracy_margin(v, own), 1e-9)
        self.assertAlmostEqual(own.mu / params.mu, 1.0, delta=5e-2)

    def test_degenerate_projection_of_a_resolved_profile(self):
        grid = make_grid(2.0, 8000, 3)
        u = normalize_mass(gaussian(grid, 0.04), 1.0, 2.0)
        params = PARAMS.with_mu(mu_of_u(u, PARAMS))
        self.assertLess(s_star(FiberCoefficients.of(u, params), params), 0.8)
        v = project_to_manifold(u, "zero", params)
        self.assertLess(abs(pohozaev(v, params)) / FiberCoefficients.of(v, params).A, 1e-4)
        self.assertLess(degeneracy_margin(v, params), 1e-4)
        self.assertAlmostEqual(lq_norm(v, 2.0), 1.0, delta=1e-6)

    def test_stretching_past_the_radius_is_refused(self):
        with self.assertRaises(ResolutionLossError) as ctx:
            mass_scale(self.u, 0.05, PARAMS)
        self.assertGreater(ctx.exception.details['lost_fraction'], 1e-3)

    def test_projection_without_roots(self):
        params = PARAMS.with_mu(3.0 * mu_of_u(self.u, PARAMS))
        with self.assertRaises(ProjectionUnavailableError):
            project_to_manifold(self.u, "plus", params)
        with self.assertRaises(ValidationError):
            project_to_manifold(self.u, "sideways", params)


if __name__ == '__main__':
    unittest.main()
