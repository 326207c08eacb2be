from pohozaevsuite.core.radial_core import make_grid, gaussian, normalize_mass, grad_lp_power
from pohozaevsuite.core.scaling_fibering import ProblemParams, FiberingCase, mu_of_u
from pohozaevsuite.processors.extremal_values import (
    kappa_exponent, mu_bar_star, ground_energy_lower_bound, scaling_law_report,
    scaling_law_check, energy_gap_report, MuStarSolver,
)
from pohozaevsuite.processors.special_profiles import gn_profile_and_constant
from pohozaevsuite.utils.errors import RegimeError, ValidationError
from tests.solutions import SUBCRITICAL, CRITICAL, extremal, solution_at, reduced_config, quiet_logger
from pathlib import Path
import json
import tempfile
import unittest


class ExponentTests(unittest.TestCase):
    """Closed-form exponents and thresholds"""

    def test_kappa_matches_expanded_form(self):
        for params in (SUBCRITICAL, CRITICAL, ProblemParams(4, 2.5, 3.5, 5.0),
                       ProblemParams(2, 1.5, 2.0, 5.0)):
            with self.subTest(params=params):
                N, p, q1, q2, c2 = params.N, params.p, params.q1, params.q2, params.c2
                expanded = N * (q2 - q1) * (q2 - p) / (c2 * (c2 - p))
                self.assertAlmostEqual(kappa_exponent(params), expanded, places=12)

    def test_mu_bar_star_below_mu_star(self):
        self.assertLess(mu_bar_star(CRITICAL, 2.0), 2.0)
        self.assertGreater(mu_bar_star(CRITICAL, 2.0), 0.0)
        with self.assertRaises(RegimeError):
            mu_bar_star(SUBCRITICAL, 2.0)


class FirstExtremalValueTests(unittest.TestCase):
    """mu_a* and its witness on the reduced grid"""

    @classmethod
    def setUpClass(cls):
        cls.report = extremal()

    def test_witness_normalization(self):
        params = self.report.params
        self.assertGreater(self.report.mu_star, 0.0)
        self.assertAlmostEqual(grad_lp_power(self.report.witness, params.p), 1.0, delta=1e-4)
        self.assertAlmostEqual(mu_of_u(self.report.witness, params) / self.report.mu_star, 1.0, places=10)

    def test_witness_is_degenerate(self):
        self.assertEqual(self.report.degenerate_case, FiberingCase.DEGENERATE.value)
        self.assertLess(self.report.degenerate_residual, 1e-3)

    def test_infimum_over_seeds_and_gaussians(self):
        self.assertGreaterEqual(len(self.report.seed_values), 5)
        self.assertLessEqual(self.report.mu_star, min(self.report.seed_values) * (1 + 1e-9))
        grid = make_grid(20.0, 2000, 3)
        for sigma in (0.5, 1.0, 2.0):
            with self.subTest(sigma=sigma):
                u = normalize_mass(gaussian(grid, sigma), 1.0, 2.0)
                self.assertLessEqual(self.report.mu_star, mu_of_u(u, SUBCRITICAL) * (1 + 1e-6))

    def test_save(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.report.save(Path(tmp))
            data = json.loads(path.read_text())
            self.assertTrue((Path(tmp) / data['witness_path']).exists())
        self.assertEqual(data['mu_star'], self.report.mu_star)
        self.assertEqual(data['kappa_exponent'], kappa_exponent(SUBCRITICAL))

    def test_repeated_search_is_identical(self):
        config = reduced_config(grid_n=500, grid_R=20.0)
        first = MuStarSolver(SUBCRITICAL, config, quiet_logger()).compute()
        second = MuStarSolver(SUBCRITICAL, config, quiet_logger()).compute()
        self.assertEqual(first.mu_star, second.mu_star)
        self.assertEqual(first.seed_values, second.seed_values)


class ScalingLawTests(unittest.TestCase):

    def test_power_law_between_masses(self):
        report = scaling_law_report(1.0, 2.0, SUBCRITICAL, reduced_config(grid_R=20.0))
        self.assertLess(report.defect, 1e-2)
        self.assertLess(report.mu2, report.mu1)

    def test_equal_masses_and_invalid_masses(self):
        self.assertEqual(scaling_law_check(1.0, 1.0, SUBCRITICAL), 0.0)
        with self.assertRaises(ValidationError):
            scaling_law_report(0.0, 1.0, SUBCRITICAL)


class GroundEnergyBoundTests(unittest.TestCase):
    """Lower bound of the plus level in the Sobolev-critical regime"""

    @classmethod
    def setUpClass(cls):
        cls.gn = gn_profile_and_constant(CRITICAL.q1, CRITICAL)

    def test_bound_is_negative_and_below_plus_level(self):
        params = CRITICAL.with_mu(1.0)
        bound = ground_energy_lower_bound(params, self.gn)
        self.assertLess(bound, 0.0)
        self.assertLessEqual(bound, solution_at("plus", params).energy)

    def test_bound_requires_matching_regime(self):
        with self.assertRaises(RegimeError):
            ground_energy_lower_bound(SUBCRITICAL.with_mu(1.0), self.gn)
        other = gn_profile_and_constant(4.0, CRITICAL)
        with self.assertRaises(RegimeError):
            ground_energy_lower_bound(CRITICAL.with_mu(1.0), other)


class EnergyGapTests(unittest.TestCase):

    def test_coupling_outside_window(self):
        report = extremal()
        with self.assertRaises(ValidationError):
            energy_gap_report(SUBCRITICAL.with_mu(0.5 * report.mu_star), reduced_config(grid_R=20.0),
                              extremal=report)
        with self.assertRaises(ValidationError):
            energy_gap_report(SUBCRITICAL.with_mu(1.5 * report.mu_star), reduced_config(grid_R=20.0),
                              extremal=report)

    def test_plus_level_lies_below_the_degenerate_level(self):
        report = extremal()
        gap = energy_gap_report(SUBCRITICAL.with_mu(1.05 * report.mu_star), reduced_config(grid_R=20.0),
                                quiet_logger(), extremal=report)
        self.assertLess(gap.m_plus, gap.m_zero)
        self.assertTrue(gap.flags['plus_negative'])
        self.assertTrue(gap.flags['plus_below_zero'])
        self.assertEqual(gap.mu_star, report.mu_star)
        self.assertEqual(gap.to_dict()['m_zero'], gap.m_zero)


if __name__ == '__main__':
    unittest.main()
