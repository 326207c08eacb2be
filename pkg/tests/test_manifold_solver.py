from pohozaevsuite.core.radial_core import make_grid, gaussian, normalize_mass, lq_norm, interpolate_profile
from pohozaevsuite.core.scaling_fibering import FiberCoefficients, fibering_second_derivative
from pohozaevsuite.processors.manifold_solver import (
    ManifoldSolver, SolutionRecord, lagrange_multiplier, lagrange_multiplier_from_manifold,
    refine_euler_lagrange, pohozaev_identity_check, half_mass_radius,
)
from pohozaevsuite.utils.errors import EmptyManifoldError, ValidationError, NonConvergenceError
from tests.solutions import SUBCRITICAL, CRITICAL, extremal, solution, solution_at, quiet_logger, reduced_config
from pathlib import Path
from unittest import mock
import json
import tempfile
import unittest

import numpy as np


class BranchSolutionTests(unittest.TestCase):
    """Plus and minus solutions at half the first extremal value"""

    @classmethod
    def setUpClass(cls):
        cls.plus = solution("plus")
        cls.minus = solution("minus")

    def test_records_are_converged_solutions(self):
        for record in (self.plus, self.minus):
            with self.subTest(branch=record.branch):
                self.assertTrue(record.converged)
                self.assertLess(record.el_residual, 1e-8)
                self.assertLess(record.pohozaev_residual, 1e-5)
                self.assertLess(record.mass_error, 1e-10)
                self.assertGreaterEqual(record.positivity_min, 0.0)
                self.assertGreater(record.u.values[0], 0.0)
                self.assertLess(record.lam, 0.0)

    def test_level_ordering(self):
        self.assertLess(self.plus.energy, 0.0)
        self.assertGreater(self.minus.energy, self.plus.energy + 1e-6)

    def test_fibering_curvature_matches_branch(self):
        params = self.plus.params
        second_plus = fibering_second_derivative(FiberCoefficients.of(self.plus.u, params), 1.0, params)
        second_minus = fibering_second_derivative(FiberCoefficients.of(self.minus.u, params), 1.0, params)
        self.assertGreater(second_plus, 0.0)
        self.assertLess(second_minus, 0.0)

    def test_multiplier_formulas_agree_on_the_manifold(self):
        for record in (self.plus, self.minus):
            with self.subTest(branch=record.branch):
                direct = lagrange_multiplier(record.u, record.params)
                on_manifold = lagrange_multiplier_from_manifold(record.u, record.params)
                self.assertAlmostEqual(direct / record.lam, 1.0, delta=1e-3)
                self.assertAlmostEqual(on_manifold / record.lam, 1.0, delta=1e-3)

    def test_refinement_of_a_solution_is_immediate(self):
        result = refine_euler_lagrange(self.plus.u, self.plus.lam, self.plus.params, tol=1e-8)
        self.assertTrue(result.converged)
        self.assertEqual(result.steps, 0)

    def test_save_and_load(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.plus.save(Path(tmp), "plus")
            self.assertTrue((Path(tmp) / "plus_profile.csv").exists())
            back = SolutionRecord.load(path)
        self.assertEqual(back.branch, "plus")
        self.assertEqual(back.energy, self.plus.energy)
        self.assertEqual(back.lam, self.plus.lam)
        self.assertEqual(back.params, self.plus.params)
        np.testing.assert_array_equal(back.u.values, self.plus.u.values)

    def test_load_rejects_records_without_energy(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = self.plus.save(Path(tmp), "plus")
            data = json.loads(path.read_text(encoding="utf-8"))
            del data['energy']
            path.write_text(json.dumps(data), encoding="utf-8")
            with self.assertRaises(ValidationError) as ctx:
                SolutionRecord.load(path)
        self.assertIn("energy", ctx.exception.message)


class PohozaevGateTests(unittest.TestCase):
    """The identity defect is enforced by grid refinement"""

    def test_unreachable_tolerance_reports_the_finest_record(self):
        minus = solution("minus")
        solver = ManifoldSolver(minus.params, reduced_config(pohozaev_tol=1e-12), quiet_logger())
        with self.assertRaises(NonConvergenceError) as ctx:
            solver._polish(minus.u, "minus", 0)
        best = ctx.exception.best
        self.assertIsInstance(best, SolutionRecord)
        self.assertGreaterEqual(best.grid.n, 8 * minus.grid.n)
        self.assertEqual(best.extra['grid_refinements'], 3)
        self.assertLess(best.pohozaev_residual, minus.pohozaev_residual)

    def test_coarser_grid_has_a_larger_defect(self):
        minus = solution("minus")
        params = minus.params
        loose = ManifoldSolver(params, reduced_config(pohozaev_tol=1.0), quiet_logger())
        coarse_grid = make_grid(minus.grid.R, minus.grid.n // 2, params.N)
        start = normalize_mass(interpolate_profile(minus.u, coarse_grid), params.a, params.p)
        coarse = loose._polish(start, "minus", 0)
        self.assertNotIn('grid_refinements', coarse.extra)
        self.assertGreater(coarse.pohozaev_residual, minus.pohozaev_residual)


class LevelMonotonicityTests(unittest.TestCase):
    """Both levels decrease as the coupling grows"""

    def test_levels_decrease_in_mu(self):
        for branch in ("plus", "minus"):
            with self.subTest(branch=branch):
                levels = [solution(branch, fraction).energy for fraction in (0.2, 0.5, 0.8)]
                self.assertTrue(all(b < a for a, b in zip(levels, levels[1:])), levels)

    def test_plus_level_decreases_in_mass(self):
        mu = 0.3 * extremal().mu_star
        levels = [solution_at("plus", SUBCRITICAL.with_mass(a).with_mu(mu)).energy
                  for a in (0.9, 1.0, 1.1)]
        self.assertTrue(all(b < a for a, b in zip(levels, levels[1:])), levels)

    def test_minus_level_decreases_in_mass(self):
        mu = 0.3 * extremal().mu_star
        levels = [solution_at("minus", SUBCRITICAL.with_mass(a).with_mu(mu)).energy
                  for a in (0.9, 1.0, 1.1)]
        self.assertTrue(all(b < a for a, b in zip(levels, levels[1:])), levels)


class DegenerateLevelTests(unittest.TestCase):
    """Degenerate minimization around the first extremal value"""

    def setUp(self):
        self.extremal = extremal()
        self.config = reduced_config(grid_R=20.0)

    def test_empty_below_first_extremal_value(self):
        params = SUBCRITICAL.with_mu(0.9 * self.extremal.mu_star)
        with self.assertRaises(EmptyManifoldError):
            ManifoldSolver(params, self.config, quiet_logger()).minimize_degenerate(self.extremal)

    def test_degenerate_minimizer_satisfies_both_constraints(self):
        params = SUBCRITICAL.with_mu(1.05 * self.extremal.mu_star)
        record = ManifoldSolver(params, self.config, quiet_logger()).process("zero", extremal=self.extremal)
        self.assertEqual(record.branch, "zero")
        self.assertLessEqual(record.manifold_residual, 1e-6)
        self.assertLessEqual(record.degeneracy_margin, 1e-6)
        self.assertAlmostEqual(record.extra['constraint'], 0.0, delta=1e-6)
        self.assertAlmostEqual(lq_norm(record.u, params.p), params.a, places=10)


class CriticalGroundStateTests(unittest.TestCase):
    """Sobolev-critical plus solve whose branch root stretches the starting profile"""

    def test_plus_solution_on_an_enlarged_domain(self):
        record = solution_at("plus", CRITICAL.with_mu(1.0))
        self.assertTrue(record.converged)
        self.assertLess(record.lam, 0.0)
        self.assertLess(record.mass_error, 1e-8)
        self.assertLess(record.pohozaev_residual, 1e-5)
        self.assertGreater(record.grid.R, 20.0)


class GroundCouplingWarningTests(unittest.TestCase):

    def test_coupling_above_first_extremal_value_warns(self):
        logger = quiet_logger()
        solver = ManifoldSolver(SUBCRITICAL.with_mu(2.0), reduced_config(), logger)
        with mock.patch.object(ManifoldSolver, "_minimize_branch", return_value="record") as run:
            with self.assertLogs(logger, level="WARNING") as logs:
                self.assertEqual(solver.minimize_ground(mu_star=1.5), "record")
        run.assert_called_once_with("plus")
        self.assertIn("not below mu_a*", logs.output[0])

    def test_coupling_below_first_extremal_value_is_silent(self):
        logger = quiet_logger()
        solver = ManifoldSolver(SUBCRITICAL.with_mu(1.0), reduced_config(), logger)
        with mock.patch.object(ManifoldSolver, "_minimize_branch", return_value="record"):
            with mock.patch.object(logger, "warning") as warning:
                solver.process("plus", mu_star=1.5)
        warning.assert_not_called()


class SolverInputTests(unittest.TestCase):

    def test_unknown_branch(self):
        solver = ManifoldSolver(SUBCRITICAL.with_mu(1.0), reduced_config(), quiet_logger())
        with self.assertRaises(ValidationError):
            solver.process("sideways")

    def test_pohozaev_identity_check_detects_wrong_multiplier(self):
        grid = make_grid(20.0, 800, 3)
        params = SUBCRITICAL.with_mu(1.0)
        u = normalize_mass(gaussian(grid, 1.0), params.a, params.p)
        self.assertGreater(pohozaev_identity_check(u, 5.0, params), 1e-2)

    def test_half_mass_radius_of_gaussian(self):
        # Half of int exp(-r^2) dx in R^3 lies inside r = 1.0876
        grid = make_grid(10.0, 4000, 3)
        self.assertAlmostEqual(half_mass_radius(gaussian(grid, 1.0), 2.0), 1.0876, delta=5e-3)


if __name__ == '__main__':
    unittest.main()
