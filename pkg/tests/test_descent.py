from pohozaevsuite.core.descent import (
    SphereDescent, preconditioner_bands, retract, sphere_normal, require_converged,
)
from pohozaevsuite.core.radial_core import (
    make_grid, gaussian, lq_norm, grad_lp_power, stiffness_gradient, normalize_mass,
)
from pohozaevsuite.utils.errors import NonConvergenceError, ValidationError, ResolutionLossError
import math
import unittest

import numpy as np


def dirichlet_energy(u):
    return grad_lp_power(u, 2.0) / 2.0, stiffness_gradient(u, 2.0)


class PreconditionerTests(unittest.TestCase):

    def test_bands_are_symmetric_and_pin_the_boundary(self):
        grid = make_grid(5.0, 100, 3)
        u = gaussian(grid, 1.0)
        for p in (2.0, 3.0):
            with self.subTest(p=p):
                ab = preconditioner_bands(u, p)
                self.assertEqual(ab.shape, (3, 101))
                np.testing.assert_allclose(ab[0, 1:-1], ab[2, :-2])
                self.assertEqual(ab[1, -1], 1.0)
                self.assertEqual(ab[2, -2], 0.0)
                self.assertTrue(np.all(ab[1, :-1] > 0))

    def test_sphere_normal_is_mass_gradient(self):
        grid = make_grid(5.0, 100, 3)
        u = gaussian(grid, 1.0)
        self.assertAlmostEqual(float(np.dot(sphere_normal(u, 2.0), u.values)) / 2.0,
                               lq_norm(u, 2.0) ** 2, places=12)


class RetractionTests(unittest.TestCase):

    def test_retract_returns_to_positive_sphere(self):
        grid = make_grid(5.0, 100, 3)
        u = normalize_mass(gaussian(grid, 1.0), 1.5, 2.5)
        direction = np.random.default_rng(0).standard_normal(101)
        v = retract(u, direction, 0.3, 1.5, 2.5)
        self.assertAlmostEqual(lq_norm(v, 2.5), 1.5, places=12)
        self.assertTrue(np.all(v.values >= 0))
        self.assertEqual(v.values[-1], 0.0)

    def test_retract_rejects_annihilation(self):
        grid = make_grid(5.0, 100, 3)
        u = gaussian(grid, 1.0)
        with self.assertRaises(ResolutionLossError):
            retract(u, -u.values, 1.0, 1.0, 2.0)


class SphereDescentTests(unittest.TestCase):
    """Minimizing the Dirichlet energy on the unit L^2 sphere of the ball B_R"""

    def setUp(self):
        self.grid = make_grid(5.0, 400, 3)
        # First Dirichlet eigenvalue of the ball of radius R in R^3
        self.lambda_1 = (math.pi / 5.0) ** 2

    def test_converges_to_first_eigenfunction(self):
        descent = SphereDescent(2.0, 1.0, max_iterations=2000, gradient_tol=1e-9)
        result = descent.run(gaussian(self.grid, 1.0), dirichlet_energy)

        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.value / (self.lambda_1 / 2.0), 1.0, delta=1e-3)
        self.assertAlmostEqual(result.multiplier / (self.lambda_1 / 2.0), 1.0, delta=1e-3)
        self.assertAlmostEqual(lq_norm(result.u, 2.0), 1.0, places=12)

        r = self.grid.nodes[1:-1]
        exact = np.sin(math.pi * r / 5.0) / r
        ratio = result.u.values[1:-1] / exact
        self.assertLess(float(np.std(ratio) / np.mean(ratio)), 1e-3)

    def test_history_is_monotone(self):
        descent = SphereDescent(2.0, 1.0, max_iterations=200)
        result = descent.run(gaussian(self.grid, 0.5), dirichlet_energy)
        self.assertTrue(np.all(np.diff(result.history) <= 0.0))

    def test_accept_veto_and_reseat_hooks(self):
        calls = {'accept': 0, 'reseat': 0}

        def accept(old, new):
            calls['accept'] += 1
            return True

        def reseat(u):
            calls['reseat'] += 1
            return u

        descent = SphereDescent(2.0, 1.0, max_iterations=60, gradient_tol=1e-14)
        descent.run(gaussian(self.grid, 1.0), dirichlet_energy, accept=accept,
                    reseat=reseat, reseat_every=5)
        self.assertGreater(calls['accept'], 0)
        self.assertGreater(calls['reseat'], 0)

    def test_require_converged(self):
        descent = SphereDescent(2.0, 1.0, max_iterations=1, gradient_tol=1e-14)
        result = descent.run(gaussian(self.grid, 0.3), dirichlet_energy)
        self.assertFalse(result.converged)
        with self.assertRaises(NonConvergenceError) as ctx:
            require_converged(result, "Dirichlet descent")
        self.assertIs(ctx.exception.best, result.u)

    def test_invalid_constraint(self):
        with self.assertRaises(ValidationError):
            SphereDescent(1.0, 1.0)
        with self.assertRaises(ValidationError):
            SphereDescent(2.0, 0.0)


if __name__ == '__main__':
    unittest.main()
