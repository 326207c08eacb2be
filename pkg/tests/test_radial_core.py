from pohozaevsuite.core.radial_core import (
    RadialFunction, make_grid, sphere_area, lq_power, lq_norm, grad_lp_power,
    stiffness_gradient, p_laplacian_apply, p_power, interpolate_profile,
    write_profile_csv, read_profile_csv, gaussian, normalize_mass, adaptive_radius,
)
from pohozaevsuite.utils.errors import ValidationError, FileError
from pathlib import Path
import math
import tempfile
import unittest

import numpy as np


class GridTests(unittest.TestCase):
    """Tests for the radial grid and its quadrature weights"""

    def test_sphere_area(self):
        self.assertAlmostEqual(sphere_area(2), 2 * math.pi, places=12)
        self.assertAlmostEqual(sphere_area(3), 4 * math.pi, places=12)

    def test_weights_integrate_ball_volume(self):
        for N in (2, 3, 5):
            with self.subTest(N=N):
                grid = make_grid(3.0, 2000, N)
                self.assertAlmostEqual(float(np.sum(grid.weights)) / grid.ball_volume(), 1.0, delta=1e-5)
                self.assertAlmostEqual(float(np.sum(grid.mid_weights)) / grid.ball_volume(), 1.0, delta=1e-5)

    def test_cell_weights_positive(self):
        grid = make_grid(10.0, 100, 3)
        self.assertEqual(grid.weights[0], 0.0)
        self.assertTrue(np.all(grid.cell_weights > 0))

    def test_dual_volumes_tile_the_ball(self):
        grid = make_grid(4.0, 400, 3)
        h = grid.h
        self.assertAlmostEqual(grid.dual_volumes[0], 4 * math.pi * (h / 2) ** 3 / 3, places=14)
        self.assertAlmostEqual(grid.dual_volumes[1] / (grid.omega * h ** 3), 13.0 / 12.0, places=12)
        covered = float(np.sum(grid.dual_volumes[:-1]))
        exact = grid.omega * (grid.R - h / 2) ** 3 / 3
        self.assertAlmostEqual(covered / exact, 1.0, places=12)

    def test_invalid_grids(self):
        for args in ((0.0, 100, 3), (10.0, 10, 3), (10.0, 100, 1), (math.inf, 100, 3)):
            with self.subTest(args=args):
                with self.assertRaises(ValidationError):
                    make_grid(*args)

    def test_grid_arrays_are_read_only(self):
        grid = make_grid(5.0, 100, 3)
        with self.assertRaises(ValueError):
            grid.weights[1] = 0.0


class NormTests(unittest.TestCase):
    """Tests for discrete norms against closed forms of the Gaussian"""

    def setUp(self):
        self.grid = make_grid(12.0, 4000, 3)
        self.u = gaussian(self.grid, 1.0)

    def test_lq_power_of_gaussian(self):
        # int_{R^3} exp(-q r^2/2) dx = (2 pi / q)^{3/2}
        for q in (2.0, 3.0, 4.0):
            with self.subTest(q=q):
                exact = (2 * math.pi / q) ** 1.5
                self.assertAlmostEqual(lq_power(self.u, q) / exact, 1.0, delta=1e-6)

    def test_gradient_power_of_gaussian(self):
        # int |grad u|^2 = int r^2 exp(-r^2) dx = 4 pi * 3 sqrt(pi) / 8
        exact = 4 * math.pi * 3 * math.sqrt(math.pi) / 8
        self.assertAlmostEqual(grad_lp_power(self.u, 2.0) / exact, 1.0, delta=1e-4)

    def test_invalid_exponents(self):
        with self.assertRaises(ValidationError):
            lq_norm(self.u, 0.0)
        with self.assertRaises(ValidationError):
            grad_lp_power(self.u, 1.0)

    def test_normalize_mass(self):
        v = normalize_mass(self.u, 2.0, 2.5)
        self.assertAlmostEqual(lq_norm(v, 2.5), 2.0, places=12)
        with self.assertRaises(ValidationError):
            normalize_mass(self.u.scaled(0.0), 1.0, 2.0)

    def test_p_power_is_odd(self):
        t = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
        np.testing.assert_allclose(p_power(t, 3.0), np.sign(t) * t ** 2)
        np.testing.assert_allclose(p_power(-t, 2.5), -p_power(t, 2.5))


class OperatorTests(unittest.TestCase):
    """Tests for the discrete p-Laplacian and its variational gradient"""

    def test_stiffness_gradient_matches_finite_differences(self):
        grid = make_grid(8.0, 200, 3)
        rng = np.random.default_rng(1)
        base = gaussian(grid, 1.3)
        for p in (2.0, 2.5, 3.0):
            with self.subTest(p=p):
                grad = stiffness_gradient(base, p)
                direction = rng.standard_normal(grid.n + 1)
                direction[-1] = 0.0
                step = 1e-6
                plus = grad_lp_power(base.with_values(base.values + step * direction), p) / p
                minus = grad_lp_power(base.with_values(base.values - step * direction), p) / p
                numeric = (plus - minus) / (2 * step)
                self.assertAlmostEqual(numeric / float(np.dot(grad, direction)), 1.0, delta=1e-5)

    def test_discrete_green_identity(self):
        grid = make_grid(10.0, 1000, 3)
        u = gaussian(grid, 1.0)
        for p in (2.0, 3.0):
            with self.subTest(p=p):
                lap = p_laplacian_apply(u, p)
                pairing = float(np.dot(grid.dual_volumes[:-1], u.values[:-1] * lap.values[:-1]))
                self.assertAlmostEqual(pairing / grad_lp_power(u, p), 1.0, delta=1e-10)

    def test_laplacian_of_gaussian(self):
        # -Delta exp(-r^2/2) = (N - r^2) exp(-r^2/2)
        grid = make_grid(10.0, 4000, 3)
        u = gaussian(grid, 1.0)
        lap = p_laplacian_apply(u, 2.0).values
        r = grid.nodes
        exact = (3.0 - r ** 2) * np.exp(-r ** 2 / 2)
        inner = slice(0, 3000)
        self.assertLess(float(np.max(np.abs(lap[inner] - exact[inner]))), 1e-4)

    def test_derivative_vanishes_at_origin(self):
        grid = make_grid(10.0, 500, 3)
        u = gaussian(grid, 1.0)
        self.assertEqual(u.derivative[0], 0.0)
        np.testing.assert_allclose(u.derivative[1:400], -grid.nodes[1:400] * u.values[1:400], atol=1e-3)


class ProfileIOTests(unittest.TestCase):
    """Tests for profile CSV files and grid transfer"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_round_trip_is_exact(self):
        grid = make_grid(7.0, 300, 4)
        u = gaussian(grid, 0.8)
        path = write_profile_csv(u, self.dir / "u.csv")
        self.assertTrue(path.read_text().startswith("r,u,du\n"))
        back = read_profile_csv(path, 4)
        self.assertEqual(back.grid.n, 300)
        self.assertEqual(back.grid.R, 7.0)
        np.testing.assert_array_equal(back.values, u.values)

    def test_malformed_files(self):
        (self.dir / "header.csv").write_text("x,y,z\n0,1,0\n")
        rows = "\n".join(f"{0.1 * i ** 1.1},{1.0},{0.0}" for i in range(100))
        (self.dir / "uneven.csv").write_text("r,u,du\n" + rows + "\n")
        (self.dir / "short.csv").write_text("r,u,du\n0,1,0\n0.1,0.5,0\n")
        for name in ("header.csv", "uneven.csv", "short.csv", "missing.csv"):
            with self.subTest(name=name):
                with self.assertRaises(FileError):
                    read_profile_csv(self.dir / name, 3)

    def test_interpolation_onto_finer_grid(self):
        coarse = make_grid(10.0, 500, 3)
        fine = make_grid(10.0, 2000, 3)
        u = interpolate_profile(gaussian(coarse, 1.0), fine)
        exact = np.exp(-fine.nodes ** 2 / 2)
        exact[-1] = 0.0
        self.assertLess(float(np.max(np.abs(u.values - exact))), 1e-4)

    def test_non_finite_samples_rejected(self):
        grid = make_grid(5.0, 100, 3)
        values = np.ones(101)
        values[3] = np.nan
        with self.assertRaises(ValidationError):
            RadialFunction(grid, values)

    def test_adaptive_radius(self):
        self.assertEqual(adaptive_radius(None, 2.0), 20.0)
        self.assertAlmostEqual(adaptive_radius(-0.01, 2.0), 120.0, places=10)
        self.assertEqual(adaptive_radius(-4.0, 2.0), 20.0)


if __name__ == '__main__':
    unittest.main()
