from pohozaevsuite.utils.config import (
    BaseConfig, SolverConfig, CertificateConfig, ConfigManager,
    load_key_value_config, jobs_from_environment, JOBS_ENV_VAR,
)
from pohozaevsuite.utils.errors import ValidationError, FileError
from pathlib import Path
from unittest import mock
import json
import os
import tempfile
import unittest


class ConfigTests(unittest.TestCase):
    """Basic tests for configuration functionality"""

    def test_base_config_initialization(self):
        """Test that BaseConfig initializes with correct default values"""
        config = BaseConfig(output_dir="test_output")

        self.assertEqual(config.output_dir, Path("test_output"))
        self.assertIsNone(config.log_dir)
        self.assertEqual(config.max_workers, 1)

    def test_base_config_rejects_zero_workers(self):
        with self.assertRaises(ValidationError):
            BaseConfig(max_workers=0)

    def test_solver_config_defaults(self):
        """Test the documented solver defaults"""
        config = SolverConfig()

        self.assertEqual(config.grid_n, 4000)
        self.assertIsNone(config.grid_R)
        self.assertEqual(config.branch, "plus")
        self.assertEqual(config.el_tol, 1e-8)
        self.assertEqual(config.seeds, 5)

    def test_solver_config_validation(self):
        """Test that nonpositive tolerances and counts are rejected"""
        for bad in ({'gradient_tol': 0.0}, {'el_tol': -1e-8}, {'max_iterations': 0},
                    {'grid_n': 10}, {'grid_R': -1.0}, {'branch': 'sideways'}):
            with self.subTest(bad=bad):
                with self.assertRaises(ValidationError):
                    SolverConfig(**bad)

    def test_certificate_config_lattice(self):
        config = CertificateConfig(eps_values=[0.1, 0.05], alpha_values=[0.3])

        self.assertEqual(config.eps_values, (0.1, 0.05))
        self.assertEqual(config.alpha_values, (0.3,))
        with self.assertRaises(ValidationError):
            CertificateConfig(eps_values=(0.1, -0.05))
        with self.assertRaises(ValidationError):
            CertificateConfig(tau_points=4)


class ConfigManagerTests(unittest.TestCase):
    """Tests for file-backed configuration"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "config.json"

    def tearDown(self):
        self.tmp.cleanup()

    def test_missing_file_uses_defaults(self):
        manager = ConfigManager(self.path)
        config = manager.get_solver_config()

        self.assertEqual(config.grid_n, 4000)
        self.assertIsNone(config.output_dir)

    def test_file_values_and_overrides(self):
        """Test that file values merge over defaults and keyword overrides win"""
        self.path.write_text(json.dumps({'solver': {'grid_n': 1000, 'el_tol': 1e-9},
                                         'processing': {'max_workers': 2}}))
        manager = ConfigManager(self.path)
        config = manager.get_solver_config(grid_n=500, grid_R=None)

        self.assertEqual(config.grid_n, 500)
        self.assertEqual(config.el_tol, 1e-9)
        self.assertEqual(config.max_workers, 2)
        self.assertEqual(config.step_size, 1.0)

    def test_malformed_file(self):
        self.path.write_text("{not json")
        with self.assertRaises(FileError):
            ConfigManager(self.path)

    def test_save_and_update(self):
        manager = ConfigManager(self.path)
        manager.update_config({'solver': {'seed': 7}, 'unknown': {'x': 1}})
        manager.save()

        reloaded = ConfigManager(self.path)
        self.assertEqual(reloaded.get_solver_config().seed, 7)
        self.assertNotIn('unknown', reloaded.config)


class KeyValueConfigTests(unittest.TestCase):
    """Tests for the line-oriented sweep format"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "sweep.cfg"

    def tearDown(self):
        self.tmp.cleanup()

    def test_parsing(self):
        self.path.write_text(
            "# sweep\n"
            "N = 3\n"
            "p = 2.0   # gradient exponent\n"
            "\n"
            "mu = 0.1, 0.2,0.3\n"
            "morse = yes\n"
            "branches = plus\n")
        data = load_key_value_config(self.path)

        self.assertEqual(data['N'], 3)
        self.assertIsInstance(data['N'], int)
        self.assertEqual(data['p'], 2.0)
        self.assertEqual(data['mu'], [0.1, 0.2, 0.3])
        self.assertIs(data['morse'], True)
        self.assertEqual(data['branches'], "plus")

    def test_line_without_separator(self):
        self.path.write_text("N = 3\nthis line is wrong\n")
        with self.assertRaises(FileError) as ctx:
            load_key_value_config(self.path)
        self.assertIn(":2:", ctx.exception.message)

    def test_missing_file(self):
        with self.assertRaises(FileError):
            load_key_value_config(self.path)


class JobsEnvironmentTests(unittest.TestCase):

    def test_default_without_variable(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(jobs_from_environment(3), 3)

    def test_variable_overrides(self):
        with mock.patch.dict(os.environ, {JOBS_ENV_VAR: "5"}):
            self.assertEqual(jobs_from_environment(1), 5)

    def test_invalid_variable(self):
        for value in ("many", "0"):
            with mock.patch.dict(os.environ, {JOBS_ENV_VAR: value}):
                with self.assertRaises(ValidationError):
                    jobs_from_environment(1)


if __name__ == '__main__':
    unittest.main()
