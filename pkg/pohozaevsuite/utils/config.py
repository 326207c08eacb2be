"""
Configuration management for PohozaevSuite.

This module handles all configuration aspects of the application, including:
- Output and log directories
- Solver tolerances and iteration limits
- Grid specification (truncation radius and node count)
- Sweep concurrency

The configuration system is based on three levels:
1. BaseConfig: Basic settings for all components
2. SolverConfig: Settings for the variational solvers
3. CertificateConfig: Lattice settings for the bubble energy certificate

Configuration can be loaded from a JSON file or uses sensible defaults. Sweep
files use a separate line-oriented ``key = value`` format (see
``load_key_value_config``).
"""

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Dict, Any, Tuple, List, Union
import json
import os

from pohozaevsuite.utils.errors import ValidationError, FileError

JOBS_ENV_VAR = "POHOZAEV_JOBS"


@dataclass
class BaseConfig:
    """Base configuration for all components.

    Attributes:
        output_dir: Directory where output files will be saved. None keeps
            everything in memory.
        log_dir: Directory for log files. If None, logs go to the console only
        max_workers: Number of concurrent workers for multi-start and sweeps
    """
    output_dir: Optional[Path] = None
    log_dir: Optional[Path] = None
    max_workers: int = 1

    def __post_init__(self):
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)
        if self.log_dir is not None:
            self.log_dir = Path(self.log_dir)
        if not isinstance(self.max_workers, int) or self.max_workers < 1:
            raise ValidationError("max_workers must be a positive integer")


@dataclass
class SolverConfig(BaseConfig):
    """Options shared by the constrained minimizers.

    Attributes:
        step_size: Initial step of the preconditioned descent
        max_iterations: Iteration cap of the descent
        gradient_tol: Relative tolerance on the tangential gradient, scaled by (1 + |energy|)
        el_tol: Absolute tolerance on the discrete Euler-Lagrange residual
        pohozaev_tol: Largest relative Pohozaev identity defect of a returned
            plus or minus solution; the grid is refined until it is met
        newton_max_iter: Iteration cap of the Newton refinement
        grid_R: Truncation radius; None selects it adaptively from the decay law
        grid_n: Number of grid intervals
        seed: Seed of the random perturbations used by multi-start searches
        branch: Default branch ("plus", "minus" or "zero")
        growth_cap: Largest relative growth of max|u| accepted per step in the
            Sobolev-critical regime
        degeneracy_tol: Relative tolerance deciding the degenerate fibering case
        eig_tol: Distance below 1 for an eigenvalue to count in the Morse index
        seeds: Number of multi-start seeds for the first extremal value
    """
    step_size: float = 1.0
    max_iterations: int = 4000
    gradient_tol: float = 1e-7
    el_tol: float = 1e-8
    pohozaev_tol: float = 1e-5
    newton_max_iter: int = 50
    grid_R: Optional[float] = None
    grid_n: int = 4000
    seed: int = 0
    branch: str = "plus"
    growth_cap: float = 0.05
    degeneracy_tol: float = 1e-8
    eig_tol: float = 1e-6
    seeds: int = 5

    def __post_init__(self):
        """Validate configuration after initialization"""
        super().__post_init__()
        for name in ("step_size", "gradient_tol", "el_tol", "pohozaev_tol", "growth_cap", "degeneracy_tol", "eig_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("max_iterations", "newton_max_iter", "seeds"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.grid_n < 64:
            raise ValidationError("grid_n must be at least 64")
        if self.grid_R is not None and not self.grid_R > 0:
            raise ValidationError("grid_R must be positive")
        if self.branch not in ("plus", "minus", "zero"):
            raise ValidationError(f"Unknown branch: {self.branch}")


@dataclass
class CertificateConfig(SolverConfig):
    """Lattice used by the strict energy inequality certificate.

    Attributes:
        eps_values: Concentration scales of the cutoff bubble
        alpha_values: Cutoff exponents; empty means the default inside the admissible window
        tau_points: Samples of the path parameter before the supremum is polished
        points_per_eps: Grid nodes per concentration scale on the path grid
    """
    eps_values: Tuple[float, ...] = (0.05, 0.02, 0.01)
    alpha_values: Tuple[float, ...] = ()
    tau_points: int = 64
    points_per_eps: int = 40

    def __post_init__(self):
        super().__post_init__()
        self.eps_values = tuple(float(e) for e in self.eps_values)
        self.alpha_values = tuple(float(a) for a in self.alpha_values)
        if not self.eps_values or min(self.eps_values) <= 0:
            raise ValidationError("eps_values must be positive")
        if self.tau_points < 8:
            raise ValidationError("tau_points must be at least 8")
        if self.points_per_eps < 4:
            raise ValidationError("points_per_eps must be at least 4")


class ConfigManager:
    """Manages application configuration settings.

    This class handles loading, saving, and providing access to all
    configuration settings. It supports both file-based configuration
    and default values.

    Usage:
        config_manager = ConfigManager()
        solver_config = config_manager.get_solver_config(grid_n=2000)
    """

    def __init__(self, config_file: Optional[Path] = None):
        """Initialize configuration manager.

        Args:
            config_file: Path to JSON configuration file.
                        If None, uses 'config.json' in current directory.
        """
        self.config_file = Path(config_file) if config_file else Path("config.json")
        self.config: Dict[str, Any] = self._get_default_config()
        self._load_config()

    def _load_config(self):
        """Merge the configuration file, when present, over the defaults."""
        if not self.config_file.exists():
            return
        try:
            with open(self.config_file) as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FileError(f"Cannot read configuration file {self.config_file}: {e}")
        for section, values in loaded.items():
            if isinstance(values, dict):
                self.config.setdefault(section, {}).update(values)

    def save(self):
        """Save current configuration to JSON file."""
        with open(self.config_file, 'w') as f:
            json.dump(self.config, f, indent=2)

    def _get_default_config(self) -> Dict[str, Any]:
        """Get default configuration values.

        Returns:
            Dictionary containing default configuration settings for all components.
        """
        return {
            'paths': {
                'output_dir': None,          # Commands choose their own --out directory
                'log_dir': None,             # Console-only logging by default
            },
            'solver': {
                'step_size': 1.0,
                'max_iterations': 4000,
                'gradient_tol': 1e-7,
                'el_tol': 1e-8,
                'pohozaev_tol': 1e-5,
                'newton_max_iter': 50,
                'grid_R': None,              # Adaptive from the decay law
                'grid_n': 4000,
                'seed': 0,
                'growth_cap': 0.05,
                'degeneracy_tol': 1e-8,
                'eig_tol': 1e-6,
                'seeds': 5,
            },
            'processing': {
                'max_workers': os.cpu_count() or 1,  # Number of concurrent workers
            }
        }

    def get_base_config(self) -> BaseConfig:
        """Get basic configuration settings.

        Returns:
            BaseConfig instance with core settings.
        """
        paths = self.config['paths']
        return BaseConfig(
            output_dir=Path(paths['output_dir']) if paths.get('output_dir') else None,
            log_dir=Path(paths['log_dir']) if paths.get('log_dir') else None,
            max_workers=int(self.config['processing']['max_workers']),
        )

    def get_solver_config(self, **overrides) -> SolverConfig:
        """Get solver configuration, with keyword overrides applied last.

        Returns:
            SolverConfig instance with all solver settings.
        """
        base_config = self.get_base_config()
        settings = dict(self.config['solver'])
        settings.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(SolverConfig)}
        return SolverConfig(
            output_dir=settings.pop('output_dir', base_config.output_dir),
            log_dir=settings.pop('log_dir', base_config.log_dir),
            max_workers=settings.pop('max_workers', base_config.max_workers),
            **{k: v for k, v in settings.items() if k in known}
        )

    def update_config(self, updates: Dict[str, Any]):
        """Update configuration with new values.

        Args:
            updates: Dictionary containing section updates.
                    Format: {'section_name': {setting: value}}
        """
        for section, values in updates.items():
            if section in self.config:
                self.config[section].update(values)


def _parse_scalar(text: str) -> Union[int, float, bool, str]:
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def load_key_value_config(path: Path) -> Dict[str, Union[Any, List[Any]]]:
    """Parse a line-oriented ``key = value`` file.

    ``#`` starts a comment, blank lines are ignored and comma-separated values
    become lists. Numbers and booleans are converted.

    Raises:
        FileError: If the file is missing or a line has no ``=``
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise FileError(f"Cannot read sweep configuration {path}: {e}")

    result: Dict[str, Any] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FileError(f"{path}:{lineno}: expected 'key = value'", {'line': raw})
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FileError(f"{path}:{lineno}: empty key", {'line': raw})
        if "," in value:
            result[key] = [_parse_scalar(v.strip()) for v in value.split(",") if v.strip()]
        else:
            result[key] = _parse_scalar(value)
    return result


def jobs_from_environment(default: int) -> int:
    """Worker count, with the POHOZAEV_JOBS environment variable taking precedence."""
    value = os.environ.get(JOBS_ENV_VAR)
    if value is None or not value.strip():
        return max(1, int(default))
    try:
        jobs = int(value)
    except ValueError:
        raise ValidationError(f"{JOBS_ENV_VAR} must be an integer, got {value!r}")
    if jobs < 1:
        raise ValidationError(f"{JOBS_ENV_VAR} must be at least 1")
    return jobs
