"""Reduced-grid solutions shared by the solver, spectral and MFG tests.

Every expensive solve is cached for the lifetime of the test process.
"""

from functools import lru_cache
import logging

from pohozaevsuite.core.scaling_fibering import ProblemParams
from pohozaevsuite.processors.extremal_values import MuStarSolver
from pohozaevsuite.processors.manifold_solver import ManifoldSolver
from pohozaevsuite.utils.config import SolverConfig
from pohozaevsuite.utils.logger import LoggerSetup

SUBCRITICAL = ProblemParams(N=3, p=2.0, q1=2.5, q2=4.0, a=1.0)
# p = 2.5 point: mass-critical exponent 4.583, p* = 15
SUBCRITICAL_P25 = ProblemParams(N=3, p=2.5, q1=3.5, q2=6.0, a=1.0)
CRITICAL = ProblemParams(N=3, p=2.0, q1=3.0, q2=6.0, a=1.0)

REDUCED_GRID_N = 2000


def quiet_logger() -> logging.Logger:
    logger = LoggerSetup().setup_logger("PohozaevSuiteTests")
    LoggerSetup.set_console_level(logger, logging.WARNING)
    return logger


def reduced_config(**overrides) -> SolverConfig:
    settings = {'grid_n': REDUCED_GRID_N, 'max_workers': 1}
    settings.update(overrides)
    return SolverConfig(**settings)


@lru_cache(maxsize=None)
def extremal(params: ProblemParams = SUBCRITICAL, grid_n: int = REDUCED_GRID_N):
    config = reduced_config(grid_n=grid_n, grid_R=20.0)
    return MuStarSolver(params, config, quiet_logger()).compute()


@lru_cache(maxsize=None)
def solution(branch: str, fraction: float = 0.5, params: ProblemParams = SUBCRITICAL,
             grid_n: int = REDUCED_GRID_N):
    """Plus or minus record at mu = fraction * mu_a*."""
    mu = fraction * extremal(params).mu_star
    solver = ManifoldSolver(params.with_mu(mu), reduced_config(grid_n=grid_n), quiet_logger())
    return solver.process(branch)


@lru_cache(maxsize=None)
def solution_at(branch: str, params: ProblemParams, grid_n: int = REDUCED_GRID_N):
    """Plus or minus record at the coupling carried by ``params``."""
    solver = ManifoldSolver(params, reduced_config(grid_n=grid_n), quiet_logger())
    return solver.process(branch)
