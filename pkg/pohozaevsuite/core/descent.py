"""
Preconditioned descent on the discrete mass sphere sum_i w_i |u_i|^p = a^p.

The search direction is the Riemannian gradient in the metric of the
linearized stiffness plus mass matrix, K_p(u) + M, which is tridiagonal and is
inverted with a banded solve every iteration. Steps are retracted onto the
sphere by taking absolute values and rescaling the amplitude.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, List
import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_banded

from pohozaevsuite.core.radial_core import (
    RadialFunction, lq_norm, p_power_derivative,
)
from pohozaevsuite.utils.errors import (
    ProjectionUnavailableError, ResolutionLossError,
    NonConvergenceError, ValidationError,
)

Objective = Callable[[RadialFunction], Tuple[float, NDArray]]

ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40
STEP_GROWTH = 1.5
# Iterates rejected by the objective are treated as failed line-search trials
REJECTED = (ProjectionUnavailableError, ResolutionLossError)


def preconditioner_bands(u: RadialFunction, p: float, mass_shift: float = 1.0) -> NDArray:
    """Banded storage (3, n+1) of K_p(u) + mass_shift * M for ``solve_banded((1, 1), ...)``.

    The diffusivity (p-1)|u'|^{p-2} is clipped to four decades around its value
    at the steepest slope, which keeps the metric uniformly elliptic for p != 2.
    The last row is the identity so that u_n = 0 is preserved.
    """
    grid = u.grid
    d = u.differences
    scale = float(np.max(np.abs(d))) if d.size else 0.0
    if scale > 0.0 and p != 2.0:
        ref = (p - 1.0) * scale ** (p - 2.0)
        diffusivity = np.clip(p_power_derivative(d, p, 1e-3 * scale), 1e-4 * ref, 1e4 * ref)
    else:
        diffusivity = np.full(d.shape, p - 1.0)
    c = grid.mid_weights * diffusivity / grid.h ** 2

    n1 = grid.n + 1
    ab = np.zeros((3, n1))
    diag = mass_shift * grid.cell_weights.copy()
    diag[:-1] += c
    diag[1:] += c
    ab[1] = diag
    ab[0, 1:] = -c
    ab[2, :-1] = -c

    ab[1, -1] = 1.0
    ab[0, -1] = 0.0
    ab[2, -2] = 0.0
    return ab


def sphere_normal(u: RadialFunction, p: float) -> NDArray:
    """Gradient of sum_i w_i |u_i|^p."""
    v = u.values
    return p * u.grid.weights * np.abs(v) ** (p - 1.0) * np.sign(v)


def retract(u: RadialFunction, direction: NDArray, step: float, a: float, p: float) -> RadialFunction:
    """Move along ``direction`` and return to the positive part of the mass sphere."""
    values = np.abs(u.values + step * direction)
    values[-1] = 0.0
    trial = RadialFunction(u.grid, values)
    norm = lq_norm(trial, p)
    if norm == 0.0 or not math.isfinite(norm):
        raise ResolutionLossError("Descent step annihilated the profile", {'step': step})
    return trial.scaled(a / norm)


@dataclass
class DescentResult:
    """Outcome of one descent run.

    Attributes:
        u: Final iterate on the sphere
        value: Objective at ``u``
        gradient_norm: Tangential gradient in the dual preconditioner norm
        iterations: Accepted steps
        converged: Whether the gradient tolerance was met
        multiplier: Sphere multiplier nu with g = nu * n at a critical point
        history: Objective values of the accepted iterates
    """
    u: RadialFunction
    value: float
    gradient_norm: float
    iterations: int
    converged: bool
    multiplier: float
    history: List[float] = field(default_factory=list)


class SphereDescent:
    """Monotone preconditioned descent of an objective over the positive mass sphere.

    Args:
        p: Exponent of the mass constraint and of the stiffness metric
        a: Mass, ||u||_p = a
        step_size: Initial trial step
        max_iterations: Cap on accepted steps
        gradient_tol: Stop when the tangential gradient falls below
            gradient_tol * (1 + |value|)
        logger: Receives iteration detail at DEBUG
    """

    def __init__(self, p: float, a: float, step_size: float = 1.0, max_iterations: int = 4000,
                 gradient_tol: float = 1e-7, logger: Optional[logging.Logger] = None):
        if not p > 1 or not a > 0:
            raise ValidationError("Descent needs p > 1 and a > 0", {'p': p, 'a': a})
        self.p = p
        self.a = a
        self.step_size = step_size
        self.max_iterations = int(max_iterations)
        self.gradient_tol = gradient_tol
        self.logger = logger or logging.getLogger("PohozaevSuite")

    def _direction(self, u: RadialFunction, grad: NDArray):
        ab = preconditioner_bands(u, self.p)
        g = grad.copy()
        g[-1] = 0.0
        n = sphere_normal(u, self.p)
        n[-1] = 0.0
        pg = solve_banded((1, 1), ab, g)
        pn = solve_banded((1, 1), ab, n)
        denom = float(np.dot(n, pn))
        nu = float(np.dot(n, pg)) / denom if denom > 0 else 0.0
        direction = -(pg - nu * pn)
        direction[-1] = 0.0
        residual = math.sqrt(max(-float(np.dot(g - nu * n, direction)), 0.0))
        return direction, nu, residual

    def run(self, u0: RadialFunction, objective: Objective,
            accept: Optional[Callable[[RadialFunction, RadialFunction], bool]] = None,
            reseat: Optional[Callable[[RadialFunction], RadialFunction]] = None,
            reseat_every: int = 25) -> DescentResult:
        """Run the descent from ``u0``.

        ``objective`` returns (value, nodal gradient) and may raise
        ProjectionUnavailableError or ResolutionLossError to reject a trial
        point. ``accept(old, new)`` can veto an otherwise admissible step and
        ``reseat(u)`` replaces the iterate by an equivalent representative of
        equal objective value (applied every ``reseat_every`` steps).

        Raises:
            ProjectionUnavailableError: If the objective rejects the initial point
        """
        u = retract(u0, np.zeros_like(u0.values), 0.0, self.a, self.p)
        value, grad = objective(u)
        step = self.step_size
        history = [value]
        direction, nu, residual = self._direction(u, grad)

        for iteration in range(1, self.max_iterations + 1):
            if residual <= self.gradient_tol * (1.0 + abs(value)):
                return DescentResult(u, value, residual, iteration - 1, True, nu, history)

            slope = -residual ** 2
            accepted = False
            for _ in range(MAX_BACKTRACKS):
                try:
                    trial = retract(u, direction, step, self.a, self.p)
                    if accept is not None and not accept(u, trial):
                        step *= 0.5
                        continue
                    trial_value, trial_grad = objective(trial)
                except REJECTED:
                    step *= 0.5
                    continue
                if trial_value <= value + ARMIJO_C * step * slope:
                    accepted = True
                    break
                step *= 0.5

            if not accepted:
                self.logger.debug(f"Line search stalled at iteration {iteration}, "
                                  f"value {value:.12g}, residual {residual:.3e}")
                return DescentResult(u, value, residual, iteration - 1, False, nu, history)

            u, value, grad = trial, trial_value, trial_grad
            history.append(value)
            step = min(step * STEP_GROWTH, 1e3 * self.step_size)

            if reseat is not None and iteration % reseat_every == 0:
                try:
                    seated = reseat(u)
                    seated = retract(seated, np.zeros_like(seated.values), 0.0, self.a, self.p)
                    u = seated
                    value, grad = objective(u)
                except REJECTED as e:
                    self.logger.debug(f"Reseat skipped: {e}")

            direction, nu, residual = self._direction(u, grad)
            if iteration % 100 == 0:
                self.logger.debug(f"descent it={iteration} value={value:.15g} "
                                  f"residual={residual:.3e} step={step:.3e}")

        converged = residual <= self.gradient_tol * (1.0 + abs(value))
        return DescentResult(u, value, residual, self.max_iterations, converged, nu, history)


def require_converged(result: DescentResult, what: str) -> DescentResult:
    """Raise NonConvergenceError carrying the final iterate unless ``result`` converged."""
    if not result.converged:
        raise NonConvergenceError(
            f"{what} did not reach the gradient tolerance",
            best=result.u,
            details={'value': result.value, 'gradient_norm': result.gradient_norm,
                     'iterations': result.iterations})
    return result


__all__ = [
    'SphereDescent', 'DescentResult', 'preconditioner_bands', 'sphere_normal',
    'retract', 'require_converged',
]
