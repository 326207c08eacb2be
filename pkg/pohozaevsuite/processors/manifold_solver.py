"""
Constrained minimization on the Pohozaev manifold.

The plus and minus levels are computed as minima over the mass sphere of the
reduced functional u -> Phi_u(t_+/-(u)), where t_+/- are the critical points of
the fibering map. The envelope theorem makes its gradient the energy gradient
evaluated at the dilated position, so no saddle search is needed. Minimizers
are then polished by Newton's method on the discrete Euler-Lagrange system

    -Delta_p u = lambda u^{p-1} + mu u^{q1-1} + u^{q2-1},   ||u||_p = a.

The degenerate level is a minimization over the sphere with the equality
constraint mu(u) = mu, handled by an augmented Lagrangian.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Dict, Any, NamedTuple, Callable
import json
import logging
import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from pohozaevsuite.core.radial_core import (
    RadialFunction, RadialGrid, make_grid, gaussian, normalize_mass, lq_power,
    lq_norm, stiffness_gradient, p_power_derivative, regularization,
    interpolate_profile, adaptive_radius, write_profile_csv, read_profile_csv,
)
from pohozaevsuite.core.scaling_fibering import (
    ProblemParams, FiberCoefficients, classify_coefficients,
    fibering_value, fibering_derivative, fibering_second_derivative, s_star,
    mu_from_coefficients, mu_log_gradient_weights, energy, energy_gradient,
    project_to_manifold, degeneracy_margin, mu_of_u, classify_fibering,
)
from pohozaevsuite.core.descent import SphereDescent
from pohozaevsuite.processors.base_processor import BaseProcessor
from pohozaevsuite.utils.config import SolverConfig
from pohozaevsuite.utils.errors import (
    ValidationError, NonConvergenceError, ConcentrationError,
    EmptyManifoldError, ProjectionUnavailableError, ResolutionLossError,
    handle_processing_errors, validate_input_data,
)

DEFAULT_RADIUS = 20.0
BRANCHES = ("plus", "minus", "zero")
INITIAL_WIDTHS = {
    'plus': (1.0, 0.5, 2.0, 0.25),
    'minus': (0.2, 0.1, 0.4, 0.05),
}
CONSTRAINT_TOL = 1e-9
MANIFOLD_TOL = 1e-6
# Room left beyond a stretched profile, and the largest enlargement of the domain
DOMAIN_MARGIN = 1.2
MAX_DOMAIN_GROWTH = 1e4
# Grid doublings allowed to bring the Pohozaev identity defect under tolerance
MAX_IDENTITY_REFINEMENTS = 3
RECORD_FIELDS = ("params", "branch", "lambda", "energy", "residuals", "profile_path",
                 "positivity_min", "degeneracy_margin")


class NewtonResult(NamedTuple):
    u: RadialFunction
    lam: float
    residual: float
    steps: int
    converged: bool


@dataclass
class SolutionRecord:
    """A normalized solution (or degenerate minimizer) with its diagnostics.

    ``pohozaev_residual`` is the relative defect of the Pohozaev identity for
    the plus and minus branches and |P(u)|/||grad u||_p^p for the zero branch,
    whose members solve a different Euler-Lagrange equation.
    """
    u: RadialFunction
    lam: float
    branch: str
    energy: float
    params: ProblemParams
    pohozaev_residual: float
    el_residual: float
    mass_error: float
    positivity_min: float
    degeneracy_margin: float
    manifold_residual: float
    converged: bool = True
    iterations: int = 0
    morse_index: Optional[int] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    def to_dict(self, profile_path: Optional[str] = None) -> Dict[str, Any]:
        data = {
            'params': self.params.to_dict(),
            'grid': self.u.grid.spec(),
            'branch': self.branch,
            'lambda': float(self.lam),
            'energy': float(self.energy),
            'residuals': {
                'pohozaev': float(self.pohozaev_residual),
                'euler_lagrange': float(self.el_residual),
                'mass': float(self.mass_error),
                'manifold': float(self.manifold_residual),
            },
            'positivity_min': float(self.positivity_min),
            'degeneracy_margin': float(self.degeneracy_margin),
            'converged': bool(self.converged),
            'iterations': int(self.iterations),
            'profile_path': profile_path,
        }
        if self.morse_index is not None:
            data['morse_index'] = int(self.morse_index)
        if self.extra:
            data['extra'] = self.extra
        return data

    def save(self, output_dir: Path, stem: str = "solution") -> Path:
        """Write ``<stem>.json`` and the profile ``<stem>_profile.csv``."""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        profile = write_profile_csv(self.u, output_dir / f"{stem}_profile.csv")
        path = output_dir / f"{stem}.json"
        path.write_text(json.dumps(self.to_dict(profile.name), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path) -> "SolutionRecord":
        """Rebuild a record from the JSON written by ``save``.

        Raises:
            ValidationError: If a required field is missing
        """
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        validate_input_data(data, f"Solution record {path.name}", list(RECORD_FIELDS))
        params = ProblemParams(**data['params'])
        u = read_profile_csv(path.parent / data['profile_path'], params.N)
        res = data['residuals']
        return cls(u=u, lam=data['lambda'], branch=data['branch'], energy=data['energy'],
                   params=params, pohozaev_residual=res['pohozaev'],
                   el_residual=res['euler_lagrange'], mass_error=res['mass'],
                   positivity_min=data['positivity_min'],
                   degeneracy_margin=data['degeneracy_margin'],
                   manifold_residual=res.get('manifold', 0.0),
                   converged=data.get('converged', True),
                   iterations=data.get('iterations', 0),
                   morse_index=data.get('morse_index'))


def lagrange_multiplier(u: RadialFunction, params: ProblemParams) -> float:
    """lambda = (||grad u||_p^p - mu ||u||_{q1}^{q1} - ||u||_{q2}^{q2}) / a^p."""
    coef = FiberCoefficients.of(u, params)
    return (coef.A - params.mu * coef.B - coef.C) / params.a ** params.p


def lagrange_multiplier_from_manifold(u: RadialFunction, params: ProblemParams) -> float:
    """lambda a^p = mu (g1 - 1) B + (g2 - 1) C, valid on the Pohozaev manifold."""
    coef = FiberCoefficients.of(u, params)
    return ((params.mu * (params.gamma1 - 1.0) * coef.B + (params.gamma2 - 1.0) * coef.C)
            / params.a ** params.p)


def pohozaev_identity_check(u: RadialFunction, lam: float, params: ProblemParams) -> float:
    """Relative defect of (N-p)A = lambda N a^p + mu N p B/q1 + N p C/q2."""
    coef = FiberCoefficients.of(u, params)
    N, p = params.N, params.p
    terms = (lam * N * params.a ** p, params.mu * N * p * coef.B / params.q1,
             N * p * coef.C / params.q2)
    lhs = (N - p) * coef.A
    scale = abs(lhs) + sum(abs(t) for t in terms)
    if scale == 0.0:
        return 0.0
    return abs(lhs - sum(terms)) / scale


def euler_lagrange_vector(u: RadialFunction, lam: float, params: ProblemParams) -> np.ndarray:
    """Weak-form nodal residual of -Delta_p u - lambda u^{p-1} - mu u^{q1-1} - u^{q2-1}."""
    v = u.values
    w = u.grid.weights
    source = (lam * np.abs(v) ** (params.p - 1.0) * np.sign(v)
              + params.mu * np.abs(v) ** (params.q1 - 1.0) * np.sign(v)
              + np.abs(v) ** (params.q2 - 1.0) * np.sign(v))
    return stiffness_gradient(u, params.p) - w * source


def euler_lagrange_residual(u: RadialFunction, lam: float, params: ProblemParams) -> float:
    """Discrete L^2 norm of the strong residual on the interior nodes."""
    F = euler_lagrange_vector(u, lam, params)[1:-1]
    return float(math.sqrt(np.sum(F * F / u.grid.cell_weights[1:-1])))


def refine_euler_lagrange(u: RadialFunction, lam: float, params: ProblemParams,
                          tol: float = 1e-8, max_iter: int = 50,
                          logger: Optional[logging.Logger] = None) -> NewtonResult:
    """Damped Newton on the radial equation bordered by the mass constraint.

    Unknowns are u_1..u_{n-1} and lambda; u_0 = u_1 (zero slope at the origin)
    and u_n = 0. The merit function is the residual norm including the mass
    equation; steps are halved until it decreases.

    Returns:
        NewtonResult; ``converged`` is False when the Jacobian is singular or
        the line search fails, in which case the best iterate is returned
    """
    logger = logger or logging.getLogger("PohozaevSuite")
    grid = u.grid
    n, h, p = grid.n, grid.h, params.p
    w = grid.weights[1:-1]
    cw = grid.cell_weights[1:-1]
    target = params.a ** p

    def assemble(x: np.ndarray) -> RadialFunction:
        v = np.empty(n + 1)
        v[0] = x[0]
        v[1:-1] = x
        v[-1] = 0.0
        return RadialFunction(grid, v)

    def residual(x: np.ndarray, lam_: float):
        uf = assemble(x)
        F = euler_lagrange_vector(uf, lam_, params)[1:-1]
        mass = (lq_power(uf, p) - target) / target
        el = math.sqrt(float(np.sum(F * F / cw)))
        return F, mass, el, math.hypot(el, mass)

    x = u.values[1:-1].astype(float).copy()
    F, mass, el, merit = residual(x, lam)
    steps = 0
    for _ in range(int(max_iter)):
        if el <= tol and abs(mass) <= 1e-12:
            return NewtonResult(assemble(x), lam, el, steps, True)

        uf = assemble(x)
        d = uf.differences
        c = grid.mid_weights * p_power_derivative(d, p, regularization(d, p)) / h ** 2
        main = c[1:n].copy()
        main[1:] += c[1:n - 1]
        off = -c[1:n - 1]
        ax = np.maximum(np.abs(x), 1e-300)
        main -= w * (params.mu * (params.q1 - 1.0) * ax ** (params.q1 - 2.0)
                     + (params.q2 - 1.0) * ax ** (params.q2 - 2.0)
                     + lam * (p - 1.0) * ax ** (p - 2.0))
        col = -w * np.abs(x) ** (p - 1.0) * np.sign(x)
        row = p * w * np.abs(x) ** (p - 1.0) * np.sign(x) / target

        scale = np.abs(main) + np.abs(col)
        scale[1:] += np.abs(off)
        scale[:-1] += np.abs(off)
        scale = np.where(scale > 0.0, 1.0 / scale, 1.0)
        T = sparse.diags([off, main, off], [-1, 0, 1], format='csr')
        J = sparse.bmat([[T, sparse.csr_matrix(col[:, None])],
                         [sparse.csr_matrix(row[None, :]), None]], format='csc')
        D = sparse.diags(np.append(scale, 1.0))
        rhs = -np.append(F, mass)
        try:
            delta = spsolve((D @ J).tocsc(), D @ rhs)
        except Exception as e:
            logger.debug(f"Newton solve failed: {e}")
            return NewtonResult(assemble(x), lam, el, steps, False)
        if not np.all(np.isfinite(delta)):
            logger.debug("Newton Jacobian is singular")
            return NewtonResult(assemble(x), lam, el, steps, False)

        dx, dlam = delta[:-1], float(delta[-1])
        step = 1.0
        while step >= 1.0 / 1024:
            xt, lt = x + step * dx, lam + step * dlam
            try:
                Ft, mt, elt, mert = residual(xt, lt)
            except ValidationError:
                step *= 0.5
                continue
            if mert <= (1.0 - 1e-4 * step) * merit:
                break
            step *= 0.5
        else:
            logger.debug(f"Newton line search failed at residual {el:.3e}")
            return NewtonResult(assemble(x), lam, el, steps, el <= tol)

        x, lam, F, mass, el, merit = xt, lt, Ft, mt, elt, mert
        steps += 1
        logger.debug(f"newton step={steps} damping={step:.3g} residual={el:.3e} lambda={lam:.15g}")

    converged = el <= tol and abs(mass) <= 1e-12
    return NewtonResult(assemble(x), lam, el, steps, converged)


def degenerate_equation_residual(u: RadialFunction, params: ProblemParams, s: float = 1.0):
    """Fit the multiplier of -p Delta_p u = L p u^{p-1} + mu q1 g1 u^{q1-1} + q2 g2 u^{q2-1}.

    The equation is evaluated for the dilate (u)_s on the grid scaled by 1/s,
    whose nodal values are s^{N/p} u_i, so no re-interpolation enters. Every
    term picks up a power of s; the uniform factor of the cell measure cancels
    in the relative residual.

    Returns:
        (L, relative residual) with L obtained by least squares over the interior
        nodes and the residual measured against the p-Laplacian term
    """
    N, p = params.N, params.p
    v = u.values[1:-1]
    w = u.grid.weights[1:-1]
    cw = u.grid.cell_weights[1:-1]
    lhs = p * s ** (p - N / p) * stiffness_gradient(u, p)[1:-1]
    known = w * (params.mu * params.c1 * s ** (N * (params.q1 - 1.0 - p) / p)
                 * np.abs(v) ** (params.q1 - 1.0)
                 + params.c2 * s ** (N * (params.q2 - 1.0 - p) / p) * np.abs(v) ** (params.q2 - 1.0))
    basis = p * s ** (-N / p) * w * np.abs(v) ** (p - 1.0)
    target = lhs - known
    denom = float(np.sum(basis * basis / cw))
    L = float(np.sum(basis * target / cw)) / denom if denom > 0 else 0.0
    res = target - L * basis
    norm = math.sqrt(float(np.sum(lhs * lhs / cw)))
    return L, (math.sqrt(float(np.sum(res * res / cw))) / norm if norm > 0 else 0.0)


def half_mass_radius(u: RadialFunction, p: float) -> float:
    """Smallest node radius enclosing half of ||u||_p^p."""
    density = u.grid.weights * np.abs(u.values) ** p
    cumulative = np.cumsum(density)
    if cumulative[-1] == 0.0:
        return 0.0
    return float(u.grid.nodes[np.searchsorted(cumulative, 0.5 * cumulative[-1])])


class ManifoldSolver(BaseProcessor):
    """Computes the plus, minus and degenerate levels of the constrained problem.

    Usage:
        solver = ManifoldSolver(params, config)
        record = solver.minimize_ground()
    """

    def __init__(self, params: ProblemParams, config: Optional[SolverConfig] = None,
                 logger: Optional[logging.Logger] = None,
                 callback: Optional[Callable[[str, float], None]] = None):
        super().__init__(config, logger, callback)
        self.params = params

    def _grid(self, R: Optional[float] = None) -> RadialGrid:
        return make_grid(R or self.config.grid_R or DEFAULT_RADIUS, self.config.grid_n, self.params.N)

    def _descent(self) -> SphereDescent:
        return SphereDescent(self.params.p, self.params.a, self.config.step_size,
                             self.config.max_iterations, self.config.gradient_tol, self.logger)

    def _reduced_objective(self, branch: str):
        params, tol = self.params, self.config.degeneracy_tol

        def objective(u: RadialFunction):
            coef = FiberCoefficients.of(u, params)
            t = classify_coefficients(coef, params, tol).root(branch)
            return fibering_value(coef, t, params), energy_gradient(u, params, s=t)
        return objective

    def _growth_guard(self):
        cap = self.config.growth_cap
        p = self.params.p

        def accept(old: RadialFunction, new: RadialFunction) -> bool:
            if float(np.max(new.values)) > (1.0 + cap) * float(np.max(old.values)):
                return False
            r_half = half_mass_radius(new, p)
            if r_half < 5.0 * new.grid.h:
                raise ConcentrationError(
                    "Minimizing sequence concentrates at the origin",
                    {'half_mass_radius': r_half, 'h': new.grid.h, 'u0': float(new.values[0])})
            return True
        return accept

    def _reseat(self, branch: str):
        params, tol = self.params, self.config.degeneracy_tol
        return lambda u: project_to_manifold(u, branch, params, tol)

    def _initial_profiles(self, grid: RadialGrid, branch: str):
        """Gaussians of the branch widths, dilated onto the branch."""
        params, tol = self.params, self.config.degeneracy_tol
        for sigma in INITIAL_WIDTHS[branch]:
            u0 = normalize_mass(gaussian(grid, sigma), params.a, params.p)
            try:
                t = classify_fibering(u0, params, tol).root(branch)
            except ProjectionUnavailableError:
                self.logger.info(f"No {branch} projection for the Gaussian of width {sigma}; "
                                 "restarting from another width")
                continue
            try:
                start = project_to_manifold(u0, branch, params, tol)
            except ResolutionLossError as e:
                self.logger.debug(f"Width {sigma} does not fit the {branch} branch: {e.message}")
                start = self._stretched_start(sigma, t, grid, branch) if t < 1.0 else u0
            if start is not None:
                yield sigma, start

    def _stretched_start(self, sigma: float, t: float, grid: RadialGrid,
                         branch: str) -> Optional[RadialFunction]:
        """The Gaussian of width sigma/t on a domain of radius R/t, with the same intervals.

        mu(u) and hence the existence of the branch root do not change under
        dilation, so a root t < 1 that stretches the profile past R is served by
        rebuilding the dilated Gaussian in closed form on a larger domain.
        """
        params, tol = self.params, self.config.degeneracy_tol
        R = DOMAIN_MARGIN * grid.R / t
        if R > MAX_DOMAIN_GROWTH * grid.R:
            self.logger.info(f"The {branch} root {t:.3g} of width {sigma} needs R = {R:.3g}; "
                             "skipping this width")
            return None
        self.logger.info(f"The {branch} root {t:.3g} stretches width {sigma}; "
                         f"enlarging the domain to R = {R:.6g}")
        u0 = normalize_mass(gaussian(self._grid(R), sigma / t), params.a, params.p)
        try:
            return project_to_manifold(u0, branch, params, tol)
        except ResolutionLossError:
            return u0

    def _descend_branch(self, grid: RadialGrid, branch: str):
        objective = self._reduced_objective(branch)
        accept = self._growth_guard() if self.params.critical else None
        for sigma, u0 in self._initial_profiles(grid, branch):
            try:
                result = self._descent().run(u0, objective, accept=accept,
                                             reseat=self._reseat(branch))
            except ProjectionUnavailableError:
                continue
            self.logger.debug(f"{branch} descent from width {sigma}: value={result.value:.15g} "
                              f"iterations={result.iterations} converged={result.converged}")
            return result
        raise ProjectionUnavailableError(
            f"No initial profile admits a {branch} projection at mu = {self.params.mu}",
            {'mu': self.params.mu})

    def _record(self, u: RadialFunction, lam: float, branch: str, newton: Optional[NewtonResult],
                iterations: int, converged: bool) -> SolutionRecord:
        params = self.params
        coef = FiberCoefficients.of(u, params)
        el = newton.residual if newton is not None else euler_lagrange_residual(u, lam, params)
        pohozaev_value = coef.A - params.mu * params.gamma1 * coef.B - params.gamma2 * coef.C
        manifold = abs(pohozaev_value) / coef.A
        poho = manifold if branch == "zero" else pohozaev_identity_check(u, lam, params)
        return SolutionRecord(
            u=u, lam=float(lam), branch=branch, energy=energy(u, params), params=params,
            pohozaev_residual=poho, el_residual=float(el),
            mass_error=abs(lq_norm(u, params.p) - params.a) / params.a,
            positivity_min=float(np.min(u.values[:-1])),
            degeneracy_margin=degeneracy_margin(u, params),
            manifold_residual=manifold, converged=converged, iterations=iterations)

    def _newton(self, u: RadialFunction, lam: float) -> NewtonResult:
        return refine_euler_lagrange(u, lam, self.params, self.config.el_tol,
                                     self.config.newton_max_iter, self.logger)

    def _polish(self, u: RadialFunction, branch: str, iterations: int) -> SolutionRecord:
        """Newton refinement, domain extension and the Pohozaev identity gate.

        The grid is doubled up to MAX_IDENTITY_REFINEMENTS times while the
        identity defect exceeds ``config.pohozaev_tol``.

        Raises:
            NonConvergenceError: Carrying the best record when Newton stalls, the
                branch is left or the identity defect stays above tolerance
        """
        params = self.params
        newton = self._newton(u, lagrange_multiplier(u, params))
        u, lam = newton.u, newton.lam

        if self.config.grid_R is None:
            R_needed = adaptive_radius(lam, params.p, DEFAULT_RADIUS)
            if R_needed > 1.05 * u.grid.R:
                n_new = int(math.ceil(u.grid.n * R_needed / u.grid.R))
                self.logger.info(f"Extending the domain to R = {R_needed:.3g} ({n_new} intervals)")
                grid = make_grid(R_needed, n_new, params.N)
                newton = self._newton(normalize_mass(interpolate_profile(u, grid), params.a, params.p), lam)
                u, lam = newton.u, newton.lam

        steps = newton.steps
        refinements = 0
        while True:
            u = u.with_values(np.abs(u.values))
            record = self._record(u, lam, branch, newton, iterations + steps, newton.converged)
            if refinements:
                record.extra['grid_refinements'] = refinements
            if not newton.converged:
                raise NonConvergenceError(
                    f"Newton refinement of the {branch} branch stalled at residual {newton.residual:.3e}",
                    best=record, details={'el_residual': newton.residual, 'steps': newton.steps,
                                          'n': u.grid.n})
            if record.pohozaev_residual <= self.config.pohozaev_tol:
                break
            if refinements == MAX_IDENTITY_REFINEMENTS:
                raise NonConvergenceError(
                    f"Pohozaev identity defect {record.pohozaev_residual:.3e} of the {branch} branch "
                    f"exceeds {self.config.pohozaev_tol:.1e} after {refinements} grid refinements",
                    best=record, details={'pohozaev': record.pohozaev_residual, 'n': u.grid.n})
            grid = u.grid.refined(2)
            self.logger.info(f"Pohozaev defect {record.pohozaev_residual:.3e} above "
                             f"{self.config.pohozaev_tol:.1e}; refining to {grid.n} intervals")
            newton = self._newton(normalize_mass(interpolate_profile(u, grid), params.a, params.p), lam)
            u, lam = newton.u, newton.lam
            steps += newton.steps
            refinements += 1

        second = fibering_second_derivative(FiberCoefficients.of(u, params), 1.0, params)
        if (branch == "plus" and second <= 0.0) or (branch == "minus" and second >= 0.0):
            raise NonConvergenceError(
                f"Refinement left the {branch} branch (Phi''(1) = {second:.3e})",
                best=record, details={'phi_second': second})
        if lam >= 0.0:
            self.logger.warning(f"{branch} branch multiplier is not negative: {lam:.6g}")
        return record

    def _fit_to_branch(self, u: RadialFunction, branch: str) -> RadialFunction:
        """Project a descent iterate onto the branch, enlarging the domain if it is stretched past R.

        The dilation (u)_t is sampled directly on a grid of radius DOMAIN_MARGIN R/t,
        which keeps the resolution of u relative to its own scale.

        Raises:
            ConcentrationError: If the projection leaves the grid resolution
        """
        params, tol = self.params, self.config.degeneracy_tol
        try:
            return project_to_manifold(u, branch, params, tol)
        except ResolutionLossError as e:
            t = classify_fibering(u, params, tol).root(branch)
            R = DOMAIN_MARGIN * u.grid.R / t
            if t >= 1.0 or R > MAX_DOMAIN_GROWTH * u.grid.R:
                raise ConcentrationError(f"The {branch} minimizer left the grid resolution",
                                         {'details': e.message, 't': t})
        n = int(math.ceil(DOMAIN_MARGIN * u.grid.n))
        self.logger.info(f"Enlarging the domain to R = {R:.6g} ({n} intervals) for the {branch} projection")
        source = interpolate_profile(u, make_grid(t * R, n, params.N))
        v = RadialFunction(make_grid(R, n, params.N), t ** (params.N / params.p) * source.values)
        v = normalize_mass(v, params.a, params.p)
        try:
            return project_to_manifold(v, branch, params, tol)
        except ResolutionLossError as e:
            raise ConcentrationError(f"The {branch} minimizer left the grid resolution",
                                     {'details': e.message, 't': t})

    def _minimize_branch(self, branch: str) -> SolutionRecord:
        self.params.validate()
        grid = self._grid()
        self.update_status(f"Minimizing the {branch} level", 0)
        result = self._descend_branch(grid, branch)
        if not result.converged:
            self.logger.warning(f"{branch} descent stopped at gradient {result.gradient_norm:.3e}; "
                                "continuing with Newton refinement")
        self.update_status(f"Refining the {branch} minimizer", 60)
        u = self._fit_to_branch(result.u, branch)
        record = self._polish(u, branch, result.iterations)
        self.update_status(f"{branch} level {record.energy:.10g}", 100)
        return record

    @handle_processing_errors
    def minimize_ground(self, mu_star: Optional[float] = None) -> SolutionRecord:
        """Minimize the energy over the plus part of the Pohozaev manifold.

        Args:
            mu_star: First extremal value at this mass, when known; couplings at
                or above it are attempted with a warning

        Raises:
            NonConvergenceError: Carrying the best record when refinement stalls
        """
        if mu_star is not None and self.params.mu >= mu_star:
            self.logger.warning(f"mu = {self.params.mu:.10g} is not below mu_a* = {mu_star:.10g}; "
                                "the plus branch may be empty, attempting anyway")
        return self._minimize_branch("plus")

    @handle_processing_errors
    def minimize_mountain(self) -> SolutionRecord:
        """Minimize the energy over the minus part of the Pohozaev manifold.

        Raises:
            ConcentrationError: If the iterates bubble in the Sobolev-critical regime
            NonConvergenceError: Carrying the best record when refinement stalls
        """
        return self._minimize_branch("minus")

    def _degenerate_objective(self, nu: float, rho: float):
        params = self.params
        p, q1, q2, c1, c2 = params.p, params.q1, params.q2, params.c1, params.c2
        alpha, _, minus_beta = mu_log_gradient_weights(params)
        log_target = math.log(params.mu)

        def objective(u: RadialFunction):
            coef = FiberCoefficients.of(u, params)
            s = s_star(coef, params)
            phi = fibering_value(coef, s, params)
            ds = fibering_derivative(coef, s, params) * s / (c2 - p)
            w, v = u.grid.weights, u.values
            gA = p * stiffness_gradient(u, p)
            gB = q1 * w * v ** (q1 - 1.0)
            gC = q2 * w * v ** (q2 - 1.0)
            c = math.log(mu_from_coefficients(coef, params)) - log_target
            gc = alpha * gA / coef.A - gB / coef.B + minus_beta * gC / coef.C
            grad = ((s ** p / p + ds / coef.A) * gA - params.mu * s ** c1 / q1 * gB
                    - (s ** c2 / q2 + ds / coef.C) * gC + (rho * c - nu) * gc)
            return phi - nu * c + 0.5 * rho * c * c, grad
        return objective

    @handle_processing_errors
    def minimize_degenerate(self, extremal=None) -> SolutionRecord:
        """Minimize the energy over the degenerate part of the Pohozaev manifold.

        Starts from the witness of the first extremal value and restores
        feasibility of mu(u) = mu with an augmented Lagrangian.

        Args:
            extremal: ExtremalReport on the same grid; computed when omitted

        Raises:
            EmptyManifoldError: If mu is below the first extremal value
        """
        params = self.params.validate()
        if extremal is None:
            from pohozaevsuite.processors.extremal_values import MuStarSolver
            extremal = MuStarSolver(params, self.config, self.logger, self.callback).compute()
        mu_star = extremal.mu_star
        if params.mu < mu_star * (1.0 - 1e-6):
            raise EmptyManifoldError(
                f"The degenerate manifold is empty: mu = {params.mu:.10g} is below the "
                f"first extremal value {mu_star:.10g}", {'mu': params.mu, 'mu_star': mu_star})

        u = normalize_mass(extremal.witness, params.a, params.p)
        self.update_status("Minimizing the degenerate level", 0)
        descent = self._descent()
        reseat = self._reseat("zero")
        nu, rho, c_prev = 0.0, 10.0, math.inf
        iterations = 0
        for outer in range(30):
            result = descent.run(u, self._degenerate_objective(nu, rho), reseat=reseat)
            u = result.u
            iterations += result.iterations
            c = math.log(mu_of_u(u, params) / params.mu)
            self.logger.debug(f"augmented Lagrangian outer={outer} constraint={c:.3e} "
                              f"nu={nu:.6g} rho={rho:.3g}")
            if abs(c) <= CONSTRAINT_TOL:
                break
            nu -= rho * c
            if abs(c) > 0.25 * abs(c_prev):
                rho *= 10.0
            c_prev = c
            self.update_status("Restoring degenerate feasibility", min(90, 10 + 3 * outer))
        else:
            raise NonConvergenceError("Augmented Lagrangian did not reach mu(u) = mu",
                                      best=u, details={'constraint': c})

        u = project_to_manifold(u, "zero", params)
        lam, residual = degenerate_equation_residual(u, params)
        record = self._record(u, lagrange_multiplier(u, params), "zero", None, iterations, True)
        record.el_residual = residual
        record.extra = {'degenerate_multiplier': lam, 'mu_star': mu_star,
                        'constraint': math.log(mu_of_u(u, params) / params.mu)}
        if record.manifold_residual > MANIFOLD_TOL or record.degeneracy_margin > MANIFOLD_TOL:
            raise NonConvergenceError(
                "Degenerate minimizer misses the manifold constraints", best=record,
                details={'pohozaev': record.manifold_residual,
                         'second_derivative': record.degeneracy_margin})
        self.update_status(f"zero level {record.energy:.10g}", 100)
        return record

    @handle_processing_errors
    def process(self, branch: Optional[str] = None, **kwargs) -> SolutionRecord:
        """Dispatch on the branch name (``plus``, ``minus`` or ``zero``)."""
        branch = branch or self.config.branch
        if branch == "plus":
            return self.minimize_ground(kwargs.get("mu_star"))
        if branch == "minus":
            return self.minimize_mountain()
        if branch == "zero":
            return self.minimize_degenerate(kwargs.get("extremal"))
        raise ValidationError(f"Unknown branch: {branch}")


def minimize_ground(params: ProblemParams, config: Optional[SolverConfig] = None,
                    logger: Optional[logging.Logger] = None,
                    mu_star: Optional[float] = None) -> SolutionRecord:
    return ManifoldSolver(params, config, logger).minimize_ground(mu_star)


def minimize_mountain(params: ProblemParams, config: Optional[SolverConfig] = None,
                      logger: Optional[logging.Logger] = None) -> SolutionRecord:
    return ManifoldSolver(params, config, logger).minimize_mountain()


def minimize_degenerate(params: ProblemParams, config: Optional[SolverConfig] = None,
                        logger: Optional[logging.Logger] = None, extremal=None) -> SolutionRecord:
    return ManifoldSolver(params, config, logger).minimize_degenerate(extremal)


__all__ = [
    'SolutionRecord', 'NewtonResult', 'ManifoldSolver', 'minimize_ground', 'minimize_mountain',
    'minimize_degenerate', 'lagrange_multiplier', 'lagrange_multiplier_from_manifold',
    'refine_euler_lagrange', 'pohozaev_identity_check', 'euler_lagrange_residual',
    'degenerate_equation_residual', 'degeneracy_margin', 'half_mass_radius',
]
