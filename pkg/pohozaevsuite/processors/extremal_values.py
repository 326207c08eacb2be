"""
First extremal value mu_a* = inf over the mass sphere of the threshold functional mu(u).

mu(u) is invariant under the mass-preserving dilation, so every seed is
re-seated to ||grad u||_p = 1 during the search and the witness is reported
in that normalization.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, List, Dict, Any, Callable, Tuple
import json
import logging
import math

import numpy as np

from pohozaevsuite.core.radial_core import (
    RadialFunction, RadialGrid, make_grid, normalize_mass, stiffness_gradient,
    write_profile_csv,
)
from pohozaevsuite.core.scaling_fibering import (
    ProblemParams, FiberCoefficients, mu_from_coefficients, mu_log_gradient_weights,
    mass_scale, classify_fibering, s_star, FiberingCase,
)
from pohozaevsuite.core.descent import SphereDescent, DescentResult
from pohozaevsuite.processors.base_processor import BaseProcessor
from pohozaevsuite.processors.manifold_solver import (
    ManifoldSolver, SolutionRecord, degenerate_equation_residual, half_mass_radius,
    DEFAULT_RADIUS,
)
from pohozaevsuite.utils.config import SolverConfig
from pohozaevsuite.utils.errors import (
    NonConvergenceError, NumericalError, RegimeError, ValidationError,
    ResolutionLossError, handle_processing_errors,
)

# Relative change of log mu below which a repeated line-search stall is round-off
ROUNDOFF_STALL = 1e-12


def kappa_exponent(params: ProblemParams) -> float:
    """Exponent of the mass scaling mu_a* = mu_1* a^{-kappa}."""
    return params.p * (params.q2 - params.q1) / (params.c2 - params.p)


def mu_bar_star(params: ProblemParams, mu_star: float) -> float:
    """Sobolev-critical threshold (q1 g1/p)(p*/p)^{(p - q1 g1)/(p* - p)} mu_a*.

    Raises:
        RegimeError: Unless q2 = p*
    """
    if not params.critical:
        raise RegimeError("mu_bar_star is defined only for q2 = p*",
                          {'q2': params.q2, 'p_star': params.p_star})
    p, ps, c1 = params.p, params.p_star, params.c1
    return c1 / p * (ps / p) ** ((p - c1) / (ps - p)) * mu_star


def ground_energy_lower_bound(params: ProblemParams, gn) -> float:
    """Lower bound of the plus level valid for every 0 < mu < mu_a* when q2 = p*.

    ``gn`` is the Gagliardo-Nirenberg report of exponent q1; its profile is
    rescaled to the extremal w with ||w||_p = ||grad w||_p = 1.

    Raises:
        RegimeError: Unless q2 = p* and the report belongs to q1
    """
    if not params.critical:
        raise RegimeError("The ground energy bound is defined only for q2 = p*")
    if not math.isclose(gn.q, params.q1, rel_tol=1e-12):
        raise RegimeError("The Gagliardo-Nirenberg report must use the exponent q1",
                          {'q': gn.q, 'q1': params.q1})
    p, ps, c1, N = params.p, params.p_star, params.c1, params.N
    k = (gn.mass_power / gn.gradient_power) ** (1.0 / p)
    c = (k ** N / gn.mass_power) ** (1.0 / p)
    w_critical = c ** ps * k ** (-N) * gn.critical_power
    e = p / (ps - p)
    return (-((p - c1) / (ps - c1)) ** e * (1.0 / w_critical) ** e
            * (ps - p) * (p - c1) / (params.gamma1 * ps * p * params.q1))


@dataclass
class ExtremalReport:
    """First extremal value with its witness.

    Attributes:
        mu_star: Best value of mu(u) over the seeds
        witness: Profile attaining it, mass a and ||grad u||_p = 1 unless that
            dilation would push mass past the grid radius
        kappa: Mass-scaling exponent
        seed_values: mu(u) reached from every seed, in seed order
        gradient_norm: Tangential gradient of log mu at the witness
        degenerate_case: Fibering case of the witness at mu = mu_star
        degenerate_residual: Relative residual of the degenerate equation at the
            dilate of the witness lying on P^0
        scaling_defect: Filled by the scaling-law check when requested
    """
    mu_star: float
    witness: RadialFunction
    params: ProblemParams
    kappa: float
    seed_values: List[float] = field(default_factory=list)
    gradient_norm: float = 0.0
    degenerate_case: str = FiberingCase.DEGENERATE.value
    degenerate_residual: float = 0.0
    scaling_defect: Optional[float] = None

    def to_dict(self, witness_path: Optional[str] = None) -> Dict[str, Any]:
        return {
            'mu_star': float(self.mu_star),
            'kappa_exponent': float(self.kappa),
            'scaling_defect': self.scaling_defect,
            'witness_path': witness_path,
            'params': self.params.to_dict(),
            'grid': self.witness.grid.spec(),
            'seed_values': [float(v) for v in self.seed_values],
            'gradient_norm': float(self.gradient_norm),
            'degenerate_case': self.degenerate_case,
            'degenerate_residual': float(self.degenerate_residual),
        }

    def save(self, output_dir: Path, stem: str = "extremal") -> Path:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        profile = write_profile_csv(self.witness, output_dir / f"{stem}_witness.csv")
        path = output_dir / f"{stem}.json"
        path.write_text(json.dumps(self.to_dict(profile.name), indent=2) + "\n", encoding="utf-8")
        return path


def _seed_profiles(grid: RadialGrid, count: int, seed: int) -> List[Tuple[str, np.ndarray]]:
    r = grid.nodes
    seeds = [
        ("gauss-0.5", np.exp(-r ** 2 / 0.5)),
        ("gauss-1", np.exp(-r ** 2 / 2.0)),
        ("gauss-2", np.exp(-r ** 2 / 8.0)),
        ("bump-near", np.exp(-r ** 2 / 2.0) + 0.5 * np.exp(-(r - 2.0) ** 2 / 0.5)),
        ("bump-far", np.exp(-r ** 2 / 0.5) + 0.3 * np.exp(-(r - 4.0) ** 2 / 2.0)),
    ]
    rng = np.random.default_rng(seed)
    while len(seeds) < count:
        sigma = float(rng.uniform(0.3, 3.0))
        seeds.append((f"gauss-{sigma:.3f}", np.exp(-r ** 2 / (2.0 * sigma ** 2))))
    profiles = []
    for label, values in seeds[:count]:
        values = values.copy()
        values[-1] = 0.0
        profiles.append((label, values))
    return profiles


class MuStarSolver(BaseProcessor):
    """Multi-start descent of log mu(u) over the mass sphere."""

    def __init__(self, params: ProblemParams, config: Optional[SolverConfig] = None,
                 logger: Optional[logging.Logger] = None,
                 callback: Optional[Callable[[str, float], None]] = None):
        super().__init__(config, logger, callback)
        self.params = params

    def _objective(self):
        params = self.params
        alpha, minus_one, minus_beta = mu_log_gradient_weights(params)

        def objective(u: RadialFunction):
            coef = FiberCoefficients.of(u, params)
            value = math.log(mu_from_coefficients(coef, params))
            w, v = u.grid.weights, u.values
            grad = (alpha * params.p * stiffness_gradient(u, params.p) / coef.A
                    + minus_one * params.q1 * w * v ** (params.q1 - 1.0) / coef.B
                    + minus_beta * params.q2 * w * v ** (params.q2 - 1.0) / coef.C)
            return value, grad
        return objective

    def _normalize_gradient(self, u: RadialFunction) -> RadialFunction:
        coef = FiberCoefficients.of(u, self.params)
        return mass_scale(u, coef.A ** (-1.0 / self.params.p), self.params)

    def _run_seed(self, label: str, u0: RadialFunction) -> DescentResult:
        descent = SphereDescent(self.params.p, self.params.a, self.config.step_size,
                                self.config.max_iterations, self.config.gradient_tol, self.logger)
        try:
            u0 = self._normalize_gradient(u0)
        except ResolutionLossError:
            pass
        result = descent.run(u0, self._objective(), reseat=self._normalize_gradient)
        if not self._accepted(result):
            result = self._restart(label, descent, result)
        self.logger.debug(f"mu* seed {label}: mu={math.exp(result.value):.15g} "
                          f"gradient={result.gradient_norm:.3e} iterations={result.iterations} "
                          f"converged={result.converged}")
        return result

    def _restart(self, label: str, descent: SphereDescent, stalled: DescentResult) -> DescentResult:
        """Continue a stalled seed once with a fresh step size.

        A second stall at the same value to round-off means log mu cannot be
        decreased further in floating point; the seed then counts as converged.
        """
        again = descent.run(stalled.u, self._objective(), reseat=self._normalize_gradient)
        capped = again.iterations >= descent.max_iterations
        again.iterations += stalled.iterations
        again.history = stalled.history + again.history[1:]
        if self._accepted(again):
            return again
        if not capped and abs(again.value - stalled.value) <= ROUNDOFF_STALL * (1.0 + abs(stalled.value)):
            self.logger.debug(f"mu* seed {label} is stationary to round-off "
                              f"(gradient {again.gradient_norm:.3e})")
            again.converged = True
        return again

    def _accepted(self, result: DescentResult) -> bool:
        tol = self.config.gradient_tol * (1.0 + abs(result.value))
        return result.converged or result.gradient_norm <= 100.0 * tol

    @handle_processing_errors
    def compute(self, grid: Optional[RadialGrid] = None) -> ExtremalReport:
        """Compute mu_a* and its witness.

        Raises:
            NonConvergenceError: If no seed reaches the gradient tolerance, or the
                witness concentrates (Sobolev-critical regime)
        """
        params = self.params.validate(require_mu=False)
        grid = grid or make_grid(self.config.grid_R or DEFAULT_RADIUS, self.config.grid_n, params.N)
        seeds = _seed_profiles(grid, max(5, self.config.seeds), self.config.seed)
        self.update_status(f"Searching mu* from {len(seeds)} seeds", 0)

        results: Dict[int, Any] = {}
        with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
            futures = {
                executor.submit(self._run_seed, label,
                                normalize_mass(RadialFunction(grid, values), params.a, params.p)): i
                for i, (label, values) in enumerate(seeds)
            }
            for done, future in enumerate(as_completed(futures), start=1):
                i = futures[future]
                try:
                    results[i] = future.result()
                except NumericalError as e:
                    self.logger.warning(f"mu* seed {seeds[i][0]} failed: {e.message}")
                    results[i] = None
                self.update_status("mu* seeds", 100.0 * done / len(seeds))

        ordered = [results[i] for i in range(len(seeds))]
        seed_values = [math.exp(r.value) if r is not None else math.inf for r in ordered]
        accepted = [i for i, r in enumerate(ordered) if r is not None and self._accepted(r)]
        candidates = [i for i, r in enumerate(ordered) if r is not None]
        if not candidates:
            raise NonConvergenceError("Every mu* seed failed", best=None)
        best_i = min(accepted or candidates, key=lambda i: (seed_values[i], i))
        best = ordered[best_i]
        if not accepted:
            raise NonConvergenceError(
                "mu* search stagnated on every seed", best=seed_values[best_i],
                details={'mu_star': seed_values[best_i], 'gradient_norm': best.gradient_norm})

        try:
            witness = self._normalize_gradient(best.u)
        except ResolutionLossError as e:
            self.logger.warning(f"Witness kept at ||grad u||_p = "
                                f"{FiberCoefficients.of(best.u, params).A ** (1.0 / params.p):.6g}: "
                                f"{e.message}")
            witness = best.u
        witness = normalize_mass(witness, params.a, params.p)
        if params.critical and half_mass_radius(witness, params.p) < 5.0 * grid.h:
            raise NonConvergenceError(
                "mu* witness concentrates at the origin; attainment is not resolved on this grid",
                best=seed_values[best_i], details={'mu_star': seed_values[best_i]})

        mu_star = mu_from_coefficients(FiberCoefficients.of(witness, params), params)
        at_star = params.with_mu(mu_star)
        case = classify_fibering(witness, at_star, self.config.degeneracy_tol).case.value
        coef = FiberCoefficients.of(witness, at_star)
        _, residual = degenerate_equation_residual(witness, at_star, s_star(coef, at_star))
        self.update_status(f"mu* = {mu_star:.12g}", 100)
        return ExtremalReport(mu_star=mu_star, witness=witness, params=at_star,
                              kappa=kappa_exponent(params), seed_values=seed_values,
                              gradient_norm=best.gradient_norm, degenerate_case=case,
                              degenerate_residual=residual)

    @handle_processing_errors
    def process(self, *args, **kwargs) -> ExtremalReport:
        return self.compute(*args, **kwargs)


def mu_star(params: ProblemParams, config: Optional[SolverConfig] = None,
            logger: Optional[logging.Logger] = None) -> ExtremalReport:
    """First extremal value at the mass ``params.a``; ``params.mu`` is ignored."""
    return MuStarSolver(params, config, logger).compute()


@dataclass
class ScalingLawReport:
    a1: float
    a2: float
    mu1: float
    mu2: float
    kappa: float
    defect: float

    def to_dict(self) -> Dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}


def scaling_law_report(a1: float, a2: float, params: ProblemParams,
                       config: Optional[SolverConfig] = None,
                       logger: Optional[logging.Logger] = None) -> ScalingLawReport:
    """Compare independent mu* at two masses with the power law mu_a* = mu_1* a^{-kappa}.

    Raises:
        ValidationError: If a mass is not positive
    """
    if not (a1 > 0 and a2 > 0):
        raise ValidationError("Masses must be positive", {'a1': a1, 'a2': a2})
    kappa = kappa_exponent(params)
    mu1 = mu_star(params.with_mass(a1), config, logger).mu_star
    mu2 = mu1 if a1 == a2 else mu_star(params.with_mass(a2), config, logger).mu_star
    defect = abs(mu2 - mu1 * (a2 / a1) ** (-kappa)) / mu2
    return ScalingLawReport(a1, a2, mu1, mu2, kappa, defect)


def scaling_law_check(a1: float, a2: float, params: ProblemParams,
                      config: Optional[SolverConfig] = None,
                      logger: Optional[logging.Logger] = None) -> float:
    """Relative defect of the mass-scaling law between ``a1`` and ``a2``."""
    if a1 == a2:
        return 0.0
    return scaling_law_report(a1, a2, params, config, logger).defect


@dataclass
class EnergyGapReport:
    """The three levels at one coupling near mu_a*, with the ordering flags."""
    mu: float
    mu_star: float
    m_plus: float
    m_minus: Optional[float]
    m_zero: float
    flags: Dict[str, bool] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mu': self.mu, 'mu_star': self.mu_star, 'm_plus': self.m_plus,
            'm_minus': self.m_minus, 'm_zero': self.m_zero, 'flags': dict(self.flags),
            'notes': list(self.notes),
        }


def energy_gap_report(params: ProblemParams, config: Optional[SolverConfig] = None,
                      logger: Optional[logging.Logger] = None,
                      extremal: Optional[ExtremalReport] = None) -> EnergyGapReport:
    """Run the three minimizations at mu in [mu_a*, 1.2 mu_a*] and compare the levels.

    The ordering m^- < m^0 is reported, not enforced.

    Raises:
        ValidationError: If mu lies outside [mu_a*, 1.2 mu_a*]
    """
    extremal = extremal or mu_star(params, config, logger)
    ms = extremal.mu_star
    if not ms * (1.0 - 1e-6) <= params.mu <= 1.2 * ms * (1.0 + 1e-6):
        raise ValidationError(f"mu = {params.mu:.10g} must lie in [mu*, 1.2 mu*] with mu* = {ms:.10g}")

    solver = ManifoldSolver(params, config, logger)
    plus: SolutionRecord = solver.minimize_ground(ms)
    zero: SolutionRecord = solver.minimize_degenerate(extremal)
    notes = []
    try:
        m_minus = solver.minimize_mountain().energy
    except NumericalError as e:
        m_minus = None
        notes.append(f"minus level unavailable: {e.message}")

    flags = {
        'plus_negative': plus.energy < 0.0,
        'plus_below_zero': plus.energy < zero.energy,
    }
    if m_minus is not None:
        flags['plus_below_minus'] = plus.energy <= m_minus
        flags['minus_below_zero'] = m_minus < zero.energy
        if not flags['minus_below_zero']:
            notes.append("m^- >= m^0 at this coupling")
    return EnergyGapReport(params.mu, ms, plus.energy, m_minus, zero.energy, flags, notes)
