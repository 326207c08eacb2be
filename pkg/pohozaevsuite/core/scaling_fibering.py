"""
Mass-preserving dilations, the energy, the Pohozaev functional and the fibering map.

Along the dilation (u)_s(r) = s^{N/p} u(s r) the three integrals

    A = ||grad u||_p^p,   B = ||u||_{q1}^{q1},   C = ||u||_{q2}^{q2}

scale as s^p A, s^{q1 g1} B and s^{q2 g2} C (g = gamma exponent), so the whole
fiber s -> Psi((u)_s) is a closed-form function of (A, B, C). ``FiberCoefficients``
holds that triple and every fibering quantity is evaluated from it.
"""

from dataclasses import dataclass, replace, asdict
from enum import Enum
from typing import Optional, Dict, Any
import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from pohozaevsuite.core.radial_core import (
    RadialFunction, lq_power, grad_lp_power, stiffness_gradient,
)
from pohozaevsuite.utils.errors import (
    RegimeError, ValidationError, DegenerateInputError,
    ResolutionLossError, ProjectionUnavailableError,
)

DEGENERACY_TOL = 1e-8
# Fraction of ||u||_p^p a stretching dilation may push past R
TAIL_MASS_TOL = 1e-8
ROOT_SETTLE_TOL = 1e-12
ROOT_ACCEPT_TOL = 1e-8


@dataclass(frozen=True)
class ProblemParams:
    """Exponents, mass and coupling of the constrained p-Laplacian problem."""
    N: int
    p: float
    q1: float
    q2: float
    a: float = 1.0
    mu: float = 1.0

    @property
    def p_star(self) -> float:
        return self.p * self.N / (self.N - self.p)

    @property
    def mass_critical(self) -> float:
        return self.p + self.p ** 2 / self.N

    @property
    def gamma1(self) -> float:
        return self.N / self.p - self.N / self.q1

    @property
    def gamma2(self) -> float:
        return self.N / self.p - self.N / self.q2

    @property
    def c1(self) -> float:
        """q1 * gamma_{q1}, below p."""
        return self.q1 * self.gamma1

    @property
    def c2(self) -> float:
        """q2 * gamma_{q2}, above p."""
        return self.q2 * self.gamma2

    @property
    def critical(self) -> bool:
        return math.isclose(self.q2, self.p_star, rel_tol=1e-12)

    def with_mu(self, mu: float) -> "ProblemParams":
        return replace(self, mu=float(mu))

    def with_mass(self, a: float) -> "ProblemParams":
        return replace(self, a=float(a))

    def validate(self, require_mu: bool = True) -> "ProblemParams":
        """Check p < q1 < p + p^2/N < q2 <= p* and the scalar ranges.

        Raises:
            RegimeError: Naming the first violated inequality
        """
        if int(self.N) != self.N or self.N < 2:
            raise RegimeError("N must be an integer >= 2", {'N': self.N})
        if not 1.0 < self.p < self.N:
            raise RegimeError("p must satisfy 1 < p < N", {'p': self.p, 'N': self.N})
        if not self.q1 > self.p:
            raise RegimeError("q1 must exceed p", {'q1': self.q1, 'p': self.p})
        if not self.q1 < self.mass_critical:
            raise RegimeError("q1 must be below the mass-critical exponent p + p^2/N",
                              {'q1': self.q1, 'mass_critical': self.mass_critical})
        if not self.q2 > self.mass_critical:
            raise RegimeError("q2 must exceed the mass-critical exponent p + p^2/N",
                              {'q2': self.q2, 'mass_critical': self.mass_critical})
        if self.q2 > self.p_star and not self.critical:
            raise RegimeError("q2 must not exceed the Sobolev exponent p* = pN/(N-p)",
                              {'q2': self.q2, 'p_star': self.p_star})
        if not self.a > 0:
            raise RegimeError("mass a must be positive", {'a': self.a})
        if require_mu and not self.mu > 0:
            raise RegimeError("coupling mu must be positive", {'mu': self.mu})
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {k: (int(v) if k == 'N' else float(v)) for k, v in asdict(self).items()}


def gamma_exponent(q: float, params: ProblemParams) -> float:
    """gamma_q = N/p - N/q for q in [p, p*].

    Raises:
        ValidationError: If q lies outside [p, p*]
    """
    upper = params.p_star
    if q < params.p or (q > upper and not math.isclose(q, upper, rel_tol=1e-12)):
        raise ValidationError(f"q must lie in [p, p*] = [{params.p}, {upper}], got {q}")
    return params.N / params.p - params.N / q


@dataclass(frozen=True)
class FiberCoefficients:
    """The integrals (A, B, C) that determine the fibering map of a profile."""
    A: float
    B: float
    C: float

    @classmethod
    def of(cls, u: RadialFunction, params: ProblemParams) -> "FiberCoefficients":
        return cls(grad_lp_power(u, params.p), lq_power(u, params.q1), lq_power(u, params.q2))

    def dilated(self, s: float, params: ProblemParams) -> "FiberCoefficients":
        return FiberCoefficients(s ** params.p * self.A, s ** params.c1 * self.B,
                                 s ** params.c2 * self.C)

    def require_nondegenerate(self) -> None:
        if not (self.A > 0 and self.B > 0 and self.C > 0):
            raise DegenerateInputError(
                "Profile has a vanishing gradient or Lebesgue norm",
                {'A': self.A, 'B': self.B, 'C': self.C})


def fibering_value(coef: FiberCoefficients, s: float, params: ProblemParams) -> float:
    """Phi(s) = s^p A/p - mu s^{q1 g1} B/q1 - s^{q2 g2} C/q2."""
    p, mu = params.p, params.mu
    return (s ** p * coef.A / p - mu * s ** params.c1 * coef.B / params.q1
            - s ** params.c2 * coef.C / params.q2)


def fibering_derivative(coef: FiberCoefficients, s: float, params: ProblemParams) -> float:
    p, mu = params.p, params.mu
    return (s ** (p - 1) * coef.A - mu * params.gamma1 * s ** (params.c1 - 1) * coef.B
            - params.gamma2 * s ** (params.c2 - 1) * coef.C)


def fibering_second_derivative(coef: FiberCoefficients, s: float, params: ProblemParams) -> float:
    p, mu, c1, c2 = params.p, params.mu, params.c1, params.c2
    return ((p - 1) * s ** (p - 2) * coef.A
            - mu * params.gamma1 * (c1 - 1) * s ** (c1 - 2) * coef.B
            - params.gamma2 * (c2 - 1) * s ** (c2 - 2) * coef.C)


def reduced_derivative(coef: FiberCoefficients, t: float, params: ProblemParams) -> float:
    """g(t) = t^{1 - q1 g1} Phi'(t) = h(t) - mu g1 B, with the common power removed."""
    p, c1, c2 = params.p, params.c1, params.c2
    return (t ** (p - c1) * coef.A - params.gamma2 * t ** (c2 - c1) * coef.C
            - params.mu * params.gamma1 * coef.B)


def s_star(coef: FiberCoefficients, params: ProblemParams) -> float:
    """Maximizer of h(t) = t^{p - q1 g1} A - g2 t^{q2 g2 - q1 g1} C."""
    p, c1, c2 = params.p, params.c1, params.c2
    ratio = (p - c1) * coef.A / (params.gamma2 * (c2 - c1) * coef.C)
    return ratio ** (1.0 / (c2 - p))


def mu_from_coefficients(coef: FiberCoefficients, params: ProblemParams) -> float:
    """Closed-form threshold mu(u) = K A^{(c2-c1)/(c2-p)} / (B C^{(p-c1)/(c2-p)})."""
    coef.require_nondegenerate()
    p, c1, c2, g1, g2 = params.p, params.c1, params.c2, params.gamma1, params.gamma2
    beta = (p - c1) / (c2 - p)
    k = (p - c1) / (g2 * (c2 - c1))
    K = (c2 - p) * k ** beta / ((c2 - c1) * g1)
    log_mu = (math.log(K) + (1.0 + beta) * math.log(coef.A)
              - math.log(coef.B) - beta * math.log(coef.C))
    return math.exp(log_mu)


def mu_log_gradient_weights(params: ProblemParams):
    """Exponents (alpha, -1, -beta) with log mu = const + alpha log A - log B - beta log C."""
    beta = (params.p - params.c1) / (params.c2 - params.p)
    return 1.0 + beta, -1.0, -beta


def energy(u: RadialFunction, params: ProblemParams) -> float:
    """Psi_mu(u) = A/p - mu B/q1 - C/q2."""
    return fibering_value(FiberCoefficients.of(u, params), 1.0, params)


def pohozaev(u: RadialFunction, params: ProblemParams) -> float:
    """P(u) = A - mu g1 B - g2 C, which equals Phi'(1)."""
    coef = FiberCoefficients.of(u, params)
    return coef.A - params.mu * params.gamma1 * coef.B - params.gamma2 * coef.C


def mu_of_u(u: RadialFunction, params: ProblemParams) -> float:
    """Threshold coupling mu(u), 0-homogeneous along the dilation.

    Raises:
        DegenerateInputError: If u vanishes or one of its norms vanishes
    """
    if u.is_zero():
        raise DegenerateInputError("mu(u) is undefined for the zero profile")
    return mu_from_coefficients(FiberCoefficients.of(u, params), params)


def degeneracy_margin(u: RadialFunction, params: ProblemParams) -> float:
    """|Phi''(1)| relative to ||grad u||_p^p."""
    coef = FiberCoefficients.of(u, params)
    return abs(fibering_second_derivative(coef, 1.0, params)) / coef.A


def energy_gradient(u: RadialFunction, params: ProblemParams, coef: Optional[FiberCoefficients] = None,
                    s: float = 1.0):
    """Nodal gradients of A/p, B/q1 and C/q2 weighted by the fiber position s.

    Returns the gradient of Phi(s; A(u), B(u), C(u)) with respect to u at fixed s.
    """
    w = u.grid.weights
    v = u.values
    grad_a = stiffness_gradient(u, params.p)
    grad_b = w * np.abs(v) ** (params.q1 - 2) * v
    grad_c = w * np.abs(v) ** (params.q2 - 2) * v
    return (s ** params.p * grad_a - params.mu * s ** params.c1 * grad_b
            - s ** params.c2 * grad_c)


class FiberingCase(str, Enum):
    TWO_ROOTS = "TwoRoots"
    DEGENERATE = "Degenerate"
    NO_ROOTS = "NoRoots"


@dataclass(frozen=True)
class FiberingReport:
    """Classification of the fibering map of one profile at one coupling."""
    mu_threshold: float
    s_star: float
    case: FiberingCase
    t_plus: Optional[float] = None
    t_minus: Optional[float] = None
    t_zero: Optional[float] = None
    phi_plus: Optional[float] = None
    phi_minus: Optional[float] = None

    def root(self, branch: str) -> float:
        if branch == "plus" and self.t_plus is not None:
            return self.t_plus
        if branch == "minus" and self.t_minus is not None:
            return self.t_minus
        if branch == "zero" and self.t_zero is not None:
            return self.t_zero
        raise ProjectionUnavailableError(
            f"No {branch} critical point: fibering case {self.case.value}",
            {'case': self.case.value, 'mu_threshold': self.mu_threshold})

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['case'] = self.case.value
        return data


def _bracket_root(func, lo: float, hi: float) -> float:
    return brentq(func, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def classify_coefficients(coef: FiberCoefficients, params: ProblemParams,
                          tol_rel: float = DEGENERACY_TOL) -> FiberingReport:
    """Exact trichotomy of the fibering map from (A, B, C)."""
    mu_u = mu_from_coefficients(coef, params)
    s0 = s_star(coef, params)

    if abs(params.mu - mu_u) <= tol_rel * mu_u:
        return FiberingReport(mu_u, s0, FiberingCase.DEGENERATE, t_zero=s0)
    if params.mu > mu_u:
        return FiberingReport(mu_u, s0, FiberingCase.NO_ROOTS)

    g = lambda t: reduced_derivative(coef, t, params)

    lo = s0
    while g(lo) >= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise ProjectionUnavailableError("Lower fibering root underflows", {'s_star': s0})
    t_plus = _bracket_root(g, lo, s0)

    hi = s0
    while g(hi) >= 0.0:
        hi *= 2.0
        if hi > 1e300:
            raise ProjectionUnavailableError("Upper fibering root overflows", {'s_star': s0})
    t_minus = _bracket_root(g, s0, hi)

    return FiberingReport(
        mu_u, s0, FiberingCase.TWO_ROOTS, t_plus=t_plus, t_minus=t_minus,
        phi_plus=fibering_value(coef, t_plus, params),
        phi_minus=fibering_value(coef, t_minus, params))


def classify_fibering(u: RadialFunction, params: ProblemParams,
                      tol_rel: float = DEGENERACY_TOL) -> FiberingReport:
    """Classify Phi_{mu,u}: two roots, one degenerate root, or none.

    Raises:
        DegenerateInputError: If u vanishes or one of its norms vanishes
    """
    if u.is_zero():
        raise DegenerateInputError("Cannot classify the fibering map of the zero profile")
    return classify_coefficients(FiberCoefficients.of(u, params), params, tol_rel)


def mass_scale(u: RadialFunction, s: float, params: ProblemParams) -> RadialFunction:
    """(u)_s(r) = s^{N/p} u(s r), by monotone cubic interpolation on the same grid.

    Raises:
        ValidationError: If s <= 0
        ResolutionLossError: If the dilated support covers fewer than 4 nodes, or
            if s < 1 pushes a non-negligible part of the mass past R
    """
    if not s > 0:
        raise ValidationError(f"Dilation factor must be positive, got {s}")
    if s == 1.0:
        return u
    grid = u.grid
    if np.count_nonzero(grid.nodes <= grid.R / s) < 4:
        raise ResolutionLossError(
            f"Dilation by {s:.3g} leaves fewer than 4 nodes inside the support",
            {'s': s, 'R': grid.R, 'n': grid.n})
    if s < 1.0:
        density = grid.weights * np.abs(u.values) ** params.p
        total = float(np.sum(density))
        lost = float(np.sum(density[grid.nodes > s * grid.R]))
        if total > 0.0 and lost > TAIL_MASS_TOL * total:
            raise ResolutionLossError(
                f"Dilation by {s:.3g} pushes {lost / total:.3g} of the mass past R = {grid.R:.6g}",
                {'s': s, 'R': grid.R, 'lost_fraction': lost / total})
    interp = PchipInterpolator(grid.nodes, u.values, extrapolate=False)
    values = np.nan_to_num(interp(s * grid.nodes), nan=0.0)
    return RadialFunction(grid, s ** (params.N / params.p) * values)


def project_to_manifold(u: RadialFunction, branch: str, params: ProblemParams,
                        tol_rel: float = DEGENERACY_TOL, polish: int = 50) -> RadialFunction:
    """Dilate u onto P^+ (branch="plus"), P^- ("minus") or P^0 ("zero").

    After the first dilation the classification is repeated on the interpolated
    profile until the branch root is 1 to within 1e-12, so the discrete Pohozaev
    functional of the result vanishes to interpolation round-off. The zero
    branch dilates to the maximizer s_* of the reduced fiber, which puts the
    result on P^0 for its own coupling mu(u).

    Raises:
        ProjectionUnavailableError: If the fibering map has no root on the branch
        ResolutionLossError: If a dilation leaves the grid or the root does not
            settle at 1 within ``polish`` re-interpolations
    """
    if branch not in ("plus", "minus", "zero"):
        raise ValidationError(f"Unknown branch: {branch}")

    if branch == "zero":
        def root(v: RadialFunction) -> float:
            coef = FiberCoefficients.of(v, params)
            coef.require_nondegenerate()
            return s_star(coef, params)
    else:
        def root(v: RadialFunction) -> float:
            return classify_fibering(v, params, tol_rel).root(branch)

    t = root(u)
    result = mass_scale(u, t, params)
    for _ in range(polish):
        t = root(result)
        if abs(t - 1.0) < ROOT_SETTLE_TOL:
            return result
        result = mass_scale(result, t, params)
    t = root(result)
    if abs(t - 1.0) > ROOT_ACCEPT_TOL:
        raise ResolutionLossError(
            f"The {branch} root did not settle under re-interpolation (t = {t:.15g})",
            {'branch': branch, 't': t, 'iterations': polish})
    return result
