"""
Talenti bubbles, cutoff bubbles, Sobolev and Gagliardo-Nirenberg constants,
and the bubble path used to certify the strict energy inequality
m^- < m^+ + S^{N/p}/N in the Sobolev-critical case.

Integrals of explicit profiles are evaluated with adaptive quadrature in the
scaled variable s = r/eps, split on a geometric partition so that both the
core of the bubble and its algebraic tail are resolved.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, List, Dict, Any, Callable
import io
import json
import logging
import math

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad, solve_ivp
from scipy.optimize import minimize_scalar
from scipy.special import gamma as gamma_fn

from pohozaevsuite.core.radial_core import (
    RadialFunction, RadialGrid, make_grid, interpolate_profile, sphere_area,
    lq_power, grad_lp_power, lq_norm, grad_lp_norm,
)
from pohozaevsuite.core.scaling_fibering import ProblemParams
from pohozaevsuite.processors.base_processor import BaseProcessor
from pohozaevsuite.processors.manifold_solver import ManifoldSolver, SolutionRecord
from pohozaevsuite.utils.config import CertificateConfig
from pohozaevsuite.utils.errors import (
    ValidationError, RegimeError, InsufficientDataError, NumericalError,
    ShootingBracketError, CertificateUnavailableError, handle_processing_errors,
)

QUAD_OPTS = {'epsabs': 0.0, 'epsrel': 1e-11, 'limit': 400}
PATH_CSV_HEADER = "tau,energy"
SHOOTING_FLOOR = 1e-12
SHOOTING_TOL = 1e-13


def _check_exponents(N: int, p: float) -> None:
    if int(N) != N or N < 2 or not 1.0 < p < N:
        raise ValidationError("Bubbles need an integer N >= 2 and 1 < p < N", {'N': N, 'p': p})


def _p_star(N: int, p: float) -> float:
    return N * p / (N - p)


# ---------------------------------------------------------------------------
# Talenti bubble
# ---------------------------------------------------------------------------

def _unit_profile(s, N: int, p: float):
    """(1 + s^{p'})^{(p-N)/p} and its derivative."""
    pp = p / (p - 1.0)
    s = np.asarray(s, dtype=float)
    base = 1.0 + s ** pp
    value = base ** ((p - N) / p)
    slope = -((N - p) / (p - 1.0)) * s ** (1.0 / (p - 1.0)) * base ** (-N / p)
    return value, slope


def _unit_flux(s: float, N: int, p: float) -> float:
    """s^{N-1} phi_p(V'(s)) for the unit profile."""
    _, slope = _unit_profile(s, N, p)
    return float(s ** (N - 1) * abs(slope) ** (p - 2.0) * slope)


def _unit_laplacian(s: float, N: int, p: float, step: float = 1e-3) -> float:
    """-Delta_p V at s from a five-point difference of the radial flux."""
    hs = step * s
    f = [_unit_flux(s + k * hs, N, p) for k in (-2, -1, 1, 2)]
    dflux = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * hs)
    return -dflux / s ** (N - 1)


def talenti_constant(N: int, p: float) -> float:
    """Amplitude d_{N,p} for which -Delta_p U = U^{p*-1}.

    The ansatz d V with V = (1 + s^{p'})^{(p-N)/p} turns the equation into
    d^{p*-p} = -Delta_p V / V^{p*-1}; the ratio is evaluated at s = 1 and must
    agree at three further radii.

    Raises:
        NumericalError: If the ratio is not constant along the profile
    """
    _check_exponents(N, p)
    ps = _p_star(N, p)

    def ratio(s: float) -> float:
        value, _ = _unit_profile(s, N, p)
        return _unit_laplacian(s, N, p) / float(value) ** (ps - 1.0)

    reference = ratio(1.0)
    for s in (0.5, 2.0, 4.0):
        if abs(ratio(s) / reference - 1.0) > 1e-6:
            raise NumericalError("Bubble ansatz does not solve the critical equation",
                                 {'N': N, 'p': p, 'radius': s})
    return reference ** (1.0 / (ps - p))


def talenti_constant_closed_form(N: int, p: float) -> float:
    """(N ((N-p)/(p-1))^{p-1})^{(N-p)/p^2}, used to cross-check the numeric value."""
    _check_exponents(N, p)
    return (N * ((N - p) / (p - 1.0)) ** (p - 1.0)) ** ((N - p) / p ** 2)


def alpha_window(N: int, p: float) -> Tuple[float, float]:
    """Admissible cutoff exponents (lower, upper); the upper end is excluded."""
    _check_exponents(N, p)
    if p < 3.0:
        return 0.0, 1.0 / p
    return (N - p) * (p - 3.0) / (p * (N * p - 3.0 * N + 2.0)), 1.0 / p


def default_alpha(p: float, N: Optional[int] = None) -> float:
    """0.8/p, or the middle of the window for N when 0.8/p falls below its lower end."""
    alpha = 0.8 / p
    if N is not None:
        lo, hi = alpha_window(N, p)
        if alpha <= lo:
            alpha = 0.5 * (lo + hi)
    return alpha


@dataclass(frozen=True)
class BubbleSpec:
    """Concentration scale and cutoff exponent of a (cutoff) Talenti bubble.

    ``d`` is filled with the numeric ``talenti_constant`` by ``resolved``.
    """
    eps: float
    alpha: Optional[float] = None
    d: Optional[float] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValidationError("Bubble scale eps must be positive", {'eps': self.eps})
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise ValidationError("Cutoff exponent must lie in [0, 1)", {'alpha': self.alpha})

    @property
    def cutoff_radius(self) -> float:
        return self.eps ** (self.alpha if self.alpha is not None else 0.0)

    def resolved(self, params: ProblemParams) -> "BubbleSpec":
        alpha = default_alpha(params.p, params.N) if self.alpha is None else self.alpha
        d = talenti_constant(params.N, params.p) if self.d is None else self.d
        return BubbleSpec(self.eps, alpha, d)

    def check_window(self, params: ProblemParams) -> "BubbleSpec":
        lo, hi = alpha_window(params.N, params.p)
        alpha = self.alpha if self.alpha is not None else default_alpha(params.p, params.N)
        if not (lo <= alpha < hi) or (lo > 0.0 and alpha == lo):
            raise ValidationError("Cutoff exponent outside the admissible window",
                                  {'alpha': alpha, 'window': [lo, hi]})
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {'eps': self.eps, 'alpha': self.alpha, 'd': self.d}


def talenti_profile(r, spec: BubbleSpec, N: int, p: float):
    """U_eps(r) and U_eps'(r) for a resolved spec."""
    eps = spec.eps
    scale = spec.d * eps ** (-(N - p) / p)
    value, slope = _unit_profile(np.asarray(r, dtype=float) / eps, N, p)
    return scale * value, scale * slope / eps


def talenti_bubble(spec: BubbleSpec, params: ProblemParams, grid: RadialGrid) -> RadialFunction:
    """Samples of U_eps on ``grid``; the bubble is not truncated at R."""
    spec = spec.resolved(params)
    value, _ = talenti_profile(grid.nodes, spec, params.N, params.p)
    return RadialFunction(grid, value)


def talenti_residual(spec: BubbleSpec, params: ProblemParams,
                     radii: Sequence[float] = (0.25, 0.5, 1.0, 2.0, 4.0)) -> float:
    """Largest relative residual of -Delta_p U = U^{p*-1} at radii given in units of eps."""
    spec = spec.resolved(params)
    N, p = params.N, params.p
    ps = _p_star(N, p)
    worst = 0.0
    for s in radii:
        r = s * spec.eps
        value, _ = talenti_profile(r, spec, N, p)
        # -Delta_p scales like d^{p-1} eps^{-(N-p)(p-1)/p - p}
        lap = spec.d ** (p - 1.0) * spec.eps ** (-(N - p) * (p - 1.0) / p - p) * _unit_laplacian(s, N, p)
        target = float(value) ** (ps - 1.0)
        worst = max(worst, abs(lap - target) / target)
    return worst


# ---------------------------------------------------------------------------
# Quadrature of explicit radial profiles
# ---------------------------------------------------------------------------

def _scaled_integral(func: Callable[[float], float], upper: float, breaks: Sequence[float] = ()) -> float:
    """int_0^upper func(s) ds over a geometric partition; upper may be inf."""
    edges = [0.0, 1.0]
    finite_upper = upper if math.isfinite(upper) else 1e4
    edge = 1.0
    while edge * 10.0 < finite_upper:
        edge *= 10.0
        edges.append(edge)
    edges.extend(b for b in breaks if 0.0 < b < finite_upper)
    edges = sorted(set(edges))
    if math.isfinite(upper):
        edges.append(upper)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            total += quad(func, lo, hi, **QUAD_OPTS)[0]
    if not math.isfinite(upper):
        total += quad(func, edges[-1], math.inf, **QUAD_OPTS)[0]
    return total


def bubble_norms(spec: BubbleSpec, params: ProblemParams) -> Tuple[float, float]:
    """(||grad U_eps||_p^p, ||U_eps||_{p*}^{p*}) over R^N."""
    spec = spec.resolved(params)
    N, p = params.N, params.p
    ps = _p_star(N, p)
    omega = sphere_area(N)
    eps = spec.eps

    def gradient(s):
        _, du = talenti_profile(s * eps, spec, N, p)
        return abs(float(du)) ** p * (s * eps) ** (N - 1) * eps

    def critical(s):
        u, _ = talenti_profile(s * eps, spec, N, p)
        return float(u) ** ps * (s * eps) ** (N - 1) * eps

    return omega * _scaled_integral(gradient, math.inf), omega * _scaled_integral(critical, math.inf)


def sobolev_quotient(N: int, p: float, eps: float = 1.0) -> float:
    """||grad U_eps||_p^p / ||U_eps||_{p*}^p."""
    params = _bubble_params(N, p)
    grad_power, crit_power = bubble_norms(BubbleSpec(eps, 0.0), params)
    return grad_power / crit_power ** (p / _p_star(N, p))


def sobolev_constant(N: int, p: float) -> float:
    """Best Sobolev constant S, attained by the bubble at eps = 1.

    Raises:
        NumericalError: If the quotient changes under rescaling of the bubble
    """
    _check_exponents(N, p)
    S = sobolev_quotient(N, p, 1.0)
    for eps in (0.5, 2.0):
        if abs(sobolev_quotient(N, p, eps) / S - 1.0) > 1e-6:
            raise NumericalError("Sobolev quotient is not scale invariant", {'eps': eps, 'S': S})
    return S


def sobolev_constant_p2_closed_form(N: int) -> float:
    """pi N (N-2) (Gamma(N/2)/Gamma(N))^{2/N}."""
    if int(N) != N or N < 3:
        raise ValidationError("The p = 2 Sobolev constant needs N >= 3", {'N': N})
    return math.pi * N * (N - 2) * (gamma_fn(N / 2.0) / gamma_fn(N)) ** (2.0 / N)


def _bubble_params(N: int, p: float) -> ProblemParams:
    """Placeholder parameters carrying only (N, p) for bubble-only computations."""
    _check_exponents(N, p)
    return ProblemParams(N=int(N), p=p, q1=p, q2=_p_star(N, p))


# ---------------------------------------------------------------------------
# Cutoff bubble
# ---------------------------------------------------------------------------

def cutoff_function(r, rho: float):
    """Quintic smoothstep equal to 1 on [0, rho] and 0 beyond 2 rho, with its derivative."""
    x = np.clip((np.asarray(r, dtype=float) - rho) / rho, 0.0, 1.0)
    value = 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)
    slope = -30.0 * x ** 2 * (1.0 - x) ** 2 / rho
    return value, slope


def cutoff_profile(r, spec: BubbleSpec, N: int, p: float):
    """u_eps = phi_eps U_eps and its derivative for a resolved spec."""
    rho = spec.cutoff_radius
    u, du = talenti_profile(r, spec, N, p)
    phi, dphi = cutoff_function(r, rho)
    return phi * u, dphi * u + phi * du


def cutoff_bubble(spec: BubbleSpec, params: ProblemParams, grid: RadialGrid) -> RadialFunction:
    """Samples of the cutoff bubble u_eps on ``grid``.

    Raises:
        ValidationError: If the support [0, 2 eps^alpha] does not fit in the grid
    """
    spec = spec.resolved(params)
    if not 2.0 * spec.cutoff_radius < grid.R:
        raise ValidationError("Cutoff support exceeds the truncation radius",
                              {'support': 2.0 * spec.cutoff_radius, 'R': grid.R})
    value, _ = cutoff_profile(grid.nodes, spec, params.N, params.p)
    value[-1] = 0.0
    return RadialFunction(grid, value)


def cutoff_norm(spec: BubbleSpec, q: float, params: ProblemParams, gradient: bool = False) -> float:
    """||u_eps||_q^q, or ||grad u_eps||_q^q, by quadrature."""
    spec = spec.resolved(params)
    N, p, eps = params.N, params.p, spec.eps
    rho = spec.cutoff_radius

    def integrand(s):
        u, du = cutoff_profile(s * eps, spec, N, p)
        return abs(float(du if gradient else u)) ** q * (s * eps) ** (N - 1) * eps

    return sphere_area(N) * _scaled_integral(integrand, 2.0 * rho / eps, breaks=(rho / eps,))


def _norm_exponent(q: float, params: ProblemParams, alpha: float, gradient: bool) -> Tuple[float, str]:
    """Leading power of eps in the cutoff norm and the branch it comes from."""
    N, p = params.N, params.p
    if gradient:
        threshold = N * (p - 1.0) / (N - 1.0)
        core = N * (p - q) / p
        tail = core + (alpha - 1.0) * (N - q * (N - 1.0) / (p - 1.0))
    else:
        threshold = N * (p - 1.0) / (N - p)
        core = N - (N - p) * q / p
        tail = (N - p) * q / (p * (p - 1.0)) + alpha * (N - (N - p) * q / (p - 1.0))
    if math.isclose(q, threshold, rel_tol=1e-12):
        return core, "log"
    if q > threshold:
        return core, "core"
    return tail, "tail"


@dataclass
class AsymptoticFit:
    """Log-log regression of a cutoff norm against eps.

    ``slope`` is log-corrected on the logarithmic branch, where ``curvature``
    (quadratic coefficient of the uncorrected fit) is bounded away from zero.
    """
    q: float
    gradient: bool
    alpha: float
    branch: str
    slope: float
    predicted: float
    intercept: float
    curvature: float
    eps_values: List[float] = field(default_factory=list)
    norms: List[float] = field(default_factory=list)

    @property
    def relative_error(self) -> float:
        if self.predicted == 0.0:
            return abs(self.slope)
        return abs(self.slope - self.predicted) / abs(self.predicted)

    def to_dict(self) -> Dict[str, Any]:
        data = dict(self.__dict__)
        data['relative_error'] = self.relative_error
        return data


def bubble_asymptotics_fit(eps_values: Sequence[float], q: float, params: ProblemParams,
                           alpha: Optional[float] = None, gradient: bool = False) -> AsymptoticFit:
    """Fit the power of eps in ||u_eps||_q^q (or ||grad u_eps||_q^q).

    Raises:
        InsufficientDataError: For fewer than four scales
        ValidationError: If q is outside the range of the norm table
    """
    eps = np.sort(np.asarray(eps_values, dtype=float))
    if eps.size < 4:
        raise InsufficientDataError("Asymptotic fit needs at least four scales",
                                    {'count': int(eps.size)})
    upper = params.p if gradient else params.p_star
    if not 1.0 <= q <= upper * (1.0 + 1e-12):
        raise ValidationError("Exponent outside the tabulated range", {'q': q, 'upper': upper})
    alpha = default_alpha(params.p, params.N) if alpha is None else alpha
    d = talenti_constant(params.N, params.p)

    norms = np.array([cutoff_norm(BubbleSpec(float(e), alpha, d), q, params, gradient) for e in eps])
    predicted, branch = _norm_exponent(q, params, alpha, gradient)
    x = np.log(eps)
    y = np.log(norms)
    curvature = float(np.polyfit(x, y, 2)[0])
    if branch == "log":
        y = y - np.log(-x)
    slope, intercept = np.polyfit(x, y, 1)
    return AsymptoticFit(q=q, gradient=gradient, alpha=alpha, branch=branch,
                         slope=float(slope), predicted=float(predicted),
                         intercept=float(intercept), curvature=curvature,
                         eps_values=eps.tolist(), norms=norms.tolist())


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg optimizer by shooting
# ---------------------------------------------------------------------------

@dataclass
class GNReport:
    """Optimizer W of the Gagliardo-Nirenberg inequality of exponent q.

    W solves -Delta_p W + W^{p-1} = W^{q-1}; the integrals below are over R^N.

    Attributes:
        q: Lebesgue exponent
        p: Gradient exponent
        profile: W sampled on a uniform grid up to the end of the shooting run
        constant: C_{N,p,q} from the identity linking it to gamma_q and ||W||_q^q
        W0: Shooting parameter W(0)
        residual: Largest relative defect of ||grad W||_p^p = gamma Q and ||W||_p^p = (1-gamma) Q
        gradient_power: ||grad W||_p^p
        mass_power: ||W||_p^p
        q_power: Q = ||W||_q^q
        critical_power: ||W||_{p*}^{p*}
    """
    q: float
    p: float
    profile: RadialFunction
    constant: float
    W0: float
    residual: float
    gradient_power: float
    mass_power: float
    q_power: float
    critical_power: float

    @property
    def quotient(self) -> float:
        """||W||_q / (||grad W||_p^gamma ||W||_p^{1-gamma}) from the shooting integrals."""
        gamma = self.profile.grid.N / self.p - self.profile.grid.N / self.q
        return (self.q_power ** (1.0 / self.q)
                / (self.gradient_power ** (gamma / self.p) * self.mass_power ** ((1.0 - gamma) / self.p)))

    def to_dict(self) -> Dict[str, Any]:
        return {'q': self.q, 'constant': self.constant, 'W0': self.W0,
                'residual': self.residual, 'quotient': self.quotient,
                'gradient_power': self.gradient_power, 'mass_power': self.mass_power,
                'q_power': self.q_power, 'critical_power': self.critical_power}


def gn_quotient(u: RadialFunction, q: float, p: float) -> float:
    """||u||_q / (||grad u||_p^gamma ||u||_p^{1-gamma}) on the grid."""
    N = u.grid.N
    gamma = N / p - N / q
    return lq_norm(u, q) / (grad_lp_norm(u, p) ** gamma * lq_norm(u, p) ** (1.0 - gamma))


def _shoot(W0: float, q: float, N: int, p: float, r_max: float, dense: bool = False):
    """Integrate the radial GN equation from W(0) = W0.

    The state is (W, Z = phi_p(W'), and four running integrals). Returns the
    solution and the outcome: "overshoot" when W reaches zero, otherwise
    "undershoot".
    """
    ps = _p_star(N, p)
    pp = p / (p - 1.0)

    def rhs(r, y):
        W, Z = y[0], y[1]
        aW = abs(W)
        dW = abs(Z) ** (pp - 1.0) * math.copysign(1.0, Z) if Z != 0.0 else 0.0
        dZ = aW ** (p - 1.0) * math.copysign(1.0, W) - aW ** (q - 1.0) * math.copysign(1.0, W) \
            - (N - 1.0) * Z / r
        rw = r ** (N - 1)
        return [dW, dZ, rw * abs(dW) ** p, rw * aW ** p, rw * aW ** q, rw * aW ** ps]

    def crossed_zero(r, y):
        return y[0]
    crossed_zero.terminal = True
    crossed_zero.direction = -1

    def turned(r, y):
        return y[1]
    turned.terminal = True
    turned.direction = 1

    def decayed(r, y):
        return y[0] - SHOOTING_FLOOR * W0
    decayed.terminal = True
    decayed.direction = -1

    f = W0 ** (p - 1.0) - W0 ** (q - 1.0)
    r0 = 1e-6
    W_start = W0 + math.copysign(1.0, f) * abs(f / N) ** (1.0 / (p - 1.0)) * r0 ** pp / pp
    y0 = [W_start, f * r0 / N, 0.0, 0.0, 0.0, 0.0]
    events = [crossed_zero, turned] + ([decayed] if dense else [])
    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=1e-12, atol=1e-16,
                    events=events, dense_output=dense)
    outcome = "overshoot" if sol.t_events[0].size else "undershoot"
    return sol, outcome


def gn_profile_and_constant(q: float, params: ProblemParams, r_max: float = 200.0,
                            grid_n: int = 4000) -> GNReport:
    """Shoot for the positive decaying solution of -Delta_p W + W^{p-1} = W^{q-1}.

    Bisection on W(0) > 1 separates overshoot (W crosses zero) from
    undershoot (W' turns positive) down to a relative width of 1e-13.

    Raises:
        RegimeError: Unless p < q < p*
        ShootingBracketError: If no overshooting W(0) is found
    """
    N, p = params.N, params.p
    ps = _p_star(N, p)
    if not p < q < ps:
        raise RegimeError("Gagliardo-Nirenberg shooting needs p < q < p*", {'q': q, 'p_star': ps})

    lo = 1.0 + 1e-3
    if _shoot(lo, q, N, p, r_max)[1] != "undershoot":
        raise ShootingBracketError("Lower shooting value does not undershoot", {'W0': lo})
    hi = 2.0
    for _ in range(60):
        if _shoot(hi, q, N, p, r_max)[1] == "overshoot":
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ShootingBracketError("No overshooting initial value found", {'q': q, 'last': hi})

    while hi - lo > SHOOTING_TOL * hi:
        mid = 0.5 * (lo + hi)
        if _shoot(mid, q, N, p, r_max)[1] == "overshoot":
            hi = mid
        else:
            lo = mid

    sol, _ = _shoot(lo, q, N, p, r_max, dense=True)
    r_end = float(sol.t[-1])
    omega = sphere_area(N)
    A, P, Q, Ps = (omega * float(v) for v in sol.y[2:, -1])
    gamma = N / p - N / q
    residual = max(abs(A - gamma * Q) / (gamma * Q), abs(P - (1.0 - gamma) * Q) / ((1.0 - gamma) * Q))

    grid = make_grid(r_end, grid_n, N)
    nodes = np.clip(grid.nodes, sol.t[0], r_end)
    values = sol.sol(nodes)[0]
    values[0] = lo
    profile = RadialFunction(grid, values)

    identity = gamma ** (-N / p) * (1.0 - gamma) ** (-q * (1.0 - gamma) / (q - p)) / Q
    constant = identity ** ((q - p) / (p * q))
    report = GNReport(q=q, p=p, profile=profile, constant=constant, W0=lo, residual=residual,
                      gradient_power=A, mass_power=P, q_power=Q, critical_power=Ps)
    return report


# ---------------------------------------------------------------------------
# Bubble path through the plus solution
# ---------------------------------------------------------------------------

@dataclass
class PathCurve:
    """Energy along tau -> W_{eps,tau}, the mass renormalization of u^+ + tau u_eps."""
    spec: BubbleSpec
    tau: NDArray
    energy: NDArray
    sup: float
    tau_at_sup: float
    m_plus: float
    endpoint_defect: float

    def to_csv(self, path) -> Path:
        path = Path(path)
        buffer = io.StringIO()
        np.savetxt(buffer, np.column_stack([self.tau, self.energy]), delimiter=",",
                   header=PATH_CSV_HEADER, comments="", fmt="%.17g")
        path.write_text(buffer.getvalue(), encoding="utf-8")
        return path


def path_grid(u_plus: SolutionRecord, spec: BubbleSpec, points_per_eps: int = 40) -> RadialGrid:
    """Uniform grid over the plus solution's radius with spacing eps / points_per_eps."""
    R = u_plus.grid.R
    n = max(int(math.ceil(R * points_per_eps / spec.eps)), u_plus.grid.n)
    return make_grid(R, n, u_plus.grid.N)


def path_energy(base: RadialFunction, bubble: RadialFunction, tau: float, params: ProblemParams) -> float:
    """Psi_mu(W_{eps,tau}) from the integrals of V = base + tau * bubble.

    W(r) = s^{(N-p)/p} V(s r) with s = ||V||_p / a has mass a and keeps
    ||grad V||_p, so the dilation acts on the Lebesgue terms alone.
    """
    V = base.with_values(base.values + tau * bubble.values)
    N, p = params.N, params.p
    s = lq_norm(V, p) / params.a
    A = grad_lp_power(V, p)
    B = s ** (params.q1 * (N - p) / p - N) * lq_power(V, params.q1)
    C = s ** (params.q2 * (N - p) / p - N) * lq_power(V, params.q2)
    return A / p - params.mu * B / params.q1 - C / params.q2


def mountain_pass_path(u_plus: SolutionRecord, spec: BubbleSpec, params: ProblemParams,
                       tau_values: Optional[Sequence[float]] = None, tau_points: int = 64,
                       points_per_eps: int = 40, logger: Optional[logging.Logger] = None) -> PathCurve:
    """Energy curve of the bubble path and its supremum over tau >= 0.

    Without ``tau_values`` the range is doubled until the energy falls below
    min(m^+, 0), sampled at ``tau_points`` values and the largest sample is
    polished with a bounded scalar search.
    """
    logger = logger or logging.getLogger("PohozaevSuite")
    spec = spec.resolved(params)
    grid = path_grid(u_plus, spec, points_per_eps)
    base = interpolate_profile(u_plus.u, grid)
    bubble = cutoff_bubble(spec, params, grid)

    def energy_at(tau: float) -> float:
        return path_energy(base, bubble, tau, params)

    start = energy_at(0.0)
    if tau_values is None:
        floor = min(start, 0.0)
        tau_max = 1.0
        while energy_at(tau_max) >= floor:
            tau_max *= 2.0
            if tau_max > 1e8:
                raise NumericalError("Bubble path does not escape below the plus level",
                                     {'eps': spec.eps, 'alpha': spec.alpha})
        taus = np.linspace(0.0, tau_max, tau_points)
    else:
        taus = np.asarray(sorted(set(float(t) for t in tau_values) | {0.0}))
    energies = np.array([energy_at(t) for t in taus])

    k = int(np.argmax(energies))
    sup, tau_sup = float(energies[k]), float(taus[k])
    if 0 < k < taus.size - 1:
        res = minimize_scalar(lambda t: -energy_at(t), bounds=(taus[k - 1], taus[k + 1]),
                              method="bounded", options={'xatol': 1e-10 * max(1.0, taus[k])})
        if -res.fun > sup:
            sup, tau_sup = float(-res.fun), float(res.x)

    defect = abs(start - u_plus.energy)
    logger.debug(f"path eps={spec.eps:g} alpha={spec.alpha:.4f} sup={sup:.10g} "
                 f"tau*={tau_sup:.4g} endpoint defect={defect:.2e}")
    return PathCurve(spec=spec, tau=taus, energy=energies, sup=sup, tau_at_sup=tau_sup,
                     m_plus=u_plus.energy, endpoint_defect=defect)


@dataclass
class Certificate:
    """Best margin S^{N/p}/N + m^+ - sup_tau Psi over the (eps, alpha) lattice."""
    sup: float
    m_plus: float
    S_Np: float
    margin: float
    eps: float
    alpha: float
    lattice: List[Dict[str, float]] = field(default_factory=list)
    m_minus: Optional[float] = None
    curve: Optional[PathCurve] = None

    @property
    def bound(self) -> float:
        """m^+ + S^{N/p}/N, the level the path must stay below."""
        return self.sup + self.margin

    def to_dict(self) -> Dict[str, Any]:
        return {'sup': self.sup, 'm_plus': self.m_plus, 'S_Np': self.S_Np,
                'margin': self.margin, 'eps': self.eps, 'alpha': self.alpha,
                'm_minus': self.m_minus, 'lattice': self.lattice}

    def save(self, output_dir, stem: str = "certificate") -> Path:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        path = output_dir / f"{stem}.json"
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        if self.curve is not None:
            self.curve.to_csv(output_dir / f"{stem}_path.csv")
        return path


class CertificateBuilder(BaseProcessor):
    """Searches the (eps, alpha) lattice for a bubble path below m^+ + S^{N/p}/N."""

    def __init__(self, params: ProblemParams, config: Optional[CertificateConfig] = None,
                 logger: Optional[logging.Logger] = None, callback=None):
        super().__init__(config or CertificateConfig(), logger, callback)
        self.params = params.validate()
        if not params.critical:
            raise RegimeError("The bubble certificate needs q2 = p*",
                              {'q2': params.q2, 'p_star': params.p_star})

    def _lattice(self) -> List[BubbleSpec]:
        N, p = self.params.N, self.params.p
        lo, hi = alpha_window(N, p)
        alphas = self.config.alpha_values or (default_alpha(p, N),)
        d = talenti_constant(N, p)
        specs = []
        for alpha in alphas:
            if not (lo <= alpha < hi) or (lo > 0.0 and alpha == lo):
                self.logger.warning(f"Skipping alpha = {alpha}: outside the window [{lo:.4g}, {hi:.4g})")
                continue
            specs.extend(BubbleSpec(eps, alpha, d) for eps in self.config.eps_values)
        if not specs:
            raise ValidationError("No admissible (eps, alpha) pair in the lattice",
                                  {'alpha_values': list(alphas), 'window': [lo, hi]})
        return specs

    def _minus_level(self, minus: Optional[SolutionRecord]) -> Optional[float]:
        if minus is not None:
            return minus.energy
        try:
            return ManifoldSolver(self.params, self.config, self.logger).minimize_mountain().energy
        except NumericalError as e:
            self.logger.warning(f"Mountain-pass level unavailable for the cross-check: {e.message}")
            return None

    @handle_processing_errors
    def certify(self, plus: Optional[SolutionRecord] = None, minus: Optional[SolutionRecord] = None,
                extremal=None, check_minus: bool = True) -> Certificate:
        """Best margin over the lattice.

        Raises:
            ValidationError: If ``extremal`` shows mu >= mu_a*
            CertificateUnavailableError: If no lattice point has a positive margin
        """
        params = self.params
        if extremal is not None and not params.mu < extremal.mu_star:
            raise ValidationError("The certificate needs mu < mu_a*",
                                  {'mu': params.mu, 'mu_star': extremal.mu_star})
        if plus is None:
            self.update_status("Solving the ground state", 5)
            plus = ManifoldSolver(params, self.config, self.logger).minimize_ground()

        S = sobolev_constant(params.N, params.p)
        level = S ** (params.N / params.p) / params.N
        specs = self._lattice()
        curves: List[PathCurve] = []
        with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
            futures = {executor.submit(mountain_pass_path, plus, spec, params, None,
                                       self.config.tau_points, self.config.points_per_eps,
                                       self.logger): spec for spec in specs}
            for done, future in enumerate(as_completed(futures), start=1):
                curves.append(future.result())
                self.update_status(f"Bubble path {done}/{len(specs)}", 10 + 80 * done / len(specs))

        curves.sort(key=lambda c: (c.spec.alpha, c.spec.eps))
        lattice = [{'eps': c.spec.eps, 'alpha': c.spec.alpha, 'sup': c.sup,
                    'margin': level + plus.energy - c.sup} for c in curves]
        best = max(curves, key=lambda c: level + plus.energy - c.sup)
        margin = level + plus.energy - best.sup
        m_minus = self._minus_level(minus) if check_minus else None
        if m_minus is not None and m_minus > best.sup:
            self.logger.warning(f"Mountain-pass level {m_minus:.10g} exceeds the path maximum "
                                f"{best.sup:.10g}")

        certificate = Certificate(sup=best.sup, m_plus=plus.energy, S_Np=S ** (params.N / params.p),
                                  margin=margin, eps=best.spec.eps, alpha=best.spec.alpha,
                                  lattice=lattice, m_minus=m_minus, curve=best)
        if not margin > 0:
            raise CertificateUnavailableError(
                "No lattice point keeps the bubble path below m^+ + S^{N/p}/N",
                {'best_margin': margin, 'lattice': lattice})
        self.update_status(f"Certificate margin {margin:.6g}", 100)
        return certificate

    def process(self, *args, **kwargs) -> Certificate:
        return self.certify(*args, **kwargs)


def strict_inequality_certificate(params: ProblemParams, config: Optional[CertificateConfig] = None,
                                  logger: Optional[logging.Logger] = None, **kwargs) -> Certificate:
    """Certify m^- < m^+ + S^{N/p}/N through the bubble path; see ``CertificateBuilder.certify``."""
    return CertificateBuilder(params, config, logger).certify(**kwargs)
