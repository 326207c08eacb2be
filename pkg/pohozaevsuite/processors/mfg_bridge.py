"""
Stationary mean-field-game fields of a normalized solution.

With H(t) = C_H |t|^{p'} the zero-flux Fokker-Planck equation fixes
v' = -rho phi_p(u'/u) for the density m = u^p, rho = ((p-1)/C_H)^{p-1}, and
the Hamilton-Jacobi equation

    -Delta v + C_H |v'|^{p'} + lambda_mfg = f(m),
    f(m) = -rho (mu m^{(q1-p)/p} + m^{(q2-p)/p})

reproduces the p-Laplacian equation with lambda_mfg = rho * lambda. The
constant is fitted rather than assumed and its ratio to rho * lambda reported.

The Hamilton-Jacobi terms use v' at the cell midpoints, built from the same
conservative flux as the discrete Euler-Lagrange equation, and -Delta v is the
flux difference over the trapezoidal node weights of that equation.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Dict, Any
import io
import json
import logging

import numpy as np
from numpy.typing import NDArray

from pohozaevsuite.core.radial_core import RadialFunction, RadialGrid, lq_power, p_power, midpoint_flux
from pohozaevsuite.core.scaling_fibering import ProblemParams
from pohozaevsuite.processors.manifold_solver import SolutionRecord
from pohozaevsuite.utils.errors import ValidationError, DivisionHazardError

MFG_CSV_HEADER = "r,m,v,dv,residual_hjb"
TRUST_CUTOFF = 1e-14
CONSTANCY_CUTOFF = 1e-6


@dataclass
class MfgFields:
    """Density, value function and ergodic constant built from a solution.

    Attributes:
        record: Source solution
        C_H: Hamiltonian coefficient
        rho: ((p-1)/C_H)^{p-1}
        m: Density u^p
        dv: v' at the nodes, held at its last trusted value beyond the trusted region
        dv_mid: v' at the cell midpoints, from the conservative flux
        v: Value function with v(0) = 0
        lam_mfg: Density-weighted least-squares ergodic constant over the trusted region
        mass: Integral of m
        trusted: Number of leading nodes with m > 1e-14 m(0)
    """
    record: SolutionRecord
    C_H: float
    rho: float
    m: RadialFunction
    dv: NDArray
    dv_mid: NDArray
    v: NDArray
    lam_mfg: float
    mass: float
    trusted: int

    @property
    def params(self) -> ProblemParams:
        return self.record.params

    @property
    def p_prime(self) -> float:
        return self.params.p / (self.params.p - 1.0)

    @property
    def lambda_ratio(self) -> float:
        """lambda_mfg / (rho * lambda); 1 for the sign convention of the reduction."""
        return self.lam_mfg / (self.rho * self.record.lam)

    def recover_profile(self) -> RadialFunction:
        return self.m.with_values(np.abs(self.m.values) ** (1.0 / self.params.p))


def coupling(m: NDArray, params: ProblemParams, rho: float) -> NDArray:
    """f(m) = -rho (mu m^{(q1-p)/p} + m^{(q2-p)/p})."""
    p = params.p
    m = np.abs(m)
    return -rho * (params.mu * m ** ((params.q1 - p) / p) + m ** ((params.q2 - p) / p))


def _trusted_count(u: NDArray, p: float) -> int:
    """Leading nodes with u^p > TRUST_CUTOFF u(0)^p.

    Raises:
        DivisionHazardError: If u(0) <= 0, or if u drops to the cutoff before a
            node where u^p still exceeds CONSTANCY_CUTOFF u(0)^p
    """
    if not u[0] > 0:
        raise DivisionHazardError("Density vanishes at the origin", {'u0': float(u[0])})
    v = u[:-1]
    low = np.nonzero(v <= TRUST_CUTOFF ** (1.0 / p) * u[0])[0]
    if not low.size:
        return v.size
    core = np.nonzero(v > CONSTANCY_CUTOFF ** (1.0 / p) * u[0])[0]
    if core[-1] > low[0]:
        raise DivisionHazardError("Density touches zero inside the support",
                                  {'radius_index': int(low[0]), 'support_index': int(core[-1])})
    return int(low[0])


def _laplacian(dv_mid: NDArray, grid: RadialGrid) -> NDArray:
    """Delta v as the flux difference of |S^{N-1}| r^{N-1} v' over the node weights.

    The origin uses the ball of radius dr/2; the last node repeats its neighbour.
    """
    flux = grid.mid_weights / grid.h * dv_mid
    out = np.empty(grid.n + 1)
    out[0] = flux[0] / grid.dual_volumes[0]
    out[1:-1] = np.diff(flux) / grid.weights[1:-1]
    out[-1] = out[-2]
    return out


def _hamiltonian(dv_mid: NDArray, C_H: float, p: float) -> NDArray:
    """C_H |v'|^{p'} at the nodes, the mean of the two adjacent midpoint values."""
    cell = C_H * np.abs(dv_mid) ** (p / (p - 1.0))
    out = np.empty(cell.size + 1)
    out[0] = cell[0]
    out[1:-1] = 0.5 * (cell[:-1] + cell[1:])
    out[-1] = cell[-1]
    return out


def _hjb_terms(dv_mid: NDArray, grid: RadialGrid, C_H: float, p: float) -> NDArray:
    return -_laplacian(dv_mid, grid) + _hamiltonian(dv_mid, C_H, p)


def to_mfg(record: SolutionRecord, C_H: float = 1.0,
           params: Optional[ProblemParams] = None) -> MfgFields:
    """Build (m, v, lambda_mfg) from a converged solution.

    Args:
        record: Solution of the p-Laplacian equation
        C_H: Hamiltonian coefficient
        params: Problem data; must agree with the record when given

    Raises:
        ValidationError: If C_H is not positive or params disagree with the record
        DivisionHazardError: If the density vanishes inside its support
    """
    if not C_H > 0:
        raise ValidationError("Hamiltonian coefficient C_H must be positive", {'C_H': C_H})
    if params is not None and params != record.params:
        raise ValidationError("Problem data disagree with the solution record",
                              {'given': params.to_dict(), 'record': record.params.to_dict()})
    params = record.params
    p = params.p
    u = record.u
    grid = u.grid
    rho = ((p - 1.0) / C_H) ** (p - 1.0)

    trusted = _trusted_count(u.values, p)
    du = u.derivative
    dv = np.zeros_like(du)
    dv[:trusted] = -rho * p_power(du[:trusted] / u.values[:trusted], p)
    dv[0] = 0.0
    dv[trusted:] = dv[trusted - 1]

    # g = |u'|^{p-2} u' at the midpoints, as in the discrete Euler-Lagrange equation
    g = midpoint_flux(u, p) * grid.h / grid.mid_weights
    cells = max(trusted - 1, 1)
    u_mid = 0.5 * (u.values[:cells] + u.values[1:cells + 1])
    dv_mid = np.empty(grid.n)
    dv_mid[:cells] = -rho * g[:cells] / u_mid ** (p - 1.0)
    dv_mid[cells:] = dv_mid[cells - 1]
    v = np.concatenate(([0.0], np.cumsum(grid.h * dv_mid)))

    m_values = np.abs(u.values) ** p
    # least squares weighted by the density over the trusted interior nodes
    inner = slice(1, max(trusted - 1, 2))
    pointwise = coupling(m_values, params, rho) - _hjb_terms(dv_mid, grid, C_H, p)
    density = grid.weights[inner] * m_values[inner]
    lam_mfg = float(np.sum(density * pointwise[inner]) / np.sum(density))
    return MfgFields(record=record, C_H=float(C_H), rho=rho, m=u.with_values(m_values), dv=dv,
                     dv_mid=dv_mid, v=v, lam_mfg=lam_mfg, mass=lq_power(u, p), trusted=trusted)


@dataclass
class HjbResidual:
    """Pointwise Hamilton-Jacobi residual on the trusted region (NaN elsewhere)."""
    pointwise: NDArray
    sup_relative: float
    constancy: float

    def to_dict(self) -> Dict[str, float]:
        return {'sup_relative': self.sup_relative, 'constancy': self.constancy}


def hjb_residual(fields: MfgFields) -> HjbResidual:
    """-Delta v + C_H |v'|^{p'} + lambda_mfg - f(m) on the trusted region.

    ``sup_relative`` divides by |lambda_mfg| (1 when it vanishes); ``constancy``
    is the standard deviation of the pointwise constant over m > 1e-6 m(0),
    relative to |lambda_mfg|.
    """
    u = fields.record.u
    p = fields.params.p
    m = fields.m.values
    f = coupling(m, fields.params, fields.rho)
    residual = _hjb_terms(fields.dv_mid, u.grid, fields.C_H, p) + fields.lam_mfg - f
    if not np.any(m):
        residual[:] = 0.0
        return HjbResidual(residual, 0.0, 0.0)

    out = np.full_like(residual, np.nan)
    inner = slice(1, max(fields.trusted - 1, 1))
    out[inner] = residual[inner]
    scale = abs(fields.lam_mfg) or 1.0
    core = (m > CONSTANCY_CUTOFF * m[0])
    core[0] = False
    constancy = float(np.std(residual[core])) / scale if np.any(core) else 0.0
    finite = out[np.isfinite(out)]
    sup = float(np.max(np.abs(finite))) / scale if finite.size else 0.0
    return HjbResidual(out, sup, constancy)


def fokker_planck_flux(fields: MfgFields) -> NDArray:
    """r^{N-1} (m' + p' C_H |v'|^{p'-2} v' m); vanishes for constructed fields."""
    u = fields.record.u
    grid = u.grid
    p = fields.params.p
    pp = p / (p - 1.0)
    dm = p * np.abs(u.values) ** (p - 1.0) * u.derivative
    drift = pp * fields.C_H * p_power(fields.dv, pp) * fields.m.values
    return grid.nodes ** (grid.N - 1) * (dm + drift)


def mfg_summary(fields: MfgFields, residual: Optional[HjbResidual] = None) -> Dict[str, Any]:
    residual = residual or hjb_residual(fields)
    flux = fokker_planck_flux(fields)
    params = fields.params
    return {
        'lambda_mfg': fields.lam_mfg,
        'lambda_ratio': fields.lambda_ratio,
        'rho': fields.rho,
        'C_H': fields.C_H,
        'p_prime': fields.p_prime,
        'mass': fields.mass,
        'mass_error': abs(fields.mass - params.a ** params.p) / params.a ** params.p,
        'trusted_radius': float(fields.m.grid.nodes[fields.trusted - 1]),
        'residuals': {
            'hjb_sup': residual.sup_relative,
            'hjb_constancy': residual.constancy,
            'fokker_planck_max': float(np.max(np.abs(flux))),
        },
    }


def write_mfg(fields: MfgFields, output_dir, stem: str = "mfg",
              logger: Optional[logging.Logger] = None) -> Path:
    """Write ``<stem>.csv`` (r,m,v,dv,residual_hjb) and ``<stem>.json``; returns the JSON path."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    residual = hjb_residual(fields)
    data = np.column_stack([fields.m.grid.nodes, fields.m.values, fields.v, fields.dv,
                            residual.pointwise])
    buffer = io.StringIO()
    np.savetxt(buffer, data, delimiter=",", header=MFG_CSV_HEADER, comments="", fmt="%.17g")
    (output_dir / f"{stem}.csv").write_text(buffer.getvalue(), encoding="utf-8")
    path = output_dir / f"{stem}.json"
    path.write_text(json.dumps(mfg_summary(fields, residual), indent=2), encoding="utf-8")
    if logger:
        logger.info(f"MFG fields written to {path}")
    return path
