"""
Morse index of plus and minus solutions through the weighted eigenproblem

    L x = sigma w x,   L = -div((p-1)|u'|^{p-2} grad .) - lambda (p-1)|u|^{p-2},
    w = mu (q1-1) u^{q1-2} + (q2-1) u^{q2-2},

restricted to radial functions. The index counts sigma < 1. The unknowns live
on r_1, ..., r_{m-1}; the origin is condensed or pinned. The weight is
diagonal in the lumped discretization, so the pencil is reduced to a
tridiagonal symmetric matrix B^{-1/2} A B^{-1/2} and the lowest eigenvalues
come from a banded solver.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Optional, List, Dict, Any
import logging

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eig_banded, eigh, LinAlgError

from pohozaevsuite.core.radial_core import RadialFunction
from pohozaevsuite.processors.base_processor import BaseProcessor
from pohozaevsuite.processors.manifold_solver import SolutionRecord
from pohozaevsuite.utils.config import SolverConfig
from pohozaevsuite.utils.errors import (
    UnsupportedRegimeError, ValidationError, SpectralError, InsufficientTailError,
    handle_processing_errors,
)

ACTIVE_CUTOFF = 1e-10
DEFAULT_EIGEN_COUNT = 6
MAX_SECTOR = 12
# Translation modes sit at sigma = 1 up to the discretization error
SECTOR_MARGINAL_TOL = 1e-3


@dataclass
class LinearizedOperator:
    """Lumped radial discretization of the linearized form on the active nodes.

    The unknowns are x_j at the nodes r_1, ..., r_{m-1}. The form is
    sum_j stiffness_j (x_{j+1} - x_j)^2 + sum_j potential_j x_j^2,
    with x vanishing at the first inactive node r_m; the weight form is
    sum_j weight_j x_j^2.

    Attributes:
        record: Solution the operator is linearized at
        stiffness: Interval coefficients, one per active node
        potential: Nodal zeroth-order coefficient (cell-weighted)
        weight: Nodal weight (cell-weighted), positive
        sector: Angular momentum l; l > 0 adds l(l+N-2)/r^2 and pins x_0 = 0
    """
    record: SolutionRecord
    stiffness: NDArray
    potential: NDArray
    weight: NDArray
    sector: int = 0

    @property
    def size(self) -> int:
        return int(self.weight.size)

    def banded(self) -> NDArray:
        """Upper banded storage of A for ``eig_banded``."""
        m = self.size
        diag = self.potential + self.stiffness
        diag[1:] += self.stiffness[:-1]
        ab = np.zeros((2, m))
        ab[1] = diag
        ab[0, 1:] = -self.stiffness[:-1]
        return ab

    def dense(self) -> NDArray:
        ab = self.banded()
        return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)

    def quadratic_form(self, x: NDArray) -> float:
        """x^T A x evaluated directly from the interval and nodal sums."""
        x = np.asarray(x, dtype=float)
        jumps = np.diff(np.append(x, 0.0))
        return float(np.sum(self.stiffness * jumps ** 2) + np.sum(self.potential * x ** 2))

    def weight_form(self, x: NDArray) -> float:
        return float(np.sum(self.weight * np.asarray(x, dtype=float) ** 2))


def _active_count(u: RadialFunction) -> int:
    v = u.values[:-1]
    inactive = np.nonzero(v <= ACTIVE_CUTOFF * v[0])[0]
    return int(inactive[0]) if inactive.size else v.size


def assemble_linearized(record: SolutionRecord, sector: int = 0) -> LinearizedOperator:
    """Assemble the linearized form at ``record`` on the nodes r_1, ..., r_{m-1}.

    For radial test functions the term (p-2)|u'|^{p-4}(u' w')^2 merges with the
    isotropic part into the coefficient (p-1)|u'|^{p-2}. In the radial sector
    the origin is condensed into node 1 (x_0 = x_1, as the solver imposes
    u_0 = u_1), so the trapezoidal weights, which vanish at r = 0, carry the
    nodal terms. For p > 2 the interval [0, h] has zero stiffness at such a
    profile, and a free origin node would add a spurious eigenvalue. Angular
    sectors pin x_0 = 0 instead.

    Raises:
        UnsupportedRegimeError: If p < 2
        ValidationError: If lambda >= 0, the profile is not positive or an
            angular sector is requested for p != 2
        SpectralError: If the weight is not positive on the active nodes
    """
    params = record.params
    p = params.p
    if p < 2.0:
        raise UnsupportedRegimeError("The linearized operator needs p >= 2", {'p': p})
    if not record.lam < 0:
        raise ValidationError("Linearization needs lambda < 0", {'lambda': record.lam})
    if sector and p != 2.0:
        raise ValidationError("Angular sectors separate only for p = 2", {'p': p, 'sector': sector})

    u = record.u
    grid = u.grid
    if not u.values[0] > 0:
        raise ValidationError("Linearization needs a positive profile", {'u0': float(u.values[0])})
    m = _active_count(u)
    if m < 3:
        raise SpectralError("Fewer than three active nodes", {'active': m})
    v = u.values[1:m]
    w = grid.weights[1:m]
    interval = grid.mid_weights[:m] * (p - 1.0) * np.abs(u.differences[:m]) ** (p - 2.0) / grid.h ** 2

    stiffness = interval[1:].copy()
    potential = -record.lam * (p - 1.0) * w * v ** (p - 2.0)
    weight = w * (params.mu * (params.q1 - 1.0) * v ** (params.q1 - 2.0)
                  + (params.q2 - 1.0) * v ** (params.q2 - 2.0))

    if sector:
        r = grid.nodes[1:m]
        potential = potential + w * sector * (sector + grid.N - 2) / r ** 2
        # the interval [0, h] couples node 1 to the pinned origin
        potential[0] += interval[0]

    if not np.all(weight > 0):
        raise SpectralError("Weight form is not positive on the active nodes",
                            {'min_weight': float(np.min(weight))})
    return LinearizedOperator(record=record, stiffness=stiffness, potential=potential,
                              weight=weight, sector=int(sector))


def weighted_eigenvalues(op: LinearizedOperator, k: int = DEFAULT_EIGEN_COUNT):
    """Lowest k eigenpairs of A x = sigma B x.

    Returns:
        (sigmas, vectors) with vectors B-orthonormal in the columns

    Raises:
        SpectralError: If the banded solver fails
    """
    k = max(1, min(int(k), op.size))
    scale = 1.0 / np.sqrt(op.weight)
    ab = op.banded()
    ab[1] *= scale * scale
    ab[0, 1:] *= scale[:-1] * scale[1:]
    try:
        sigmas, vectors = eig_banded(ab, lower=False, select='i', select_range=(0, k - 1))
    except (LinAlgError, ValueError) as e:
        raise SpectralError(f"Banded eigensolver failed: {e}",
                            {'size': op.size, 'min_weight': float(np.min(op.weight)),
                             'max_diag': float(np.max(np.abs(ab[1])))})
    if not np.all(np.isfinite(sigmas)):
        raise SpectralError("Non-finite eigenvalues", {'sector': op.sector})
    return sigmas, vectors * scale[:, None]


def harmonic_multiplicity(sector: int, N: int) -> int:
    """Dimension of the spherical harmonics of degree ``sector`` in R^N."""
    if sector == 0:
        return 1
    return comb(sector + N - 1, N - 1) - (comb(sector + N - 3, N - 1) if sector >= 2 else 0)


@dataclass
class MorseReport:
    """Eigenvalues below and around 1 of the weighted linearized problem.

    ``marginal`` counts eigenvalues within ``eig_tol`` of 1 (translations in the
    l = 1 sector); they are not part of the index.
    """
    branch: str
    sigmas: List[float]
    index_radial: int
    marginal: int = 0
    eig_tol: float = 1e-6
    index_full: Optional[int] = None
    sectors: Dict[int, List[float]] = field(default_factory=dict)
    rayleigh_defect: float = 0.0
    decay: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'branch': self.branch,
            'sigmas': [float(s) for s in self.sigmas],
            'index_radial': self.index_radial,
            'marginal': self.marginal,
            'index_full': self.index_full,
            'decay_rate': self.decay.get('rate') if self.decay else None,
        }
        if self.sectors:
            data['sectors'] = {str(k): [float(s) for s in v] for k, v in self.sectors.items()}
        if self.decay:
            data['decay'] = dict(self.decay)
        return data


def _count(sigmas: NDArray, eig_tol: float):
    below = int(np.sum(sigmas < 1.0 - eig_tol))
    marginal = int(np.sum(np.abs(sigmas - 1.0) <= eig_tol))
    return below, marginal


def rayleigh_defect(op: LinearizedOperator, sigmas: NDArray, vectors: NDArray) -> float:
    worst = 0.0
    for sigma, x in zip(sigmas, vectors.T):
        worst = max(worst, abs(op.quadratic_form(x) / op.weight_form(x) - sigma))
    return worst


def morse_index_radial(record: SolutionRecord, k: int = DEFAULT_EIGEN_COUNT,
                       eig_tol: float = 1e-6) -> MorseReport:
    """Radial Morse index: number of weighted eigenvalues below 1 - eig_tol."""
    op = assemble_linearized(record)
    sigmas, vectors = weighted_eigenvalues(op, k)
    index, marginal = _count(sigmas, eig_tol)
    if index == len(sigmas):
        sigmas, vectors = weighted_eigenvalues(op, min(4 * len(sigmas), op.size))
        index, marginal = _count(sigmas, eig_tol)
    return MorseReport(branch=record.branch, sigmas=sigmas.tolist(), index_radial=index,
                       marginal=marginal, eig_tol=eig_tol,
                       rayleigh_defect=rayleigh_defect(op, sigmas, vectors))


def morse_index_full(record: SolutionRecord, k: int = DEFAULT_EIGEN_COUNT, eig_tol: float = 1e-6,
                     max_workers: int = 1, max_sector: int = MAX_SECTOR) -> MorseReport:
    """Full Morse index for p = 2 by summing angular sectors with their multiplicities.

    Sectors are scanned until one has no eigenvalue below 1 + eig_tol; the
    centrifugal term makes every later sector positive as well.

    Raises:
        ValidationError: If p != 2
    """
    if record.params.p != 2.0:
        raise ValidationError("The full index is computed only for p = 2", {'p': record.params.p})
    report = morse_index_radial(record, k, eig_tol)
    N = record.params.N
    sectors = {0: report.sigmas}
    total, marginal = report.index_radial, report.marginal

    def solve(sector: int) -> NDArray:
        return weighted_eigenvalues(assemble_linearized(record, sector), k)[0]

    sector = 1
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        while sector <= max_sector:
            batch = list(range(sector, min(sector + max(1, max_workers), max_sector + 1)))
            results = list(executor.map(solve, batch))
            done = False
            for ell, sigmas in zip(batch, results):
                sectors[ell] = sigmas.tolist()
                below, marg = _count(sigmas, max(eig_tol, SECTOR_MARGINAL_TOL))
                mult = harmonic_multiplicity(ell, N)
                total += mult * below
                marginal += mult * marg
                if sigmas[0] >= 1.0 + max(eig_tol, SECTOR_MARGINAL_TOL):
                    done = True
                    break
            if done:
                break
            sector = batch[-1] + 1
    report.index_full = total
    report.marginal = marginal
    report.sectors = sectors
    return report


def negative_directions(record: SolutionRecord, op: Optional[LinearizedOperator] = None) -> Dict[str, Any]:
    """Relative values of the form A - B along u, the dilation (N/p) u + r u' and their span.

    The profile is a negative direction on both branches. Along the dilation
    the form has the sign of Phi''(1): positive at plus solutions, negative at
    minus solutions. ``span_eigenvalues`` are the eigenvalues of the 2x2 form
    on span{u, dilation} relative to the weight Gram matrix; their negative
    count is a lower bound of the radial index.
    """
    op = op or assemble_linearized(record)
    u = record.u
    nodes = slice(1, 1 + op.size)
    dilation = (record.params.N / record.params.p) * u.values + u.grid.nodes * u.derivative
    basis = [u.values[nodes], dilation[nodes]]

    def form(x: NDArray, y: NDArray) -> float:
        return 0.25 * (op.quadratic_form(x + y) - op.quadratic_form(x - y)
                       - op.weight_form(x + y) + op.weight_form(x - y))

    def gram(x: NDArray, y: NDArray) -> float:
        return float(np.sum(op.weight * x * y))

    H = np.array([[form(x, y) for y in basis] for x in basis])
    G = np.array([[gram(x, y) for y in basis] for x in basis])
    span = eigh(H, G, eigvals_only=True)
    return {'profile': H[0, 0] / G[0, 0], 'dilation': H[1, 1] / G[1, 1],
            'span_eigenvalues': span.tolist(), 'span_negative': int(np.sum(span < 0.0))}


dilation_direction_check = negative_directions


def decay_diagnostics(record: SolutionRecord, head: float = 1e-2, floor: float = 1e-13,
                      outer: float = 0.8) -> Dict[str, Any]:
    """Fit the exponential decay rate of the tail.

    Regresses log u + ((N-1)/(p(p-1))) log r on r over the nodes with
    floor < u/u(0) < head and r < outer * R, and compares the rate with
    (|lambda|/(p-1))^{1/p}.

    Raises:
        InsufficientTailError: If fewer than ten tail nodes remain above the floor
    """
    params = record.params
    u, grid = record.u, record.grid
    N, p = params.N, params.p
    ratio = u.values / u.values[0]
    mask = (ratio < head) & (ratio > floor) & (grid.nodes < outer * grid.R) & (grid.nodes > 0)
    if int(np.sum(mask)) < 10:
        raise InsufficientTailError("Too few resolved tail nodes for the decay fit",
                                    {'nodes': int(np.sum(mask)), 'R': grid.R})
    r = grid.nodes[mask]
    y = np.log(u.values[mask]) + (N - 1.0) / (p * (p - 1.0)) * np.log(r)
    slope, intercept = np.polyfit(r, y, 1)
    rate = -float(slope)
    predicted = (abs(record.lam) / (p - 1.0)) ** (1.0 / p)
    return {'rate': rate, 'predicted': predicted,
            'relative_error': abs(rate - predicted) / predicted,
            'intercept': float(intercept), 'nodes': int(r.size),
            'convention': '(|lambda|/(p-1))^(1/p)'}


class MorseAnalyzer(BaseProcessor):
    """Spectral diagnostics of a converged solution record."""

    def __init__(self, config: Optional[SolverConfig] = None,
                 logger: Optional[logging.Logger] = None, callback=None):
        super().__init__(config, logger, callback)

    @handle_processing_errors
    def analyze(self, record: SolutionRecord, full: bool = False,
                k: int = DEFAULT_EIGEN_COUNT) -> MorseReport:
        """Morse report with the decay fit attached when the tail is resolved."""
        if not record.converged:
            self.logger.warning("Morse index requested for an unconverged record")
        tol = self.config.eig_tol
        if full:
            report = morse_index_full(record, k, tol, self.config.max_workers)
        else:
            report = morse_index_radial(record, k, tol)
        try:
            report.decay = decay_diagnostics(record)
        except InsufficientTailError as e:
            self.logger.info(f"Decay fit skipped: {e.message}")
        self.update_status(f"{record.branch} branch: radial index {report.index_radial}", 100)
        return report

    def process(self, record: SolutionRecord, **kwargs) -> MorseReport:
        return self.analyze(record, **kwargs)
