"""
Radial discretization of functions on R^N.

A radial profile u(|x|) is sampled on the uniform grid 0 = r_0 < ... < r_n = R.
Integrals against dx are evaluated with trapezoidal weights carrying the
surface measure of the unit sphere, w_i ~ |S^{N-1}| r_i^{N-1} dr.

Gradient integrals use the difference quotient (u_{i+1} - u_i)/dr, which is the
centered difference at the cell midpoint r_{i+1/2}, with midpoint weights
|S^{N-1}| r_{i+1/2}^{N-1} dr. The same staggered form gives the discrete
p-Laplacian in conservative (flux) form, so that

    sum_i w_i u_i (-Delta_p u)_i = ||grad u||_p^p

holds exactly for profiles vanishing at r = R, with the exact dual-cell
volumes in place of the trapezoidal weights.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union
import io
import math

import numpy as np
from numpy.typing import NDArray
from scipy.special import gamma

from pohozaevsuite.utils.errors import ValidationError, FileError

CSV_HEADER = "r,u,du"


def sphere_area(N: int) -> float:
    """Surface measure of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / gamma(N / 2.0)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Uniform radial grid with measure-carrying quadrature weights.

    Attributes:
        R: Truncation radius
        n: Number of intervals (n + 1 nodes)
        N: Space dimension
        nodes: r_0 = 0, ..., r_n = R
        weights: Trapezoidal weights of |S^{N-1}| r^{N-1} dr; zero at r = 0
        midpoints: r_{i+1/2}, i = 0..n-1
        mid_weights: Midpoint weights |S^{N-1}| r_{i+1/2}^{N-1} dr
        cell_weights: ``weights`` with the origin node replaced by the volume of
            the ball of radius dr/2 (finite-volume cell), strictly positive
        dual_volumes: Exact volumes of the shells r_i - dr/2 < |x| < r_i + dr/2,
            the ball of radius dr/2 at the origin
    """
    R: float
    n: int
    N: int
    nodes: NDArray = field(repr=False)
    weights: NDArray = field(repr=False)
    midpoints: NDArray = field(repr=False)
    mid_weights: NDArray = field(repr=False)
    cell_weights: NDArray = field(repr=False)
    dual_volumes: NDArray = field(repr=False)

    @property
    def h(self) -> float:
        return self.R / self.n

    @property
    def omega(self) -> float:
        return sphere_area(self.N)

    def ball_volume(self) -> float:
        """Exact volume of B_R."""
        return self.omega * self.R ** self.N / self.N

    def refined(self, factor: int = 2) -> "RadialGrid":
        return make_grid(self.R, self.n * factor, self.N)

    def spec(self) -> dict:
        return {'R': float(self.R), 'n': int(self.n), 'N': int(self.N)}


def make_grid(R: float, n: int, N: int) -> RadialGrid:
    """Build the uniform grid on [0, R] with n intervals in dimension N.

    Raises:
        ValidationError: If R is not positive, n < 64 or N < 2
    """
    if not (R > 0 and math.isfinite(R)):
        raise ValidationError(f"Truncation radius must be positive, got {R}")
    if int(n) != n or n < 64:
        raise ValidationError(f"Grid needs at least 64 intervals, got {n}")
    if int(N) != N or N < 2:
        raise ValidationError(f"Dimension must be an integer >= 2, got {N}")
    n, N = int(n), int(N)

    nodes = np.linspace(0.0, R, n + 1)
    nodes[-1] = R
    h = R / n
    omega = sphere_area(N)

    weights = omega * nodes ** (N - 1) * h
    weights[0] = 0.0
    weights[-1] *= 0.5

    midpoints = 0.5 * (nodes[:-1] + nodes[1:])
    mid_weights = omega * midpoints ** (N - 1) * h

    cell_weights = weights.copy()
    cell_weights[0] = omega * (0.5 * h) ** N / N

    outer = nodes + 0.5 * h
    inner = np.maximum(nodes - 0.5 * h, 0.0)
    dual_volumes = omega * (outer ** N - inner ** N) / N

    for arr in (nodes, weights, midpoints, mid_weights, cell_weights, dual_volumes):
        arr.setflags(write=False)
    return RadialGrid(R=float(R), n=n, N=N, nodes=nodes, weights=weights,
                      midpoints=midpoints, mid_weights=mid_weights,
                      cell_weights=cell_weights, dual_volumes=dual_volumes)


@dataclass(frozen=True, eq=False)
class RadialFunction:
    """Samples u_i = u(r_i) of a radial profile on a RadialGrid."""
    grid: RadialGrid
    values: NDArray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.nodes.shape:
            raise ValidationError(
                f"Profile has {values.size} samples, grid has {self.grid.nodes.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ValidationError("Profile samples must be finite")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @classmethod
    def from_callable(cls, grid: RadialGrid, func) -> "RadialFunction":
        return cls(grid, func(grid.nodes))

    @property
    def derivative(self) -> NDArray:
        """Centered differences u'_i, second-order one-sided at r = R, zero at r = 0."""
        cached = self.__dict__.get('_derivative')
        if cached is None:
            cached = np.gradient(self.values, self.grid.h, edge_order=2)
            cached[0] = 0.0
            cached.setflags(write=False)
            object.__setattr__(self, '_derivative', cached)
        return cached

    @property
    def differences(self) -> NDArray:
        """Midpoint difference quotients (u_{i+1} - u_i)/dr."""
        return np.diff(self.values) / self.grid.h

    def with_values(self, values) -> "RadialFunction":
        return RadialFunction(self.grid, values)

    def scaled(self, factor: float) -> "RadialFunction":
        return RadialFunction(self.grid, factor * self.values)

    def is_zero(self) -> bool:
        return not np.any(self.values)


def lq_power(u: RadialFunction, q: float) -> float:
    """sum_i w_i |u_i|^q, the discrete ||u||_q^q."""
    if not q > 0:
        raise ValidationError(f"Lebesgue exponent must be positive, got {q}")
    return float(np.dot(u.grid.weights, np.abs(u.values) ** q))


def lq_norm(u: RadialFunction, q: float) -> float:
    """Discrete L^q norm (sum_i w_i |u_i|^q)^{1/q}.

    Raises:
        ValidationError: If q <= 0
    """
    return lq_power(u, q) ** (1.0 / q)


def grad_lp_power(u: RadialFunction, p: float) -> float:
    """Discrete ||grad u||_p^p with midpoint differences and weights."""
    if not p > 1:
        raise ValidationError(f"Gradient exponent must exceed 1, got {p}")
    return float(np.dot(u.grid.mid_weights, np.abs(u.differences) ** p))


def grad_lp_norm(u: RadialFunction, p: float) -> float:
    """Discrete ||grad u||_p.

    Raises:
        ValidationError: If p <= 1
    """
    return grad_lp_power(u, p) ** (1.0 / p)


def p_power(t: NDArray, p: float, delta: float = 0.0) -> NDArray:
    """|t|^{p-2} t, regularized as (t^2 + delta^2)^{(p-2)/2} t when delta > 0."""
    if delta > 0.0:
        return (t * t + delta * delta) ** ((p - 2.0) / 2.0) * t
    return np.abs(t) ** (p - 1.0) * np.sign(t)


def p_power_derivative(t: NDArray, p: float, delta: float = 0.0) -> NDArray:
    """d/dt of ``p_power``."""
    if delta > 0.0:
        s = t * t + delta * delta
        return s ** ((p - 4.0) / 2.0) * ((p - 1.0) * t * t + delta * delta)
    return (p - 1.0) * np.abs(t) ** (p - 2.0)


def regularization(differences: NDArray, p: float) -> float:
    """Regularization scale for the diffusivity |u'|^{p-2}; nonzero only for p < 2."""
    if p >= 2.0:
        return 0.0
    scale = float(np.max(np.abs(differences))) if differences.size else 0.0
    return 1e-10 * scale if scale > 0 else 1e-150


def midpoint_flux(u: RadialFunction, p: float) -> NDArray:
    """Surface-weighted flux |S^{N-1}| r^{N-1} |u'|^{p-2} u' at the cell midpoints."""
    d = u.differences
    return u.grid.mid_weights / u.grid.h * p_power(d, p, regularization(d, p))


def stiffness_gradient(u: RadialFunction, p: float) -> NDArray:
    """Gradient of (1/p) ||grad u||_p^p with respect to the nodal values."""
    flux = midpoint_flux(u, p)
    grad = np.zeros_like(u.values)
    grad[:-1] -= flux
    grad[1:] += flux
    return grad


def p_laplacian_apply(u: RadialFunction, p: float) -> RadialFunction:
    """Samples of -Delta_p u = -r^{1-N} (r^{N-1} |u'|^{p-2} u')'.

    Conservative flux difference divided by the exact dual-cell volume, so the
    result is second order up to the origin, where the cell is the ball of
    radius dr/2. The last node uses a linearly extrapolated outer flux.

    Raises:
        ValidationError: If p <= 1
    """
    if not p > 1:
        raise ValidationError(f"p-Laplacian exponent must exceed 1, got {p}")
    grid = u.grid
    flux = midpoint_flux(u, p)
    outer = np.empty(grid.n + 1)
    outer[:-1] = flux
    outer[-1] = 2.0 * flux[-1] - flux[-2]
    inner = np.zeros(grid.n + 1)
    inner[1:] = flux

    return RadialFunction(grid, -(outer - inner) / grid.dual_volumes)


def interpolate_profile(u: RadialFunction, grid: RadialGrid) -> RadialFunction:
    """Monotone cubic transfer of u onto another grid, zero beyond the source radius."""
    from scipy.interpolate import PchipInterpolator

    interp = PchipInterpolator(u.grid.nodes, u.values, extrapolate=False)
    values = interp(grid.nodes)
    return RadialFunction(grid, np.nan_to_num(values, nan=0.0))


def write_profile_csv(u: RadialFunction, path: Union[str, Path]) -> Path:
    """Write ``r,u,du`` rows in double precision."""
    path = Path(path)
    data = np.column_stack([u.grid.nodes, u.values, u.derivative])
    buffer = io.StringIO()
    np.savetxt(buffer, data, delimiter=",", header=CSV_HEADER, comments="", fmt="%.17g")
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def read_profile_csv(path: Union[str, Path], N: int) -> RadialFunction:
    """Read a profile written by ``write_profile_csv``.

    The radii must be uniform and start at 0; a trailing newline is tolerated.

    Raises:
        FileError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FileError(f"Cannot read profile {path}: {e}")

    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0].replace(" ", "") != CSV_HEADER:
        raise FileError(f"{path}: expected header '{CSV_HEADER}'")
    try:
        data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    except ValueError as e:
        raise FileError(f"{path}: malformed profile rows: {e}")
    if data.shape[1] != 3 or data.shape[0] < 65:
        raise FileError(f"{path}: expected at least 65 rows of r,u,du")

    r = data[:, 0]
    n = r.size - 1
    if r[0] != 0.0 or not np.allclose(np.diff(r), r[-1] / n, rtol=1e-9, atol=0.0):
        raise FileError(f"{path}: radii must be uniform and start at 0")
    try:
        grid = make_grid(float(r[-1]), n, N)
        return RadialFunction(grid, data[:, 1])
    except ValidationError as e:
        raise FileError(f"{path}: {e.message}")


def gaussian(grid: RadialGrid, sigma: float = 1.0, center: float = 0.0) -> RadialFunction:
    """exp(-(r - center)^2 / (2 sigma^2)), forced to vanish at r = R."""
    values = np.exp(-((grid.nodes - center) ** 2) / (2.0 * sigma ** 2))
    values[-1] = 0.0
    return RadialFunction(grid, values)


def normalize_mass(u: RadialFunction, a: float, p: float) -> RadialFunction:
    """Rescale the amplitude so that ||u||_p = a.

    Raises:
        ValidationError: If u vanishes identically
    """
    norm = lq_norm(u, p)
    if norm == 0.0:
        raise ValidationError("Cannot normalize the zero profile")
    return u.scaled(a / norm)


def adaptive_radius(lam: Optional[float], p: float, default: float = 20.0) -> float:
    """Truncation radius from the decay law: R >= 12 / (|lam|/(p-1))^{1/p}."""
    if lam is None or lam == 0.0 or not math.isfinite(lam):
        return default
    rate = (abs(lam) / (p - 1.0)) ** (1.0 / p)
    return max(default, 12.0 / rate)
