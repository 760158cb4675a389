"""Deterministic checks of the kernel on S^2 and of the integral estimates.

The grid is the equal-area latitude-band grid with polar axis x_1: bands are
uniform in t = x_1 (Archimedes), sectors uniform in the azimuth
psi = atan2(x_3, x_2), so every cell carries weight 1/N. Densities are taken
with respect to the uniform measure U_2.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Iterator

import numpy as np
import pandas as pd
from scipy import sparse, special
from scipy.integrate import quad

from .exceptions import GridResolutionError, ParameterError, PropertyViolation, QuadratureError, ResourceAbort
from .sphere_core import TWO_PI, RandomStream, rotate_points

logger = logging.getLogger(__name__)

THETA_POINTS = 64
GRID_PAIRS = ((0, 1), (0, 2), (1, 2))
GRID_MAX_ENTRIES = 120_000_000
SINKHORN_TOLERANCE = 1e-13
SINKHORN_MAX_ITERATIONS = 10_000
MASS_TOLERANCE = 1e-8
RENORMALIZATION_WARNING = 1e-4
RENORMALIZATION_ABORT = 1e-3
MAX_TRACE_STEPS = 200
SINGULAR_RHO_SQUARED = 1e-3
LEMMA_MAX_J = 12
QUAD_RELATIVE_ERROR = 1e-6
SHAPE_QUADRATURE_NODES = 8
REJECTION_PROBES = 8192


@dataclass(frozen=True)
class SphereGrid:
    n_bands: int
    n_sectors: int

    def __post_init__(self):
        if self.n_bands < 2 or self.n_sectors < 3:
            raise ParameterError(f"grid needs at least 2 bands and 3 sectors, got {self.n_bands}x{self.n_sectors}")

    @classmethod
    def with_bands(cls, n_bands: int) -> SphereGrid:
        return cls(n_bands, 2 * n_bands)

    @classmethod
    def from_cells(cls, cells: int) -> SphereGrid:
        """The grid with 2B^2 cells closest to ``cells``."""
        return cls.with_bands(max(2, round(math.sqrt(cells / 2.0))))

    @property
    def size(self) -> int:
        return self.n_bands * self.n_sectors

    @property
    def band_width(self) -> float:
        return 2.0 / self.n_bands

    @property
    def sector_width(self) -> float:
        return TWO_PI / self.n_sectors

    @cached_property
    def band_edges(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_bands + 1)

    @cached_property
    def band_centers(self) -> np.ndarray:
        return 0.5 * (self.band_edges[:-1] + self.band_edges[1:])

    @cached_property
    def sector_centers(self) -> np.ndarray:
        return (np.arange(self.n_sectors) + 0.5) * self.sector_width

    @cached_property
    def t(self) -> np.ndarray:
        return np.repeat(self.band_centers, self.n_sectors)

    @cached_property
    def psi(self) -> np.ndarray:
        return np.tile(self.sector_centers, self.n_bands)

    @cached_property
    def centers(self) -> np.ndarray:
        rho = np.sqrt(1.0 - self.t ** 2)
        points = np.column_stack([self.t, rho * np.cos(self.psi), rho * np.sin(self.psi)])
        points.flags.writeable = False
        return points

    @cached_property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def interpolation(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bilinear stencil in (t, psi): four (cell index, weight) columns per point.

        t is clamped to the outermost band centres, psi is periodic.
        """
        t = points[:, 0]
        if not np.all(np.isfinite(points)) or np.any(np.abs(t) > 1.0 + 1e-9):
            raise GridResolutionError("interpolation point off the sphere; the grid operator is inconsistent")
        psi = np.mod(np.arctan2(points[:, 2], points[:, 1]), TWO_PI)

        u = np.clip((np.clip(t, -1.0, 1.0) + 1.0) / self.band_width - 0.5, 0.0, self.n_bands - 1.0)
        b0 = np.minimum(np.floor(u).astype(np.int64), self.n_bands - 2)
        fu = u - b0
        v = psi / self.sector_width - 0.5
        s_floor = np.floor(v)
        fv = v - s_floor
        s0 = np.mod(s_floor.astype(np.int64), self.n_sectors)
        s1 = np.mod(s0 + 1, self.n_sectors)

        index = np.column_stack([
            b0 * self.n_sectors + s0,
            b0 * self.n_sectors + s1,
            (b0 + 1) * self.n_sectors + s0,
            (b0 + 1) * self.n_sectors + s1,
        ])
        weight = np.column_stack([(1 - fu) * (1 - fv), (1 - fu) * fv, fu * (1 - fv), fu * fv])
        return index, weight

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        index, weight = self.interpolation(points)
        return np.sum(values[index] * weight, axis=1)


@dataclass(frozen=True)
class GridDensity:
    grid: SphereGrid
    values: np.ndarray
    renormalization: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.size,):
            raise ParameterError(f"expected {self.grid.size} cell values, got shape {values.shape}")
        if np.any(values < 0.0) or not np.all(np.isfinite(values)):
            raise ParameterError("density values must be finite and non-negative")
        mass = float(self.grid.weights @ values)
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise ParameterError(f"density has mass {mass!r}, expected 1 within {MASS_TOLERANCE}")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    @classmethod
    def normalized(cls, grid: SphereGrid, values, renormalization: float = 1.0) -> GridDensity:
        values = np.clip(np.asarray(values, dtype=np.float64), 0.0, None)
        mass = float(grid.weights @ values)
        if mass <= 0.0:
            raise ParameterError("cannot normalize a density with zero mass")
        return cls(grid, values / mass, renormalization)

    @classmethod
    def uniform(cls, grid: SphereGrid) -> GridDensity:
        return cls(grid, np.ones(grid.size))

    @property
    def mass(self) -> float:
        return float(self.grid.weights @ self.values)

    @property
    def sup(self) -> float:
        return float(self.values.max())

    @property
    def min(self) -> float:
        return float(self.values.min())

    def band_means(self) -> np.ndarray:
        return self.values.reshape(self.grid.n_bands, self.grid.n_sectors).mean(axis=1)

    def to_frame(self) -> pd.DataFrame:
        x, y, z = self.grid.centers.T
        return pd.DataFrame({
            'cell': np.arange(self.grid.size),
            'x': x,
            'y': y,
            'z': z,
            'weight': self.grid.weights,
            'value': self.values,
        })


class KacGridOperator:
    """The Kac kernel on a grid, as a sparse matrix acting on cell values.

    ``raw`` averages bilinear interpolation of g o R(i, j; theta) over the three
    pairs and a uniform theta rule. Its rows sum to one but its columns only
    approximately, so it leaks mass at the discretization scale. ``balanced``
    is D (raw + raw^T)/2 D with D from a symmetric Sinkhorn scaling: symmetric,
    non-negative and doubly stochastic, hence stationary, mass preserving and
    self-adjoint for the uniform cell weights.
    """

    def __init__(self, grid: SphereGrid, thetas: int = THETA_POINTS, max_entries: int = GRID_MAX_ENTRIES):
        entries = self.stencil_entries(grid, thetas)
        if entries > max_entries:
            raise ResourceAbort(
                f"grid operator needs {entries:.3e} stencil entries for {grid.size} cells; budget is {max_entries:.3e}"
            )
        self.grid = grid
        self.thetas = thetas
        started = time.perf_counter()
        self.raw = self._assemble()
        self.scaling, self.sinkhorn_iterations = self._balance()
        d = sparse.diags(self.scaling)
        self.balanced = (d @ (0.5 * (self.raw + self.raw.T)) @ d).tocsr()
        logger.info(
            f"Grid operator on {grid.size} cells: nnz={self.balanced.nnz}, "
            f"sinkhorn iterations={self.sinkhorn_iterations}, {time.perf_counter() - started:.2f}s"
        )

    @staticmethod
    def stencil_entries(grid: SphereGrid, thetas: int = THETA_POINTS) -> int:
        """Interpolation entries assembled before duplicates are summed."""
        return len(GRID_PAIRS) * thetas * 4 * grid.size

    def _assemble(self) -> sparse.csr_matrix:
        size = self.grid.size
        angles = np.arange(self.thetas) * (TWO_PI / self.thetas)
        scale = 1.0 / (len(GRID_PAIRS) * self.thetas)
        rows = np.tile(np.arange(size), self.thetas)
        matrix = sparse.csr_matrix((size, size))
        for i, j in GRID_PAIRS:
            rotated = np.concatenate([rotate_points(self.grid.centers, i, j, theta) for theta in angles])
            index, weight = self.grid.interpolation(rotated)
            block = sparse.coo_matrix(
                (weight.ravel() * scale, (np.repeat(rows, 4), index.ravel())),
                shape=(size, size),
            )
            matrix = matrix + block.tocsr()
        return matrix.tocsr()

    def _balance(self) -> tuple[np.ndarray, int]:
        symmetric = (0.5 * (self.raw + self.raw.T)).tocsr()
        d = np.ones(self.grid.size)
        for iteration in range(1, SINKHORN_MAX_ITERATIONS + 1):
            ad = symmetric @ d
            if np.max(np.abs(d * ad - 1.0)) <= SINKHORN_TOLERANCE:
                return d, iteration
            d = np.sqrt(d / ad)
        raise GridResolutionError(
            f"symmetric Sinkhorn scaling did not converge in {SINKHORN_MAX_ITERATIONS} iterations on {self.grid.size} cells"
        )

    def matrix(self, balanced: bool = True) -> sparse.csr_matrix:
        return self.balanced if balanced else self.raw

    def apply(self, values: np.ndarray, balanced: bool = True) -> np.ndarray:
        return self.matrix(balanced) @ values

    def stationarity_defect(self, balanced: bool = True) -> float:
        """sup |K1 - 1|."""
        return float(np.max(np.abs(self.apply(np.ones(self.grid.size), balanced) - 1.0)))

    def raw_mass_defect(self, values: np.ndarray) -> float:
        """Relative mass change of one raw (unbalanced) application."""
        weights = self.grid.weights
        before = float(weights @ values)
        return abs(float(weights @ self.raw.dot(values)) - before) / before

    def self_adjointness_defect(self, f: np.ndarray, g: np.ndarray, balanced: bool = True) -> float:
        """|<Kf, g> - <f, Kg>| in L^2(U_2)."""
        weights = self.grid.weights
        return abs(float(weights @ (self.apply(f, balanced) * g)) - float(weights @ (f * self.apply(g, balanced))))


@lru_cache(maxsize=8)
def kac_grid_operator(grid: SphereGrid, thetas: int = THETA_POINTS, max_entries: int | None = None) -> KacGridOperator:
    if max_entries is None:
        from django.conf import settings

        max_entries = settings.KWL_GRID_MAX_ENTRIES
    return KacGridOperator(grid, thetas, max_entries)


def kernel_apply_grid(g: GridDensity, operator: KacGridOperator | None = None) -> GridDensity:
    """One step of the kernel on a grid density, renormalized to unit mass."""
    operator = operator or kac_grid_operator(g.grid)
    if operator.grid != g.grid:
        raise ParameterError("operator and density live on different grids")
    values = operator.apply(g.values)
    mass = float(g.grid.weights @ values)
    factor = 1.0 / mass
    if abs(factor - 1.0) > RENORMALIZATION_WARNING:
        logger.warning(f"Renormalization factor {factor:.8f} drifts past {RENORMALIZATION_WARNING}")
    return GridDensity(g.grid, values * factor, renormalization=factor)


def iterate_density(g0: GridDensity, steps: int, operator: KacGridOperator | None = None) -> Iterator[GridDensity]:
    """Yield g0, Kg0, ..., K^steps g0, checking renormalization and extremes."""
    if not 0 <= steps <= MAX_TRACE_STEPS:
        raise ParameterError(f"steps must lie in [0, {MAX_TRACE_STEPS}], got {steps}")
    g = g0
    yield g
    for k in range(1, steps + 1):
        previous = g
        g = kernel_apply_grid(g, operator)
        if abs(g.renormalization - 1.0) > RENORMALIZATION_ABORT:
            raise GridResolutionError(
                f"renormalization factor {g.renormalization:.6f} at step {k} on {g.grid.size} cells; refine the grid"
            )
        if g.sup > previous.sup * (1 + 1e-12) or g.min < previous.min * (1 - 1e-12):
            raise PropertyViolation(
                f"density extremes moved outward at step {k}: sup {previous.sup!r} -> {g.sup!r}, "
                f"min {previous.min!r} -> {g.min!r}"
            )
        yield g


def sup_density_trace(g0: GridDensity, steps: int, operator: KacGridOperator | None = None) -> list[tuple[int, float, float]]:
    """(k, sup, min) of K^k g0 for k = 0..steps."""
    return [(k, g.sup, g.min) for k, g in enumerate(iterate_density(g0, steps, operator))]


def cap_density(grid: SphereGrid, radius: float) -> GridDensity:
    """Normalized indicator of the geodesic cap of ``radius`` around e1."""
    if not radius > 0.0:
        raise ParameterError(f"cap radius must be positive, got {radius}")
    inside = np.arccos(np.clip(grid.t, -1.0, 1.0)) <= radius
    if not inside.any():
        raise ParameterError(f"a cap of radius {radius} contains no cell centre of a {grid.n_bands}-band grid")
    return GridDensity.normalized(grid, inside.astype(np.float64))


def fisher_density(grid: SphereGrid, direction, kappa: float) -> GridDensity:
    """A smooth density proportional to exp(kappa <mu, x>)."""
    mu = np.asarray(direction, dtype=np.float64)
    mu = mu / np.linalg.norm(mu)
    return GridDensity.normalized(grid, np.exp(kappa * (grid.centers @ mu - 1.0)))


class VonMisesCircleDensity:
    """exp(kappa cos(phi - mu)) / I0(kappa), a density on S^1 w.r.t. dphi / 2pi."""

    def __init__(self, mu: float = 0.0, kappa: float = 1.0):
        if kappa < 0:
            raise ParameterError(f"kappa must be non-negative, got {kappa}")
        self.mu = mu
        self.kappa = kappa

    def __call__(self, phi):
        # i0e(k) = exp(-k) I0(k)
        return np.exp(self.kappa * (np.cos(phi - self.mu) - 1.0)) / special.i0e(self.kappa)

    def __repr__(self):
        return f"VonMisesCircleDensity(mu={self.mu}, kappa={self.kappa})"


def von_mises_circle_density(mu: float = 0.0, kappa: float = 1.0) -> VonMisesCircleDensity:
    return VonMisesCircleDensity(mu, kappa)


def _circle_mass(h: Callable, lo: float, hi: float) -> float:
    value, _ = quad(lambda phi: float(h(phi)), lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
    return value / TWO_PI


def circle_average_pushforward(h: Callable, grid: SphereGrid, plane: tuple[int, int] = (2, 3)) -> GridDensity:
    """Density on S^2 of (cos phi, sin phi cos theta, sin phi sin theta).

    phi is drawn from ``h`` (a density on the x_1 x_2 circle w.r.t. dphi/2pi)
    and theta uniformly, i.e. one uniform rotation of the (2, 3)-plane. The
    law of x_1 = cos phi determines everything; each cell gets the exact mass
    of its band divided by the band's uniform mass.
    """
    if tuple(sorted(plane)) != (2, 3):
        raise ParameterError(f"the pushforward is computed for the (2, 3) plane, got {plane}")
    total = _circle_mass(h, -math.pi, math.pi)
    if abs(total - 1.0) > 1e-6:
        raise ParameterError(f"h has mass {total!r} on the circle, expected 1")

    angles = np.arccos(grid.band_edges)  # decreasing from pi to 0
    band_mass = np.array([
        _circle_mass(h, angles[b + 1], angles[b]) + _circle_mass(h, -angles[b], -angles[b + 1])
        for b in range(grid.n_bands)
    ])
    values = np.repeat(band_mass / (grid.band_width / 2.0), grid.n_sectors)
    return GridDensity.normalized(grid, values, renormalization=1.0 / float(grid.weights @ values))


@dataclass(frozen=True)
class PushforwardShape:
    """Fit of a pushforward to c (x_2^2 + x_3^2)^{-1/2} h(x_1, .)."""

    constant: float
    max_deviation: float
    admissible_cells: int

    @property
    def reference_ratio(self) -> float:
        """The measured constant against a 1/(2 pi) prefactor."""
        return self.constant * TWO_PI


def pushforward_shape(h: Callable, density: GridDensity) -> PushforwardShape:
    """Compare a pushforward with the rho^{-1} h profile band by band.

    The profile is averaged over each band: with t = cos phi the singular
    factor rho^{-1} dt becomes dphi, and the symmetrized h is integrated over
    the band's phi range by Gauss-Legendre. Cells with rho^2 < 1e-3 are
    excluded.
    """
    grid = density.grid
    t = grid.band_centers
    phi_lo, phi_hi = np.arccos(grid.band_edges[1:]), np.arccos(grid.band_edges[:-1])
    nodes, weights = np.polynomial.legendre.leggauss(SHAPE_QUADRATURE_NODES)
    half = 0.5 * (phi_hi - phi_lo)
    phi = (0.5 * (phi_hi + phi_lo))[:, None] + half[:, None] * nodes[None, :]
    h_sym = 0.5 * (np.asarray(h(phi), dtype=np.float64) + np.asarray(h(-phi), dtype=np.float64))
    profile = half * (h_sym @ weights) / grid.band_width
    admissible = (1.0 - t ** 2 >= SINGULAR_RHO_SQUARED) & (profile > 0.0)
    if not admissible.any():
        raise ParameterError("no admissible band for the shape comparison")
    ratios = density.band_means()[admissible] / profile[admissible]
    constant = float(np.mean(ratios))
    deviation = float(np.max(np.abs(ratios / constant - 1.0)))
    return PushforwardShape(constant=constant, max_deviation=deviation, admissible_cells=int(admissible.sum()) * grid.n_sectors)


def sample_circle_density(h: Callable, size: int, rng: RandomStream) -> np.ndarray:
    """Angles phi drawn from ``h`` by rejection against the uniform law on the circle."""
    probes = np.linspace(-math.pi, math.pi, REJECTION_PROBES, endpoint=False)
    ceiling = 1.05 * float(np.max(h(probes)))
    generator = rng.generator
    accepted, count = [], 0
    while count < size:
        phi = generator.uniform(-math.pi, math.pi, 2 * size)
        keep = generator.random(phi.size) * ceiling < np.asarray(h(phi), dtype=np.float64)
        accepted.append(phi[keep])
        count += int(keep.sum())
    return np.concatenate(accepted)[:size]


def sample_circle_pushforward(h: Callable, size: int, rng: RandomStream) -> np.ndarray:
    """(size, 3) points: (cos phi, sin phi, 0) with phi from ``h``, then one uniform (2, 3)-plane rotation."""
    phi = sample_circle_density(h, size, rng)
    points = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(size)])
    return rotate_points(points, 1, 2, rng.generator.random(size) * TWO_PI)


@dataclass(frozen=True)
class BandAgreement:
    """Band masses of a grid density against a sampled cloud."""

    tv: float
    max_z: float
    samples: int


def band_agreement(density: GridDensity, points: np.ndarray) -> BandAgreement:
    """Histogram the sampled x_1 over the grid's bands and compare with the density's band masses.

    ``max_z`` is the largest band deviation in binomial standard errors.
    """
    grid = density.grid
    samples = points.shape[0]
    counts, _ = np.histogram(np.clip(points[:, 0], -1.0, 1.0), bins=grid.band_edges)
    observed = counts / samples
    expected = density.band_means() / grid.n_bands
    se = np.sqrt(expected * (1.0 - expected) / samples)
    gap = np.abs(observed - expected)
    z = np.divide(gap, se, out=np.where(gap > 0, np.inf, 0.0), where=se > 0)
    return BandAgreement(tv=float(0.5 * gap.sum()), max_z=float(z.max()), samples=samples)


@dataclass(frozen=True)
class LemmaCheckRecord:
    params: tuple[float, float, float, float, int]
    lhs: float
    rhs: float
    log_rhs: float
    quad_error: float

    @property
    def holds(self) -> bool:
        return math.log(self.lhs) <= self.log_rhs if self.lhs > 0 else True

    @property
    def log_margin(self) -> float:
        """log(rhs / lhs); negative means a violation."""
        return self.log_rhs - math.log(self.lhs)


def _lemma_lhs(x1: float, x2: float, xs: float, xt: float, j: int) -> tuple[float, float]:
    a = x1 + x2
    lower = -math.log(a)

    def integrand(u):
        e = math.exp(-u)
        return u ** (j - 1) * e / ((e + xs) * (e + xt))

    # after u = -ln(a theta) the integrand changes regime at -ln xs and -ln xt
    cuts = sorted({c for c in (-math.log(xs), -math.log(xt)) if c > lower})
    edges = [lower, *cuts, math.inf]
    value, error = 0.0, 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        piece, piece_error = quad(integrand, left, right, epsabs=0.0, epsrel=1e-10, limit=400)
        value += piece
        error += piece_error
    return value / a, error / a


def technical_lemma_check(x1: float, x2: float, xs: float, xt: float, j: int) -> LemmaCheckRecord:
    """Evaluate both sides of the singular-integral inequality.

    lhs = int_0^1 ((x1+x2) theta + xs)^{-1} ((x1+x2) theta + xt)^{-1}
          (-log((x1+x2) theta))^{j-1} dtheta
    rhs = 4 (j+1)! (xs+xt)^{-1} (x1+x2)^{-1} sum over x in (x1, x2, xs, xt) of (-log x)^j
    """
    for label, value in (('x1', x1), ('x2', x2), ('xs', xs), ('xt', xt)):
        if not 0.0 < value <= 1.0:
            raise ParameterError(f"{label} must lie in (0, 1], got {value}")
    if x1 + x2 > 1.0:
        raise ParameterError(f"x1 + x2 must be at most 1, got {x1 + x2}")
    if not 1 <= j <= LEMMA_MAX_J:
        raise ParameterError(f"j must lie in [1, {LEMMA_MAX_J}], got {j}")

    lhs, error = _lemma_lhs(x1, x2, xs, xt, j)
    if not math.isfinite(lhs) or error > QUAD_RELATIVE_ERROR * abs(lhs):
        raise QuadratureError(f"quadrature error {error:.3e} too large for lhs {lhs:.6e} at {(x1, x2, xs, xt, j)}")

    logs = np.array([-math.log(x) for x in (x1, x2, xs, xt) if x < 1.0])
    log_sum = float(special.logsumexp(j * np.log(logs))) if logs.size else -math.inf
    log_rhs = math.log(4.0) + math.lgamma(j + 2) - math.log(xs + xt) - math.log(x1 + x2) + log_sum
    rhs = math.exp(log_rhs) if log_rhs < 700.0 else math.inf
    return LemmaCheckRecord(params=(x1, x2, xs, xt, j), lhs=lhs, rhs=rhs, log_rhs=log_rhs, quad_error=error)


@dataclass(frozen=True)
class LemmaSweep:
    draws: int
    violations: int
    worst: LemmaCheckRecord | None

    @property
    def worst_margin(self) -> float:
        return self.worst.log_margin if self.worst else math.inf


def _log_uniform(generator, lo: float, hi: float, size: int) -> np.ndarray:
    return np.exp(generator.uniform(math.log(lo), math.log(hi), size))


def lemma3_sweep(draws: int, seed: int, max_j: int = 8) -> LemmaSweep:
    """Random draws: x1, x2 log-uniform in [1e-6, 1/2], xs, xt in [1e-6, 1], j in 1..max_j."""
    generator = RandomStream(seed, 3).generator
    x1 = _log_uniform(generator, 1e-6, 0.5, draws)
    x2 = _log_uniform(generator, 1e-6, 0.5, draws)
    xs = _log_uniform(generator, 1e-6, 1.0, draws)
    xt = _log_uniform(generator, 1e-6, 1.0, draws)
    js = generator.integers(1, max_j + 1, size=draws)
    return _sweep(zip(x1, x2, xs, xt, js))


def lemma3_grid_sweep(points: int = 20) -> LemmaSweep:
    """j = 1, x1 = x2, xs = xt on a log-spaced grid of (x1, xs) in [1e-6, 1/2] x [1e-6, 1]."""
    xs_grid = np.geomspace(1e-6, 1.0, points)
    x_grid = np.geomspace(1e-6, 0.5, points)
    return _sweep((x, x, s, s, 1) for x in x_grid for s in xs_grid)


def _sweep(params) -> LemmaSweep:
    draws, violations, worst = 0, 0, None
    for x1, x2, xs, xt, j in params:
        record = technical_lemma_check(float(x1), float(x2), float(xs), float(xt), int(j))
        draws += 1
        if not record.holds:
            violations += 1
            logger.warning(f"Integral inequality fails at {record.params}: lhs={record.lhs:.6e} rhs={record.rhs:.6e}")
        if worst is None or record.log_margin < worst.log_margin:
            worst = record
    return LemmaSweep(draws=draws, violations=violations, worst=worst)


def mass_defect_refinement(bands=(16, 32), kappa: float = 2.0, direction=(0.3, 0.5, 0.8)) -> list[tuple[int, float]]:
    """Raw-operator mass defect of a smooth density as the grid is refined.

    Doubling the band count halves the cell diameter.
    """
    study = []
    for n_bands in bands:
        grid = SphereGrid.with_bands(n_bands)
        density = fisher_density(grid, direction, kappa)
        operator = kac_grid_operator(grid)
        study.append((grid.size, operator.raw_mass_defect(density.values)))
        logger.info(f"Raw mass defect on {grid.size} cells: {study[-1][1]:.3e}")
    return study
