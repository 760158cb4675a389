"""Empirical mixing diagnostics on ensembles of sphere points.

The total variation distance in high dimension cannot be estimated from
samples, so the curve reports the x_1-marginal TV, which is a lower bound on
the true TV. Transport distances use the chordal (Euclidean) ground metric
unless asked for the geodesic one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import exact_bounds
from .exceptions import EmptyConditionalEnsemble, NoValidWindow, ParameterError, TransportSizeError
from .sphere_core import RandomStream, sample_uniform_points

if TYPE_CHECKING:
    from .kac_walk import EnsembleSnapshot

logger = logging.getLogger(__name__)

EXACT_TRANSPORT_MAX = 2048
SLICED_PROJECTIONS = 256
SIGNAL_TO_NOISE = 5.0
CURVE_COLUMNS = ('tv_marginal', 'tv_se', 'w2', 'h_eps_mass', 'eta_hat')


@dataclass(frozen=True)
class Observable:
    """A per-walker function with its exact stationary mean.

    ``eigenfunction`` marks observables whose centred mean contracts by an
    exact eigenvalue from step 0, so decay fits need no transient window.
    """

    values: Callable[[np.ndarray], np.ndarray]
    stationary: Callable[[int], float]
    eigenfunction: bool = False


OBSERVABLES = {
    'x1': Observable(lambda x: x[:, 0], lambda n: 0.0),
    'x1sq': Observable(lambda x: x[:, 0] ** 2, lambda n: 1.0 / n, eigenfunction=True),
    'x1quad': Observable(lambda x: x[:, 0] ** 4, lambda n: 3.0 / (n * (n + 2))),
    'min_abs': Observable(lambda x: np.abs(x).min(axis=1), lambda n: math.nan),
}


@dataclass
class MixingCurve:
    """Per-step ensemble diagnostics, one row per recorded step.

    Observable means live in ``obs:<name>`` columns with their standard errors
    in ``obs:<name>:se``.
    """

    n: int
    steps: list[int] = field(default_factory=list)
    rows: list[dict[str, float]] = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def append(self, step: int, row: dict[str, float], snapshot=None):
        self.steps.append(step)
        self.rows.append(dict(row))
        if snapshot is not None:
            self.snapshots.append(snapshot)

    def column(self, name: str) -> list[float]:
        return [row.get(name, math.nan) for row in self.rows]

    @property
    def tv_marginal(self) -> list[float]:
        return self.column('tv_marginal')

    @property
    def w2(self) -> list[float]:
        return self.column('w2')

    @property
    def h_eps_mass(self) -> list[float]:
        return self.column('h_eps_mass')

    @property
    def obs_means(self) -> list[dict[str, tuple[float, float]]]:
        means = []
        for row in self.rows:
            means.append({
                key[4:]: (value, row.get(f'{key}:se', math.nan))
                for key, value in row.items()
                if key.startswith('obs:') and not key.endswith(':se')
            })
        return means

    def observable_names(self) -> list[str]:
        return sorted(self.obs_means[0]) if self.rows else []

    def to_frame(self) -> pd.DataFrame:
        observable_columns = sorted({key for row in self.rows for key in row if key.startswith('obs:')})
        columns = ['step', *CURVE_COLUMNS, *observable_columns]
        records = [{'step': step, **row} for step, row in zip(self.steps, self.rows)]
        return pd.DataFrame.from_records(records, columns=columns)


@dataclass(frozen=True)
class TransportPlanResult:
    """A matching of ``a`` onto ``b``: row i of a is sent to row matching[i] of b.

    ``cost`` is the mean matched squared distance; ``w2`` its square root.
    ``projected_cost`` is the plain sliced estimate (mean 1-D cost), which is
    a lower bound and is only filled in sliced mode.
    """

    cost: float
    matching: np.ndarray
    mode: str
    projected_cost: float | None = None

    @property
    def w2(self) -> float:
        return math.sqrt(max(self.cost, 0.0))


@dataclass(frozen=True)
class DecayFit:
    """Fitted log contraction per step over ``window``; steps before ``skip`` were excluded."""

    rate: float
    r2: float
    window: tuple[int, ...]
    skip: int = 0

    @property
    def eigenvalue(self) -> float:
        return math.exp(self.rate)


def _as_points(samples) -> np.ndarray:
    if hasattr(samples, 'points'):
        samples = samples.points
    points = np.asarray(samples, dtype=np.float64)
    if points.ndim != 2:
        raise ParameterError(f"expected a (samples, n) array, got shape {points.shape}")
    return points


def _marginal_bin_masses(n: int, bins: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(-1.0, 1.0, bins + 1)
    cdf = exact_bounds.coordinate_marginal_cdf(n, edges)
    return edges, np.diff(cdf)


def tv_marginal_estimate(samples, n: int, bins: int = 50, coordinate: int = 0) -> float:
    """Half the L1 distance between the x_1 histogram and the exact marginal masses."""
    points = _as_points(samples)
    if points.shape[0] < 10 * bins:
        raise ParameterError(f"need at least {10 * bins} samples for {bins} bins, got {points.shape[0]}")
    edges, expected = _marginal_bin_masses(n, bins)
    counts, _ = np.histogram(np.clip(points[:, coordinate], -1.0, 1.0), bins=edges)
    observed = counts / points.shape[0]
    return float(min(1.0, 0.5 * np.abs(observed - expected).sum()))


def tv_marginal_stderr(samples, bins: int = 50, coordinate: int = 0) -> float:
    """Multinomial standard error of the histogram TV statistic (delta method)."""
    points = _as_points(samples)
    counts, _ = np.histogram(np.clip(points[:, coordinate], -1.0, 1.0), bins=np.linspace(-1.0, 1.0, bins + 1))
    p = counts / points.shape[0]
    return float(0.5 * math.sqrt(np.sum(p * (1.0 - p)) / points.shape[0]))


def tv_min_coordinate_estimate(samples, reference, bins: int = 50) -> float:
    """Two-sample histogram TV of min_i |x_i| against a reference uniform cloud."""
    a = np.abs(_as_points(samples)).min(axis=1)
    b = np.abs(_as_points(reference)).min(axis=1)
    edges = np.linspace(0.0, 1.0 / math.sqrt(_as_points(samples).shape[1]), bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    return float(0.5 * np.abs(pa / a.size - pb / b.size).sum())


def h_eps_mass(samples, epsilon: float) -> float:
    """Fraction of samples with some coordinate smaller than epsilon in absolute value."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    points = _as_points(samples)
    if points.shape[0] == 0:
        return 0.0
    return float(np.mean(np.abs(points).min(axis=1) < epsilon))


def h_eps_stderr(samples, epsilon: float) -> float:
    p = h_eps_mass(samples, epsilon)
    return math.sqrt(p * (1.0 - p) / max(_as_points(samples).shape[0], 1))


def transport_lower_bound(samples, reference, epsilon: float) -> float:
    """Mass that must travel further than epsilon, times epsilon.

    Excess mass of ``samples`` in H_eps over the reference mass of H_2eps
    has to leave H_2eps, a displacement of more than epsilon each.
    """
    excess = h_eps_mass(samples, epsilon) - h_eps_mass(reference, min(2.0 * epsilon, 0.999999))
    return max(excess, 0.0) * epsilon


def half_space_margins(snapshot: EnsembleSnapshot, tests: int = 20, seed: int = 0) -> list[float]:
    """eta_hat + 4 SE - |mu_k(B) - mu'_k(B)| over random half-spaces B = {x_i > c}.

    mu_k is the whole ensemble and mu'_k the walkers that have used every
    pair; a negative margin breaks the conditioning bound.
    """
    flags = snapshot.covered_flags
    if not flags.any():
        raise EmptyConditionalEnsemble(snapshot.step, snapshot.walkers)
    points = snapshot.points
    covered = int(flags.sum())
    eta_hat = 1.0 - covered / snapshot.walkers
    generator = RandomStream(seed, 7).generator
    coordinates = generator.integers(snapshot.n, size=tests)
    cuts = generator.uniform(-1.0, 1.0, tests)
    margins = []
    for i, c in zip(coordinates, cuts):
        inside = points[:, i] > c
        p, p_covered = float(inside.mean()), float(inside[flags].mean())
        se = math.sqrt(p_covered * (1.0 - p_covered) / covered)
        margins.append(eta_hat + 4.0 * se - abs(p - p_covered))
    return margins


def _ground_cost(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    if metric == 'chordal':
        return cdist(a, b, 'sqeuclidean')
    if metric == 'geodesic':
        return np.arccos(np.clip(a @ b.T, -1.0, 1.0)) ** 2
    raise ParameterError(f"unknown ground metric {metric!r}")


def _matched_cost(a: np.ndarray, b: np.ndarray, matching: np.ndarray, metric: str) -> float:
    if metric == 'chordal':
        return float(np.mean(np.sum((a - b[matching]) ** 2, axis=1)))
    return float(np.mean(np.arccos(np.clip(np.sum(a * b[matching], axis=1), -1.0, 1.0)) ** 2))


def wasserstein_estimate(
    a,
    b,
    mode: str = 'exact',
    projections: int = SLICED_PROJECTIONS,
    seed: int = 0,
    metric: str = 'chordal',
) -> TransportPlanResult:
    """Empirical W2 between two equal-size clouds.

    ``exact`` solves the assignment problem (at most 2048 points). ``sliced``
    matches the clouds along random 1-D projections and keeps the best
    induced matching; its cost is that of a real matching, so it can only
    overestimate the exact W2.
    """
    a, b = _as_points(a), _as_points(b)
    if a.shape != b.shape:
        raise ParameterError(f"clouds must have the same shape, got {a.shape} and {b.shape}")
    size = a.shape[0]
    if size == 0:
        raise ParameterError("cannot transport empty clouds")

    if mode == 'exact':
        if size > EXACT_TRANSPORT_MAX:
            raise TransportSizeError(f"exact transport is capped at {EXACT_TRANSPORT_MAX} points, got {size}")
        cost = _ground_cost(a, b, metric)
        rows, cols = linear_sum_assignment(cost)
        matching = np.empty(size, dtype=np.int64)
        matching[rows] = cols
        return TransportPlanResult(cost=float(cost[rows, cols].mean()), matching=matching, mode=mode)

    if mode != 'sliced':
        raise ParameterError(f"unknown transport mode {mode!r}")
    directions = sample_uniform_points(a.shape[1], projections, RandomStream(seed, 0))
    best_cost, best_matching, projected = math.inf, None, []
    for direction in directions:
        pa, pb = a @ direction, b @ direction
        order_a, order_b = np.argsort(pa, kind='stable'), np.argsort(pb, kind='stable')
        projected.append(float(np.mean((pa[order_a] - pb[order_b]) ** 2)))
        matching = np.empty(size, dtype=np.int64)
        matching[order_a] = order_b
        cost = _matched_cost(a, b, matching, metric)
        if cost < best_cost:
            best_cost, best_matching = cost, matching
    return TransportPlanResult(cost=best_cost, matching=best_matching, mode=mode, projected_cost=float(np.mean(projected)))


def observable_decay(curve: MixingCurve, name: str, stationary_value: float | None = None, skip: int | None = None) -> DecayFit:
    """Fit log|mean_k - stationary| against k by weighted least squares.

    Steps before ``skip`` (default 2n, or 0 for exact eigenfunctions) and
    steps whose signal is under 5 standard errors are excluded. The fitted
    slope estimates the log of the contraction factor per step.
    """
    observable = OBSERVABLES.get(name)
    if stationary_value is None:
        if observable is None:
            raise ParameterError(f"no stationary value known for observable {name!r}")
        stationary_value = observable.stationary(curve.n)
    if skip is None:
        skip = 0 if observable is not None and observable.eigenfunction else 2 * curve.n

    series = [(step, means[name]) for step, means in zip(curve.steps, curve.obs_means) if name in means]
    if len(series) < 10:
        raise NoValidWindow(f"observable {name!r} is recorded at {len(series)} steps; need at least 10")

    window, deviations, errors = [], [], []
    for step, (mean, se) in series:
        deviation = abs(mean - stationary_value)
        if step >= skip and deviation > SIGNAL_TO_NOISE * se and deviation > 0.0:
            window.append(step)
            deviations.append(deviation)
            errors.append(max(se, 1e-6 * deviation))
    if len(window) < 2:
        raise NoValidWindow(f"no valid window for {name!r}: the signal never clears {SIGNAL_TO_NOISE} standard errors")

    k = np.array(window, dtype=np.float64)
    y = np.log(deviations)
    # sigma of log|d| is se/|d|
    weights = np.array(deviations) / np.array(errors)
    slope, intercept = np.polyfit(k, y, 1, w=weights)
    fitted = slope * k + intercept
    w2 = weights ** 2
    mean_y = np.sum(w2 * y) / np.sum(w2)
    total = np.sum(w2 * (y - mean_y) ** 2)
    r2 = 1.0 - np.sum(w2 * (y - fitted) ** 2) / total if total > 0 else 1.0
    logger.debug(f"Decay fit for {name}: rate={slope:.6f} over steps {window[0]}..{window[-1]}")
    return DecayFit(rate=float(slope), r2=float(r2), window=tuple(window), skip=skip)


# Observers. Each one maps an EnsembleSnapshot to named curve columns.


class MomentObserver:
    name = 'moments'

    def __init__(self, names=('x1', 'x1sq', 'x1quad')):
        unknown = set(names) - set(OBSERVABLES)
        if unknown:
            raise ParameterError(f"unknown observables: {sorted(unknown)}")
        self.names = tuple(names)

    def __call__(self, snapshot: EnsembleSnapshot) -> dict[str, float]:
        row = {}
        walkers = max(snapshot.walkers, 1)
        for name in self.names:
            values = OBSERVABLES[name].values(snapshot.points)
            row[f'obs:{name}'] = float(values.mean())
            row[f'obs:{name}:se'] = float(values.std(ddof=1) / math.sqrt(walkers)) if walkers > 1 else 0.0
        return row


COORDINATE_MOMENTS = {
    '': (1, lambda n: 0.0),
    'sq': (2, lambda n: 1.0 / n),
    'quad': (4, lambda n: 3.0 / (n * (n + 2))),
}


class CoordinateMomentObserver:
    """x_i, x_i^2 and x_i^4 for every coordinate, as obs:x<i>, obs:x<i>sq and obs:x<i>quad."""

    name = 'coordinate_moments'

    def __call__(self, snapshot: EnsembleSnapshot) -> dict[str, float]:
        points = snapshot.points
        walkers = points.shape[0]
        row = {}
        for suffix, (power, _) in COORDINATE_MOMENTS.items():
            values = points ** power
            means = values.mean(axis=0)
            if walkers > 1:
                errors = values.std(axis=0, ddof=1) / math.sqrt(walkers)
            else:
                errors = np.zeros(points.shape[1])
            for i in range(points.shape[1]):
                row[f'obs:x{i + 1}{suffix}'] = float(means[i])
                row[f'obs:x{i + 1}{suffix}:se'] = float(errors[i])
        return row

    @staticmethod
    def stationary(name: str, n: int) -> float:
        """Uniform-law value of a column name such as ``x3sq``."""
        return COORDINATE_MOMENTS[name.lstrip('x0123456789')][1](n)


class TVObserver:
    name = 'tv_marginal'

    def __init__(self, bins: int = 50):
        self.bins = bins

    def __call__(self, snapshot: EnsembleSnapshot) -> dict[str, float]:
        return {
            'tv_marginal': tv_marginal_estimate(snapshot.points, snapshot.n, self.bins),
            'tv_se': tv_marginal_stderr(snapshot.points, self.bins),
        }


class HEpsObserver:
    name = 'h_eps_mass'

    def __init__(self, epsilon: float):
        self.epsilon = epsilon

    def __call__(self, snapshot: EnsembleSnapshot) -> dict[str, float]:
        return {'h_eps_mass': h_eps_mass(snapshot.points, self.epsilon)}


class EtaObserver:
    name = 'eta_hat'

    def __call__(self, snapshot: EnsembleSnapshot) -> dict[str, float]:
        return {'eta_hat': float(1.0 - snapshot.covered_flags.mean())}


class W2Observer:
    """W2 between the first ``size`` walkers and a fixed uniform reference cloud."""

    name = 'w2'

    def __init__(self, n: int, size: int, mode: str = 'exact', seed: int = 0):
        self.size = size
        self.mode = mode
        self.seed = seed
        # reference stream ids sit far above any walker block id
        self.reference = sample_uniform_points(n, size, RandomStream(seed, 2 ** 63))

    def __call__(self, snapshot: EnsembleSnapshot) -> dict[str, float]:
        if snapshot.walkers < self.size:
            raise ParameterError(f"W2 needs {self.size} walkers, the ensemble has {snapshot.walkers}")
        result = wasserstein_estimate(snapshot.points[: self.size], self.reference, mode=self.mode, seed=self.seed)
        return {'w2': result.w2}
