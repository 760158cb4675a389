"""The Kac Markov chain: single steps, ensembles and conditioning on A_k.

Ensembles are split into fixed-size blocks of walkers. Each block owns one
counter-based stream (stream id = block index) and is evolved by exactly one
worker thread at a time, so every walker's trajectory depends only on the
seed and the block size, never on the thread count. Statistics are reduced
over the assembled snapshot in walker order.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import EmptyConditionalEnsemble, ObserverError, ParameterError, ResourceAbort
from .mixing_metrics import MixingCurve
from .sphere_core import (
    TWO_PI,
    RandomStream,
    SpherePoint,
    draw_rotation_event,
    pair_count,
    pair_index,
    pair_table,
    renormalize,
    rotate,
    sample_uniform_points,
    sample_uniform_sphere,
)

logger = logging.getLogger(__name__)

RENORMALIZE_EVERY = 1024
BLOCK_SIZE = 1024
STARTS = ('e1', 'uniform')

Observer = Callable[['EnsembleSnapshot'], Mapping[str, float]]


@dataclass(frozen=True)
class WalkState:
    point: SpherePoint
    rng: RandomStream
    step: int = 0
    # bit p is set once the p-th pair (row-major order) has been used
    coverage: int = 0

    @classmethod
    def start(cls, n: int, rng: RandomStream, start: str = 'e1') -> WalkState:
        if start not in STARTS:
            raise ParameterError(f"unknown start {start!r}; expected one of {STARTS}")
        point = SpherePoint.basis(n, 1) if start == 'e1' else sample_uniform_sphere(n, rng)
        return cls(point=point, rng=rng)

    @property
    def n(self) -> int:
        return self.point.n

    @property
    def covered_pairs(self) -> int:
        return self.coverage.bit_count()

    @property
    def covered(self) -> bool:
        """Whether A_k holds: every coordinate pair has been used."""
        return self.covered_pairs == pair_count(self.n)


def step(state: WalkState, renormalize_every: int = RENORMALIZE_EVERY) -> WalkState:
    event = draw_rotation_event(state.n, state.rng)
    point = rotate(state.point, event)
    k = state.step + 1
    if k % renormalize_every == 0:
        point = SpherePoint.normalized(point.coords)
    coverage = state.coverage | (1 << pair_index(state.n, event.i, event.j))
    return WalkState(point=point, rng=state.rng, step=k, coverage=coverage)


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    walkers: int
    steps: int
    seed: int
    start: str = 'e1'
    record_every: int = 1
    threads: int = 1
    block_size: int = BLOCK_SIZE
    renormalize_every: int = RENORMALIZE_EVERY
    max_snapshot_bytes: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"n must be at least 2, got {self.n}")
        if self.walkers < 1:
            raise ParameterError(f"walkers must be positive, got {self.walkers}")
        if self.steps < 0:
            raise ParameterError(f"steps must be non-negative, got {self.steps}")
        if self.start not in STARTS:
            raise ParameterError(f"unknown start {self.start!r}; expected one of {STARTS}")
        if self.record_every < 1 or (self.steps > 0 and self.record_every > self.steps):
            raise ParameterError(f"record_every must lie in [1, steps], got {self.record_every}")
        if self.threads < 1 or self.block_size < 1 or self.renormalize_every < 1:
            raise ParameterError("threads, block_size and renormalize_every must be positive")

    @classmethod
    def from_settings(cls, **kwargs) -> EnsembleConfig:
        """Build a config whose unspecified knobs come from Django settings."""
        from django.conf import settings

        kwargs.setdefault('seed', settings.KWL_SEED)
        kwargs.setdefault('threads', settings.KWL_THREADS)
        kwargs.setdefault('block_size', settings.KWL_BLOCK_SIZE)
        kwargs.setdefault('renormalize_every', settings.KWL_RENORMALIZE_EVERY)
        kwargs.setdefault('max_snapshot_bytes', settings.KWL_MAX_SNAPSHOT_BYTES)
        return cls(**kwargs)

    def recorded_steps(self) -> list[int]:
        steps = list(range(0, self.steps + 1, self.record_every))
        if steps[-1] != self.steps:
            steps.append(self.steps)
        return steps

    def block_bounds(self) -> list[tuple[int, int]]:
        return [(lo, min(lo + self.block_size, self.walkers)) for lo in range(0, self.walkers, self.block_size)]


@dataclass(frozen=True)
class EnsembleSnapshot:
    step: int
    points: np.ndarray
    covered_flags: np.ndarray

    def __post_init__(self):
        for array in (self.points, self.covered_flags):
            array.flags.writeable = False

    @property
    def walkers(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def max_norm_defect(self) -> float:
        if self.walkers == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.norm(self.points, axis=1) - 1.0)))


class _WalkerBlock:
    """A contiguous slice of walkers evolved with one random stream."""

    def __init__(self, cfg: EnsembleConfig, block_id: int, size: int):
        self.rng = RandomStream(cfg.seed, block_id)
        self.size = size
        self.renormalize_every = cfg.renormalize_every
        self.pairs_i, self.pairs_j = pair_table(cfg.n)
        self.npairs = pair_count(cfg.n)
        if cfg.start == 'uniform':
            self.points = sample_uniform_points(cfg.n, size, self.rng)
        else:
            self.points = np.zeros((size, cfg.n))
            self.points[:, 0] = 1.0
        self.coverage = np.zeros((size, -(-self.npairs // 64)), dtype=np.uint64)
        self.covered_pairs = np.zeros(size, dtype=np.int64)
        self.all_covered = False
        self.rows = np.arange(size)
        self.step = 0

    def advance(self, steps: int) -> _WalkerBlock:
        rows, points, generator = self.rows, self.points, self.rng.generator
        for _ in range(steps):
            pairs = generator.integers(self.npairs, size=self.size)
            theta = generator.random(self.size) * TWO_PI
            i, j = self.pairs_i[pairs], self.pairs_j[pairs]
            c, s = np.cos(theta), np.sin(theta)
            xi, xj = points[rows, i], points[rows, j]
            points[rows, i] = xi * c - xj * s
            points[rows, j] = xi * s + xj * c
            self._cover(pairs)
            self.step += 1
            if self.step % self.renormalize_every == 0:
                renormalize(points)
        return self

    def _cover(self, pairs: np.ndarray):
        if self.all_covered:
            return
        words = pairs // 64
        bits = np.left_shift(np.uint64(1), (pairs % 64).astype(np.uint64))
        current = self.coverage[self.rows, words]
        fresh = (current & bits) == 0
        self.coverage[self.rows, words] = current | bits
        self.covered_pairs += fresh
        self.all_covered = bool(np.all(self.covered_pairs == self.npairs))

    @property
    def covered_flags(self) -> np.ndarray:
        return self.covered_pairs == self.npairs


def _check_budget(cfg: EnsembleConfig, keep_snapshots: bool):
    if cfg.max_snapshot_bytes is None:
        return
    per_snapshot = cfg.walkers * (cfg.n * 8 + 1)
    retained = len(cfg.recorded_steps()) if keep_snapshots else 1
    # live walker state plus the retained snapshots
    needed = per_snapshot * (retained + 1)
    if needed > cfg.max_snapshot_bytes:
        raise ResourceAbort(
            f"ensemble needs ~{needed / 2**20:.0f} MiB of snapshots "
            f"(walkers={cfg.walkers}, n={cfg.n}, retained={retained}); "
            f"budget is {cfg.max_snapshot_bytes / 2**20:.0f} MiB"
        )


def _observer_name(observer) -> str:
    return getattr(observer, 'name', None) or getattr(observer, '__name__', type(observer).__name__)


def run_ensemble(cfg: EnsembleConfig, observers: Sequence[Observer] = (), keep_snapshots: bool = False) -> MixingCurve:
    """Evolve ``cfg.walkers`` independent walkers and observe them at recorded steps.

    Each observer receives an immutable ``EnsembleSnapshot`` and returns a
    mapping of column name to value; the columns of one step form one row of
    the returned curve.
    """
    _check_budget(cfg, keep_snapshots)
    started = time.perf_counter()
    blocks = [_WalkerBlock(cfg, block_id, hi - lo) for block_id, (lo, hi) in enumerate(cfg.block_bounds())]
    curve = MixingCurve(n=cfg.n)
    logger.info(
        f"Running ensemble n={cfg.n} walkers={cfg.walkers} steps={cfg.steps} "
        f"blocks={len(blocks)} threads={cfg.threads}"
    )

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        current = 0
        for target in cfg.recorded_steps():
            delta = target - current
            if delta:
                list(pool.map(lambda block: block.advance(delta), blocks))
                current = target
            snapshot = EnsembleSnapshot(
                step=current,
                points=np.concatenate([block.points for block in blocks]),
                covered_flags=np.concatenate([block.covered_flags for block in blocks]),
            )
            row = {}
            for observer in observers:
                try:
                    row.update(observer(snapshot))
                except Exception as e:
                    logger.error(f"Observer {_observer_name(observer)} failed at step {current}: {e}")
                    raise ObserverError(_observer_name(observer), current, e) from e
            curve.append(current, row, snapshot if keep_snapshots else None)

    logger.info(f"Ensemble finished in {time.perf_counter() - started:.2f}s")
    return curve


def conditional_snapshot(snapshot: EnsembleSnapshot) -> EnsembleSnapshot:
    """The walkers for which A_k holds: the empirical conditional law mu'_k."""
    flags = snapshot.covered_flags
    if not flags.any():
        raise EmptyConditionalEnsemble(snapshot.step, snapshot.walkers)
    if flags.all():
        return snapshot
    return EnsembleSnapshot(
        step=snapshot.step,
        points=snapshot.points[flags],
        covered_flags=np.ones(int(flags.sum()), dtype=bool),
    )


def empirical_eta(n: int, k_max: int, walkers: int, seed: int, threads: int = 1) -> list[tuple[int, float]]:
    """Fraction of walkers that have not used every pair, for k = 0..k_max."""
    from .mixing_metrics import EtaObserver

    if walkers < 1000:
        logger.warning(f"empirical_eta with only {walkers} walkers gives coarse estimates")
    cfg = EnsembleConfig(n=n, walkers=walkers, steps=k_max, seed=seed, record_every=1, threads=threads)
    curve = run_ensemble(cfg, [EtaObserver()])
    return list(zip(curve.steps, curve.column('eta_hat')))


def coupon_collector_eta(n: int, k_max: int, walkers: int, seed: int) -> list[tuple[int, float]]:
    """P(A_k^c) estimated from pair draws alone, without moving any point."""
    npairs = pair_count(n)
    generator = RandomStream(seed, 0).generator
    seen = np.zeros((walkers, npairs), dtype=bool)
    rows = np.arange(walkers)
    estimates = [(0, 1.0)]
    for k in range(1, k_max + 1):
        seen[rows, generator.integers(npairs, size=walkers)] = True
        estimates.append((k, float(1.0 - seen.all(axis=1).mean())))
    return estimates


def stream_walkers(n: int, walkers: int, steps: int, seed: int, start: str = 'e1') -> Iterable[WalkState]:
    """Evolve walkers one at a time (stream id = walker index); mostly for checks."""
    for walker in range(walkers):
        state = WalkState.start(n, RandomStream(seed, walker), start)
        for _ in range(steps):
            state = step(state)
        yield state
