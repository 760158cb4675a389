"""Geometry and randomness primitives for walks on S^{n-1}.

Coordinates are 1-based in the public types (``RotationEvent(1, 2, theta)``
rotates the x_1 ∧ x_2 plane) and 0-based in every array helper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import ParameterError

TWO_PI = 2.0 * math.pi
NORM_TOLERANCE = 1e-12
UINT64_LIMIT = 2 ** 64


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 1 or coords.size < 2:
            raise ParameterError(f"a sphere point needs n >= 2 coordinates, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ParameterError("sphere point coordinates must be finite")
        if abs(float(coords @ coords) - 1.0) > NORM_TOLERANCE:
            raise ParameterError(f"|x|^2 = {float(coords @ coords)!r} is not 1 within {NORM_TOLERANCE}")
        coords.flags.writeable = False
        object.__setattr__(self, 'coords', coords)

    @property
    def n(self) -> int:
        return self.coords.size

    @classmethod
    def normalized(cls, coords) -> SpherePoint:
        coords = np.asarray(coords, dtype=np.float64)
        norm = np.linalg.norm(coords)
        if norm == 0.0:
            raise ParameterError("cannot project the zero vector onto the sphere")
        return cls(coords / norm)

    @classmethod
    def basis(cls, n: int, i: int = 1) -> SpherePoint:
        """The standard basis vector e_i of R^n."""
        if n < 2 or not 1 <= i <= n:
            raise ParameterError(f"e_{i} is not a basis vector of R^{n}")
        coords = np.zeros(n)
        coords[i - 1] = 1.0
        return cls(coords)

    def __eq__(self, other):
        if not isinstance(other, SpherePoint):
            return NotImplemented
        return np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())


@dataclass(frozen=True)
class RotationEvent:
    """A Givens rotation of the (i, j) coordinate plane; i < j, 1-based."""

    i: int
    j: int
    theta: float

    def __post_init__(self):
        i, j = sorted((int(self.i), int(self.j)))
        if i < 1 or i == j:
            raise ParameterError(f"({self.i}, {self.j}) is not a coordinate pair")
        if not math.isfinite(self.theta):
            raise ParameterError(f"rotation angle must be finite, got {self.theta!r}")
        object.__setattr__(self, 'i', i)
        object.__setattr__(self, 'j', j)
        theta = math.fmod(self.theta, TWO_PI) % TWO_PI
        # tiny negative angles round up to 2pi
        object.__setattr__(self, 'theta', 0.0 if theta >= TWO_PI else theta)


class RandomStream:
    """A counter-based random stream keyed by (master_seed, stream_id).

    Backed by the Philox bit generator: the key is the pair of 64-bit words
    (master_seed, stream_id) and ``counter`` is the Philox block counter, so a
    stream can be recreated at any position without replaying earlier draws.
    Distinct stream ids give independent sequences.
    """

    def __init__(self, master_seed: int, stream_id: int = 0, counter: int = 0):
        for label, value in (('master_seed', master_seed), ('stream_id', stream_id)):
            if not 0 <= int(value) < UINT64_LIMIT:
                raise ParameterError(f"{label} must be a 64-bit unsigned integer, got {value}")
        if int(counter) < 0:
            raise ParameterError(f"counter must be non-negative, got {counter}")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self._bit_generator = np.random.Philox(key=key, counter=int(counter))
        self.generator = np.random.Generator(self._bit_generator)

    @property
    def counter(self) -> int:
        words = self._bit_generator.state['state']['counter']
        return sum(int(word) << (64 * position) for position, word in enumerate(words))

    def spawn(self, stream_id: int) -> RandomStream:
        return RandomStream(self.master_seed, stream_id)

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, stream_id={self.stream_id}, counter={self.counter})"


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


@lru_cache(maxsize=64)
def pair_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based (I, J) arrays of the C(n,2) pairs in row-major order over i < j."""
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    rows, cols = np.triu_indices(n, k=1)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def pair_index(n: int, i: int, j: int) -> int:
    """Row-major index of the 1-based pair {i, j}."""
    i, j = sorted((i, j))
    if not 1 <= i < j <= n:
        raise ParameterError(f"({i}, {j}) is not a pair of coordinates of R^{n}")
    i0, j0 = i - 1, j - 1
    return i0 * n - i0 * (i0 + 1) // 2 + (j0 - i0 - 1)


def rotate(x: SpherePoint, ev: RotationEvent) -> SpherePoint:
    """x_i' = x_i cos t - x_j sin t, x_j' = x_i sin t + x_j cos t, so a quarter turn of (1, 2) takes e1 to e2."""
    if ev.j > x.n:
        raise ParameterError(f"pair ({ev.i}, {ev.j}) is out of range for n = {x.n}")
    c, s = math.cos(ev.theta), math.sin(ev.theta)
    coords = x.coords.copy()
    xi, xj = coords[ev.i - 1], coords[ev.j - 1]
    coords[ev.i - 1] = xi * c - xj * s
    coords[ev.j - 1] = xi * s + xj * c
    # Single rotations stay within a few ulps of the sphere; re-project only
    # when the drift would trip the construction check.
    if abs(float(coords @ coords) - 1.0) > NORM_TOLERANCE:
        coords /= np.linalg.norm(coords)
    return SpherePoint(coords)


def rotate_points(points: np.ndarray, i: int, j: int, theta) -> np.ndarray:
    """Rotate every row of ``points`` in the 0-based (i, j) plane, returning a copy."""
    rotated = np.array(points, dtype=np.float64, copy=True)
    c, s = np.cos(theta), np.sin(theta)
    xi, xj = points[:, i], points[:, j]
    rotated[:, i] = xi * c - xj * s
    rotated[:, j] = xi * s + xj * c
    return rotated


def renormalize(points: np.ndarray) -> np.ndarray:
    """Project rows back onto the unit sphere in place."""
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    return points


def sample_uniform_points(n: int, size: int, rng: RandomStream) -> np.ndarray:
    """``size`` independent uniform points on S^{n-1} as a (size, n) array."""
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    gaussians = rng.generator.standard_normal((size, n))
    norms = np.linalg.norm(gaussians, axis=1)
    # A zero Gaussian vector has probability zero; redraw rather than divide.
    while np.any(norms == 0.0):
        bad = norms == 0.0
        gaussians[bad] = rng.generator.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(gaussians, axis=1)
    return gaussians / norms[:, None]


def sample_uniform_sphere(n: int, rng: RandomStream) -> SpherePoint:
    return SpherePoint(sample_uniform_points(n, 1, rng)[0])


def draw_rotation_event(n: int, rng: RandomStream) -> RotationEvent:
    rows, cols = pair_table(n)
    index = int(rng.generator.integers(pair_count(n)))
    theta = float(rng.generator.random()) * TWO_PI
    return RotationEvent(int(rows[index]) + 1, int(cols[index]) + 1, theta)
