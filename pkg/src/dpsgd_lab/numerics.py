"""Vector helpers, seeded random streams and Euclidean ball projection.

Normal draws come from numpy's ``Generator.standard_normal`` (ziggurat) on a
PCG64 bit generator keyed by ``SeedSequence(seed, spawn_key=(stream,))``. The
sequence is reproducible for a fixed numpy version.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INDEX_STREAM = 0
NOISE_STREAM = 1
DATA_STREAM = 2


def as_vector(w) -> np.ndarray:
    v = np.asarray(w, dtype=float)
    if v.ndim != 1:
        raise ValueError("vector must be one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite vector")
    return v


def project_ball(w, radius: float) -> np.ndarray:
    """Project ``w`` onto the centered Euclidean ball of the given radius.

    ``radius=math.inf`` means unconstrained.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = as_vector(w)
    if math.isinf(radius):
        return v.copy()
    norm = math.sqrt(float(v @ v))
    if norm <= radius:
        return v.copy()
    return v * (radius / norm)


@dataclass
class RngState:
    """A named random stream. Equal (seed, stream) pairs replay identically."""

    seed: int
    stream: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream must be nonnegative")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def gaussian_vector(rng: RngState, d: int, sigma: float) -> np.ndarray:
    if d < 1:
        raise ValueError("d must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    z = rng.generator.standard_normal(d)
    return z * sigma


def gaussian_matrix(rng: RngState, rows: int, d: int, sigma: float) -> np.ndarray:
    """``rows`` consecutive noise vectors, identical to ``rows`` calls of
    :func:`gaussian_vector`."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return rng.generator.standard_normal((rows, d)) * sigma


def uniform_index(rng: RngState, n: int) -> int:
    """Uniform draw from 1..n (1-based, as in the algorithm statement)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return int(rng.generator.integers(0, n)) + 1


def uniform_indices(rng: RngState, n: int, size: int) -> np.ndarray:
    """``size`` 0-based uniform indices in [0, n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.generator.integers(0, n, size=size)


def uniform_distinct_pair(rng: RngState, n: int) -> tuple[int, int]:
    """Uniform ordered pair (i, j), i != j, 1-based."""
    i, j = uniform_distinct_pairs(rng, n, 1)
    return int(i[0]) + 1, int(j[0]) + 1


def uniform_distinct_pairs(rng: RngState, n: int, size: int):
    # rejection-free: j drawn from n-1 values then shifted past i
    if n < 2:
        raise ValueError("pairwise learning needs n >= 2")
    g = rng.generator
    i = g.integers(0, n, size=size)
    j = g.integers(0, n - 1, size=size)
    j = j + (j >= i)
    return i, j


def uniform_sphere(gen: np.random.Generator, size: int, d: int, radius: float) -> np.ndarray:
    z = gen.standard_normal((size, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * radius


def derive_seed(*parts: int) -> int:
    """Deterministic 63-bit seed from integer parts."""
    hi, lo = np.random.SeedSequence([int(p) for p in parts]).generate_state(2)
    return ((int(hi) << 32) | int(lo)) >> 1
