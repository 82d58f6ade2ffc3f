"""Augmented random search primitives.

Running state normalization, the shared Gaussian noise table, antithetic
policy evaluation, top-direction selection and the reward-std scaled update.
All functions here are pure; the trainer owns the iteration loop.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VAR_FLOOR = 1e-8
SIGMA_R_FLOOR = 1e-8
NOISE_MAGIC = b"ARSNOISE"
DEFAULT_TABLE_SIZE = 2**22

# SeedSequence spawn keys; keep table and offset streams independent
_TABLE_STREAM = 0
_OFFSET_STREAM = 1


@dataclass(frozen=True)
class NormalizerStats:
    """Welford accumulator over n-dimensional observations.

    Before any observation the mean is zero and the variance is treated as
    one, so :func:`normalize` is the identity.
    """

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> "NormalizerStats":
        return cls(0, np.zeros(dim), np.zeros(dim))

    @classmethod
    def from_batch(cls, xs) -> "NormalizerStats":
        """Two-pass statistics of the rows of ``xs``."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2:
            raise ValueError("from_batch expects a 2-D array of observations")
        if len(xs) == 0:
            return cls.empty(xs.shape[1])
        mean = xs.mean(axis=0)
        return cls(len(xs), mean, ((xs - mean) ** 2).sum(axis=0))

    @property
    def dim(self) -> int:
        return len(self.mean)

    @property
    def variance(self) -> np.ndarray:
        """Population variance ``m2 / count``; ones before any data."""
        if self.count == 0:
            return np.ones(self.dim)
        return self.m2 / self.count

    @property
    def scale(self) -> np.ndarray:
        """Per-coordinate divisor used by :func:`normalize`."""
        if self.count == 0:
            return np.ones(self.dim)
        return np.sqrt(np.maximum(self.variance, VAR_FLOOR))


def normalizer_observe(stats: NormalizerStats, x) -> NormalizerStats:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != stats.mean.shape:
        raise ValueError(f"observation shape {x.shape} does not match {stats.mean.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("observation is not finite")
    count = stats.count + 1
    delta = x - stats.mean
    mean = stats.mean + delta / count
    m2 = stats.m2 + delta * (x - mean)
    return NormalizerStats(count, mean, m2)


def normalizer_merge(a: NormalizerStats, b: NormalizerStats) -> NormalizerStats:
    """Combine two accumulators as if ``b``'s stream followed ``a``'s (Chan et al.)."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    count = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / count)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / count)
    return NormalizerStats(count, mean, m2)


def normalize(x, stats: NormalizerStats) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.scale


def perturbed_matrix(M: np.ndarray, delta: np.ndarray | None, sign: int, noise_std: float) -> np.ndarray:
    if sign not in (-1, 0, 1):
        raise ValueError(f"sign must be -1, 0 or +1, got {sign}")
    if sign == 0 or delta is None:
        return np.array(M, dtype=np.float64)
    if delta.shape != M.shape:
        raise ValueError(f"direction shape {delta.shape} does not match policy {M.shape}")
    return M + (sign * noise_std) * delta


def policy_action(
    M: np.ndarray,
    delta: np.ndarray | None,
    sign: int,
    noise_std: float,
    stats: NormalizerStats,
    x,
) -> np.ndarray:
    """Evaluate the linear policy ``(M + sign * noise_std * delta) @ normalize(x)``."""
    W = perturbed_matrix(M, delta, sign, noise_std)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (W.shape[1],) or stats.dim != W.shape[1]:
        raise ValueError(f"state of shape {x.shape} does not fit a {W.shape} policy")
    return W @ normalize(x, stats)


# -- shared noise table -----------------------------------------------------


@dataclass(frozen=True)
class NoiseTable:
    """Flat block of i.i.d. standard normals shared by every rollout worker."""

    noise: np.ndarray

    @classmethod
    def generate(cls, seed: int, size: int = DEFAULT_TABLE_SIZE) -> "NoiseTable":
        ss = np.random.SeedSequence([int(seed), _TABLE_STREAM])
        noise = np.random.Generator(np.random.PCG64(ss)).standard_normal(size)
        noise.flags.writeable = False
        return cls(noise)

    def __len__(self) -> int:
        return len(self.noise)

    def get(self, offset: int, shape: tuple[int, int]) -> np.ndarray:
        size = shape[0] * shape[1]
        if offset < 0 or offset + size > len(self.noise):
            raise IndexError(f"slice [{offset}, {offset + size}) outside noise table")
        return self.noise[offset : offset + size].reshape(shape)

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(NOISE_MAGIC)
            fh.write(struct.pack("<Q", len(self.noise)))
            fh.write(self.noise.astype("<f8", copy=False).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "NoiseTable":
        data = Path(path).read_bytes()
        if data[:8] != NOISE_MAGIC:
            raise ValueError(f"{path}: not a noise table (bad magic)")
        (count,) = struct.unpack("<Q", data[8:16])
        if len(data) != 16 + 8 * count:
            raise ValueError(f"{path}: expected {count} entries, file size disagrees")
        noise = np.frombuffer(data, dtype="<f8", offset=16).astype(np.float64)
        noise.flags.writeable = False
        return cls(noise)


def offset_stream(master_seed: int, iteration: int) -> np.random.Generator:
    """Generator used to draw direction offsets for one iteration."""
    ss = np.random.SeedSequence([int(master_seed), _OFFSET_STREAM, int(iteration)])
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class DirectionBatch:
    deltas: list[np.ndarray]
    offsets: list[int]
    rewards_plus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rewards_minus: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.deltas)


def sample_directions(
    table: NoiseTable, rng: np.random.Generator, num_directions: int, m: int, n: int
) -> DirectionBatch:
    """Draw ``num_directions`` m-by-n perturbations as contiguous table slices."""
    size = m * n
    if len(table) < size:
        raise ValueError(f"noise table has {len(table)} entries, need at least {size}")
    offsets = [int(o) for o in rng.integers(0, len(table) - size + 1, size=num_directions)]
    return DirectionBatch([table.get(o, (m, n)) for o in offsets], offsets)


def select_top(batch: DirectionBatch, b: int) -> list[tuple[int, np.ndarray, float, float]]:
    """The ``b`` directions with the largest ``max(r+, r-)``, best first.

    Ties go to the lower direction index. Returns ``(index, delta, r+, r-)``.
    """
    n = len(batch)
    if not 1 <= b <= n:
        raise ValueError(f"top-direction count {b} must lie in [1, {n}]")
    if len(batch.rewards_plus) != n or len(batch.rewards_minus) != n:
        raise ValueError("rewards must be populated for every direction")
    keys = np.maximum(batch.rewards_plus, batch.rewards_minus)
    order = sorted(range(n), key=lambda k: (-keys[k], k))[:b]
    return [
        (k, batch.deltas[k], float(batch.rewards_plus[k]), float(batch.rewards_minus[k]))
        for k in order
    ]


def reward_std(rewards) -> float:
    """Population standard deviation, summed exactly so input order is irrelevant."""
    rewards = [float(r) for r in rewards]
    mean = math.fsum(rewards) / len(rewards)
    return math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / len(rewards))


def ars_update(M: np.ndarray, top, step_size: float) -> tuple[np.ndarray, float]:
    """Apply one ARS step; returns the new matrix and the reward std used.

    ``top`` holds ``(delta, r_plus, r_minus)`` triples (a leading direction
    index, as produced by :func:`select_top`, is accepted and ignored).
    Products are accumulated with ``math.fsum`` so the result does not depend
    on the order of ``top``. When the reward std is below ``SIGMA_R_FLOOR``
    the matrix is returned unchanged.
    """
    top = [t[-3:] for t in top]
    if not top:
        raise ValueError("ars_update needs at least one direction")
    sigma = reward_std([r for _, rp, rm in top for r in (rp, rm)])
    M = np.asarray(M, dtype=np.float64)
    if sigma < SIGMA_R_FLOOR:
        return M.copy(), sigma
    weights = [float(rp) - float(rm) for _, rp, rm in top]
    flat = [np.asarray(d, dtype=np.float64).ravel().tolist() for d, _, _ in top]
    step = np.array(
        [math.fsum(w * d[j] for w, d in zip(weights, flat)) for j in range(M.size)]
    ).reshape(M.shape)
    return M + (step_size / (len(top) * sigma)) * step, sigma
