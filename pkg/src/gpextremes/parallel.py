"""Replication blocking shared by the Monte Carlo estimators.

Replications are split into fixed-size blocks; block b always draws from
the caller's stream child ("block", b), and partial results merge in block
order.  Worker count therefore changes wall time only, never a single bit
of the output.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 2048


def block_sizes(total: int, block_size: int = BLOCK_SIZE):
    """Sizes of the consecutive blocks covering ``total`` replications."""
    out = []
    left = int(total)
    while left > 0:
        take = min(block_size, left)
        out.append(take)
        left -= take
    return out


def map_blocks(fn, n_blocks: int, workers: int = 1):
    """Apply ``fn(block_index)`` to every block, results in block order."""
    if workers <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


@dataclass
class RunningMoments:
    """Count / mean / M2 accumulator with numerically stable merging."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_values(cls, values) -> "RunningMoments":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            return cls()
        mu = float(values.mean())
        return cls(n, mu, float(((values - mu) ** 2).sum()))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningMoments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def se_of_mean(self) -> float:
        return float(np.sqrt(self.variance / self.count)) if self.count > 0 else 0.0


def merge_moments(parts) -> RunningMoments:
    total = RunningMoments()
    for part in parts:
        total = total.merge(part)
    return total
