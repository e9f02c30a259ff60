"""Exponential-weighted volume of a union of downward orthants.

For a finite cloud P in R^n the quantity computed here is

    EWV(P) = integral over R^n of exp(w_1 + ... + w_n)
             on the region { w : w < p componentwise for some p in P },

the inner integral behind every window constant in this package.  Only the
Pareto-maximal points matter.  n = 1 is exp(max); n = 2 is an O(m log m)
staircase sweep; n >= 3 uses inclusion-exclusion over the Pareto set up to
a combinatorial cap, beyond which the Monte Carlo estimator takes over.
All exponentials are max-shifted, which keeps coordinates beyond +-700 from
overflowing.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import CapacityError, DomainError
from .rng import RngStream

__all__ = ["PointCloud", "pareto_prune", "ewv_exact", "ewv_mc", "ewv_batch", "EXACT_PARETO_CAP"]

EXACT_PARETO_CAP = 22
_TERM_CUTOFF = 1e-16


@dataclass(frozen=True)
class PointCloud:
    """Finite set of points in R^n (rows of ``points``)."""

    dim: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DomainError(f"points shape {pts.shape} incompatible with dim {self.dim}")
        if pts.shape[0] < 1:
            raise DomainError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise DomainError("all points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]


def _pareto_mask(pts: np.ndarray) -> np.ndarray:
    """Boolean mask of componentwise-maximal rows.

    Weak domination (<= everywhere, < somewhere) prunes; exact duplicates
    keep their first occurrence.
    """
    m = pts.shape[0]
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        ge = (pts >= pts[i]).all(axis=1)
        gt = (pts > pts[i]).any(axis=1)
        if np.any(ge & gt):
            keep[i] = False
            continue
        eq = ge & ~gt
        if eq[:i].any():
            keep[i] = False
    return keep


def pareto_prune(cloud: PointCloud) -> PointCloud:
    """Componentwise-maximal subset of the cloud; EWV is unchanged."""
    return PointCloud(cloud.dim, cloud.points[_pareto_mask(cloud.points)])


def _ewv_staircase_log_rows(x: np.ndarray, y: np.ndarray):
    """(shift, mantissa) of the n=2 sweep: EWV = exp(shift) * mantissa per row.

    Sorting by x descending makes the Pareto staircase the strict running
    records of y; the union region decomposes into horizontal strips whose
    weighted measures are exp(x_k) * (exp(y_k) - exp(y_prev)).
    """
    order = np.argsort(-x, axis=1, kind="stable")
    xs = np.take_along_axis(x, order, axis=1)
    ys = np.take_along_axis(y, order, axis=1)
    m1 = xs[:, :1]
    m2 = ys.max(axis=1, keepdims=True)
    run = np.maximum.accumulate(ys, axis=1)
    prev = np.concatenate([np.full((ys.shape[0], 1), -np.inf), run[:, :-1]], axis=1)
    kept = ys > prev
    strips = np.where(kept, np.exp(xs - m1) * (np.exp(ys - m2) - np.exp(prev - m2)), 0.0)
    return m1[:, 0] + m2[:, 0], strips.sum(axis=1)


def _ewv_staircase_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    shift, mantissa = _ewv_staircase_log_rows(x, y)
    return np.exp(shift) * mantissa


def _ewv_inclusion_exclusion(pts: np.ndarray) -> float:
    """Signed sum of exp(sum_i min_J p_i) over nonempty subsets of the Pareto set.

    Enumerated by cardinality; once a whole cardinality level's largest term
    falls below 1e-16 of the running sum, deeper levels cannot matter.
    """
    shift = pts.max(axis=0)
    q = pts - shift
    K = q.shape[0]
    total = 0.0
    for card in range(1, K + 1):
        sign = 1.0 if card % 2 == 1 else -1.0
        level_max = 0.0
        level_sum = 0.0
        chunk = []
        for combo in combinations(range(K), card):
            chunk.append(combo)
            if len(chunk) == 65536:
                terms = np.exp(q[np.asarray(chunk)].min(axis=1).sum(axis=1))
                level_sum += terms.sum()
                level_max = max(level_max, terms.max())
                chunk = []
        if chunk:
            terms = np.exp(q[np.asarray(chunk)].min(axis=1).sum(axis=1))
            level_sum += terms.sum()
            level_max = max(level_max, terms.max())
        total += sign * level_sum
        if level_max < _TERM_CUTOFF * abs(total):
            break
    return float(np.exp(shift.sum()) * total)


def ewv_exact(cloud: PointCloud) -> float:
    """Exact exponential-weighted orthant-union volume.

    n >= 3 requires the Pareto set to stay within ``EXACT_PARETO_CAP``
    points; beyond that a :class:`CapacityError` tells the caller to switch
    to :func:`ewv_mc`.
    """
    pts = cloud.points
    if cloud.dim == 1:
        return float(np.exp(pts[:, 0].max()))
    if cloud.dim == 2:
        return float(_ewv_staircase_rows(pts[None, :, 0], pts[None, :, 1])[0])
    pruned = pts[_pareto_mask(pts)]
    if pruned.shape[0] > EXACT_PARETO_CAP:
        raise CapacityError(
            f"Pareto set of size {pruned.shape[0]} exceeds the inclusion-exclusion "
            f"cap {EXACT_PARETO_CAP}; use ewv_mc"
        )
    return _ewv_inclusion_exclusion(pruned)


def ewv_mc(cloud: PointCloud, budget: int, stream: RngStream):
    """Unbiased Monte Carlo estimate of EWV with its standard error.

    With M the componentwise maximum, draws w = M - E (E unit-mean
    exponentials): the coverage fraction times exp(sum M) is unbiased for
    EWV because the weighted region is contained in the orthant below M.
    """
    if budget < 100:
        raise DomainError(f"budget must be >= 100, got {budget}")
    gen = stream.generator()
    pts = cloud.points
    M = pts.max(axis=0)
    scale = float(np.exp(M.sum()))
    covered = np.zeros(budget, dtype=bool)
    w = M - gen.exponential(size=(budget, cloud.dim))
    for p in pts:
        covered |= (w < p).all(axis=1)
        if covered.all():
            break
    frac = covered.mean()
    se = scale * float(np.sqrt(frac * (1.0 - frac) / budget))
    return scale * float(frac), se


def ewv_batch(points: np.ndarray, mc_budget: int = 2048, gen: np.random.Generator | None = None) -> np.ndarray:
    """EWV of many clouds at once; ``points`` has shape (R, m, n).

    n in {1, 2} is exact and fully vectorized; n >= 3 falls back to the
    Monte Carlo estimator per cloud (unbiased, so replication averages stay
    unbiased), drawing from ``gen`` in replication order.
    """
    points = np.asarray(points, dtype=float)
    R, _, n = points.shape
    if n == 1:
        return np.exp(points[:, :, 0].max(axis=1))
    if n == 2:
        return _ewv_staircase_rows(points[:, :, 0], points[:, :, 1])
    if gen is None:
        raise DomainError("n >= 3 batches need a generator for the MC fallback")
    out = np.empty(R)
    for r in range(R):
        pts = points[r]
        M = pts.max(axis=0)
        w = M - gen.exponential(size=(mc_budget, n))
        covered = np.zeros(mc_budget, dtype=bool)
        for p in pts[_pareto_mask(pts)]:
            covered |= (w < p).all(axis=1)
        out[r] = np.exp(M.sum()) * covered.mean()
    return out
