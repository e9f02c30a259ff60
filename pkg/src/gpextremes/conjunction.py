"""Direct Monte Carlo for conjunction probabilities and inequality audits.

A conjunction hit is a replication whose sampled vector path has some grid
node where every coordinate exceeds its threshold.  The default grid step
resolves the u^(-2/kappa) mesoscale of the local-window theory; nested
refinement (evaluating strided subsets of one fine-grid batch) makes the
discretization bias monotone and exactly measurable per replication.

The audits turn the comparison inequalities into empirical verdicts:
correlation dominance must not raise the conjunction probability
(Slepian), the variance-weighted mixture bounds the tail by a Gaussian
concentration term (Borell-TIS), and the normalized tail stays bounded by
the polynomially corrected concentration rate (Piterbarg).  All audits are
conservative: preconditions that fail make the audit inapplicable rather
than failed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import AsymptoticApproximation
from .errors import DomainError, PreconditionError
from .parallel import block_sizes, map_blocks, merge_moments, RunningMoments
from .processes import (
    FractionalBrownian,
    LocallyStationary,
    NonStationary,
    Stationary,
    VectorProcessSpec,
    coord_covariance,
    coord_variance,
    ensure_valid,
)
from .rng import RngStream
from .sampling import SampleGrid, sample_vector

__all__ = [
    "ProbEstimate",
    "BorellReport",
    "SlepianReport",
    "DoubleEventResult",
    "PiterbargDecayReport",
    "RatioReport",
    "default_grid_step",
    "estimate_conjunction_prob",
    "conjunction_prob_nested",
    "estimate_double_event",
    "audit_slepian",
    "audit_borell",
    "audit_piterbarg_decay",
    "compare_with_asymptotic",
]


@dataclass(frozen=True)
class ProbEstimate:
    """Binomial hit-probability estimate; zero hits report the rule-of-three bound."""

    value: float
    se: float
    hits: int
    replications: int
    grid_step: float
    notes: str = ""


def _prob_from_hits(hits, R, grid_step) -> ProbEstimate:
    p = hits / R
    if hits == 0:
        return ProbEstimate(0.0, 3.0 / R, 0, R, grid_step, "rare event: zero hits; se is the rule-of-three bound 3/R")
    return ProbEstimate(p, math.sqrt(p * (1.0 - p) / R), int(hits), R, grid_step)


def default_grid_step(horizon_T, u, kappa_min) -> float:
    """min(T/1024, 0.1 u^(-2/kappa_min)): resolves the local-window mesoscale."""
    return min(float(horizon_T) / 1024.0, 0.1 * float(u) ** (-2.0 / float(kappa_min)))


def _threshold_matrix(thresholds, n):
    thr = np.asarray(thresholds, dtype=float)
    if thr.ndim == 1:
        thr = thr[None, :]
    if thr.ndim != 2 or thr.shape[1] != n:
        raise DomainError(f"thresholds shape {thr.shape} incompatible with n={n}")
    return thr


def _scan_hits(spec, thr, grid, R, stream, workers, strides=(1,)):
    """Hit counts with shape (len(thr), len(strides)), shared paths throughout."""
    def run_block(b):
        sizes = block_sizes(R)
        batch = sample_vector(spec, grid, sizes[b], stream.child("block", b))
        counts = np.zeros((thr.shape[0], len(strides)), dtype=np.int64)
        for j, row in enumerate(thr):
            exceed_all = (batch.values > row[None, :, None]).all(axis=1)  # (Rb, m)
            for k, stride in enumerate(strides):
                counts[j, k] = int(exceed_all[:, ::stride].any(axis=1).sum())
        return counts

    n_blocks = len(block_sizes(R))
    return sum(map_blocks(run_block, n_blocks, workers))


def estimate_conjunction_prob(
    spec: VectorProcessSpec,
    thresholds,
    grid: SampleGrid,
    R: int,
    stream: RngStream,
    workers: int = 1,
):
    """P(some grid node has every coordinate above its threshold).

    ``thresholds`` is a realized vector f(u) of length n, or a stack of such
    vectors evaluated on shared paths (a higher threshold then never gains a
    hit a lower one missed, making monotonicity in u exact per replication).
    Returns one estimate or a list matching the stack.
    """
    ensure_valid(spec)
    if R < 1000:
        raise DomainError("R must be >= 1000")
    thr = _threshold_matrix(thresholds, spec.n)
    counts = _scan_hits(spec, thr, grid, R, stream, workers)
    out = [_prob_from_hits(int(c[0]), R, grid.step) for c in counts]
    return out[0] if np.asarray(thresholds).ndim == 1 else out


def conjunction_prob_nested(
    spec: VectorProcessSpec,
    thresholds,
    grid: SampleGrid,
    strides,
    R: int,
    stream: RngStream,
    workers: int = 1,
):
    """Conjunction estimates on nested node subsets of one fine grid.

    ``strides`` are decreasing positive ints (e.g. (4, 2, 1)); stride s uses
    every s-th node.  Because node sets nest and paths are shared, the hit
    indicator is monotone under refinement, exactly.
    """
    ensure_valid(spec)
    strides = tuple(int(s) for s in strides)
    if any(s < 1 for s in strides):
        raise DomainError("strides must be positive")
    thr = _threshold_matrix(thresholds, spec.n)
    if thr.shape[0] != 1:
        raise DomainError("nested mode takes a single threshold vector")
    counts = _scan_hits(spec, thr, grid, R, stream, workers, strides=strides)
    return [_prob_from_hits(int(c), R, grid.step * s) for c, s in zip(counts[0], strides)]


@dataclass(frozen=True)
class DoubleEventResult:
    offsets: tuple
    joint: tuple  # ProbEstimate per offset
    single_window: ProbEstimate


def estimate_double_event(
    spec: VectorProcessSpec,
    u,
    S,
    t0_offsets,
    R: int,
    stream: RngStream,
    workers: int = 1,
    nodes_per_window: int = 64,
) -> DoubleEventResult:
    """Joint exceedance of two mesoscale windows at increasing separations.

    Windows are [0, S] u^(-2/kappa) and [t0, t0+S] u^(-2/kappa) with all
    offsets t0 > S > 1; paths are shared across offsets for variance
    reduction.  Offsets snap to the window grid.
    """
    ensure_valid(spec)
    if not all(isinstance(c, Stationary) for c in spec.coords):
        raise DomainError("double-event windows are defined for stationary coordinates")
    u = float(u)
    S = float(S)
    offsets = [float(t) for t in t0_offsets]
    if not S > 1:
        raise DomainError("S must exceed 1")
    if any(b <= a for a, b in zip(offsets, offsets[1:])) or offsets[0] <= S:
        raise DomainError("t0_offsets must be increasing with every offset > S")
    kappa = min(c.kappa for c in spec.coords)
    scale = u ** (-2.0 / kappa)
    step = S * scale / nodes_per_window
    span = (offsets[-1] + S) * scale
    if span > spec.horizon_T:
        raise DomainError(f"windows span {span:.4g}, beyond the horizon {spec.horizon_T}")
    count = int(round((offsets[-1] + S) / S * nodes_per_window)) + 1
    grid = SampleGrid(0.0, step, count)
    starts = [int(round(off / S * nodes_per_window)) for off in offsets]
    thr = np.full(spec.n, u)

    def run_block(b):
        sizes = block_sizes(R)
        batch = sample_vector(spec, grid, sizes[b], stream.child("block", b))
        exceed_all = (batch.values > thr[None, :, None]).all(axis=1)  # (Rb, m)
        hit0 = exceed_all[:, : nodes_per_window + 1].any(axis=1)
        single = int(hit0.sum())
        joint = [
            int((hit0 & exceed_all[:, s : s + nodes_per_window + 1].any(axis=1)).sum())
            for s in starts
        ]
        return np.asarray([single] + joint, dtype=np.int64)

    n_blocks = len(block_sizes(R))
    counts = sum(map_blocks(run_block, n_blocks, workers))
    single = _prob_from_hits(int(counts[0]), R, step)
    joint = tuple(_prob_from_hits(int(c), R, step) for c in counts[1:])
    return DoubleEventResult(tuple(offsets), joint, single)


# -- audits ---------------------------------------------------------------------


@dataclass(frozen=True)
class SlepianReport:
    p_dominating: ProbEstimate
    p_dominated: ProbEstimate
    pooled_se: float
    verdict: str  # pass | fail


def audit_slepian(
    specA: VectorProcessSpec,
    specB: VectorProcessSpec,
    thresholds,
    grid: SampleGrid,
    R: int,
    stream: RngStream,
    workers: int = 1,
) -> SlepianReport:
    """Correlation dominance must not raise the conjunction probability.

    Applicable only when the two specs match variances on the grid within
    1e-12 and A's coordinate covariances dominate B's everywhere on the
    grid; then the verdict passes iff P_A <= P_B + 3 pooled se.
    """
    ensure_valid(specA)
    ensure_valid(specB)
    if specA.n != specB.n:
        raise PreconditionError("specs must have the same number of coordinates")
    nodes = grid.nodes()
    for i, (ca, cb) in enumerate(zip(specA.coords, specB.coords)):
        va = np.asarray(coord_variance(ca, nodes))
        vb = np.asarray(coord_variance(cb, nodes))
        if np.abs(va - vb).max() > 1e-12 * max(1.0, float(np.abs(va).max())):
            raise PreconditionError(f"coordinate {i}: variance profiles differ on the grid")
        cov_a = np.asarray(coord_covariance(ca, nodes[:, None], nodes[None, :]))
        cov_b = np.asarray(coord_covariance(cb, nodes[:, None], nodes[None, :]))
        if np.min(cov_a - cov_b) < -1e-12:
            raise PreconditionError(f"coordinate {i}: covariance dominance fails on the grid")
    thr = np.asarray(thresholds, dtype=float)
    pa = estimate_conjunction_prob(specA, thr, grid, R, stream.child("dominating"), workers)
    pb = estimate_conjunction_prob(specB, thr, grid, R, stream.child("dominated"), workers)
    pooled = math.hypot(pa.se, pb.se)
    verdict = "pass" if pa.value <= pb.value + 3.0 * pooled else "fail"
    return SlepianReport(pa, pb, pooled, verdict)


@dataclass(frozen=True)
class BorellReport:
    tau_sq: float
    mu_hat: float
    mu_se: float
    bound_at_u: float
    empirical_at_u: ProbEstimate
    verdict: str  # pass | inconclusive | fail


def _variance_weights(spec, nodes):
    """Mixture weights lambda_i(t) proportional to 1/sigma_i^2(t); rows sum to 1.

    Nodes where some coordinate is degenerate (zero variance) give those
    coordinates the whole weight -- their path values are a.s. zero there.
    """
    sig2 = np.stack([np.broadcast_to(coord_variance(c, nodes), nodes.shape) for c in spec.coords])
    with np.errstate(divide="ignore"):
        w = 1.0 / sig2
    g = w.sum(axis=0)
    lam = np.zeros_like(w)
    finite = np.isfinite(g)
    lam[:, finite] = w[:, finite] / g[finite]
    if (~finite).any():
        degenerate = np.isinf(w[:, ~finite])
        lam[:, ~finite] = degenerate / degenerate.sum(axis=0)
    return lam, g


def audit_borell(
    spec: VectorProcessSpec,
    u_ladder,
    grid: SampleGrid,
    R: int,
    stream: RngStream,
    workers: int = 1,
) -> list:
    """Gaussian concentration audit of the conjunction tail.

    tau^2 is the grid infimum of the generalized variance; mu is the Monte
    Carlo mean of the supremum of the variance-weighted coordinate mixture,
    inflated by 3 se so noise can only make the audit inconclusive, never
    falsely failing.  For each u > mu the empirical tail must not exceed
    exp(-(u - mu)^2 tau^2 / 2).
    """
    ensure_valid(spec)
    us = [float(u) for u in u_ladder]
    nodes = grid.nodes()
    lam, g = _variance_weights(spec, nodes)
    finite_g = g[np.isfinite(g)]
    if finite_g.size == 0 or finite_g.min() <= 0:
        raise PreconditionError("tau^2 must be positive on the grid")
    tau_sq = float(finite_g.min())
    thr = np.asarray([[u] * spec.n for u in us])

    def run_block(b):
        sizes = block_sizes(R)
        batch = sample_vector(spec, grid, sizes[b], stream.child("block", b))
        sup_mix = np.einsum("rnm,nm->rm", batch.values, lam).max(axis=1)
        counts = np.asarray(
            [
                int((batch.values > row[None, :, None]).all(axis=1).any(axis=1).sum())
                for row in thr
            ],
            dtype=np.int64,
        )
        return RunningMoments.from_values(sup_mix), counts

    n_blocks = len(block_sizes(R))
    parts = map_blocks(run_block, n_blocks, workers)
    moments = merge_moments([p[0] for p in parts])
    counts = sum(p[1] for p in parts)
    mu_hat = moments.mean
    mu_se = moments.se_of_mean
    mu_conservative = mu_hat + 3.0 * mu_se

    reports = []
    for u, hits in zip(us, counts):
        emp = _prob_from_hits(int(hits), R, grid.step)
        if u <= mu_conservative:
            reports.append(BorellReport(tau_sq, mu_hat, mu_se, math.nan, emp, "inconclusive"))
            continue
        bound = math.exp(-0.5 * (u - mu_conservative) ** 2 * tau_sq)
        verdict = "pass" if emp.value <= bound else "fail"
        reports.append(BorellReport(tau_sq, mu_hat, mu_se, bound, emp, verdict))
    return reports


@dataclass(frozen=True)
class PiterbargDecayReport:
    nu: float
    tau_sq: float
    mes: float
    us: tuple
    estimates: tuple  # ProbEstimate per u
    ratios: tuple  # float or None (zero hits)
    ratio_bounds: tuple  # rule-of-three bound where hits were zero
    verdict: str  # pass | fail | inconclusive
    diagnostics: dict = field(default_factory=dict)


def _holder_exponent(coord):
    if isinstance(coord, (Stationary, LocallyStationary, FractionalBrownian)):
        return coord.kappa
    if isinstance(coord, NonStationary):
        return min(coord.alpha, coord.holder_gamma)
    raise PreconditionError(f"no smoothness exponent for {type(coord)!r}")


def audit_piterbarg_decay(
    spec: VectorProcessSpec,
    u_ladder,
    grid: SampleGrid,
    R: int,
    stream: RngStream,
    workers: int = 1,
) -> PiterbargDecayReport:
    """Boundedness audit of P(u) / (mes(T) u^(2/nu - 1) exp(-u^2 tau^2 / 2)).

    nu is the smallest coordinate smoothness exponent min(gamma, alpha); the
    ratio sequence over an increasing u ladder must stay within a factor two
    of its median.  Entries with zero hits only contribute a rule-of-three
    bound; fewer than two hit-bearing entries leave the audit inconclusive.
    """
    ensure_valid(spec)
    us = [float(u) for u in u_ladder]
    if len(us) < 3 or any(b <= a for a, b in zip(us, us[1:])):
        raise DomainError("u_ladder must be >= 3 increasing values")
    nu = min(_holder_exponent(c) for c in spec.coords)
    nodes = grid.nodes()
    _, g = _variance_weights(spec, nodes)
    tau_sq = float(g[np.isfinite(g)].min())
    mes = grid.span
    thr = np.asarray([[u] * spec.n for u in us])
    counts = _scan_hits(spec, thr, grid, R, stream, workers)[:, 0]

    estimates = []
    ratios = []
    bounds = []
    for u, hits in zip(us, counts):
        emp = _prob_from_hits(int(hits), R, grid.step)
        denom = mes * u ** (2.0 / nu - 1.0) * math.exp(-0.5 * u * u * tau_sq)
        estimates.append(emp)
        if hits == 0:
            ratios.append(None)
            bounds.append((3.0 / R) / denom)
        else:
            ratios.append(emp.value / denom)
            bounds.append(None)
    observed = [r for r in ratios if r is not None]
    if len(observed) < 2:
        verdict = "inconclusive"
    else:
        verdict = "pass" if max(observed) <= 2.0 * float(np.median(observed)) else "fail"
    return PiterbargDecayReport(
        nu,
        tau_sq,
        mes,
        tuple(us),
        tuple(estimates),
        tuple(ratios),
        tuple(bounds),
        verdict,
        diagnostics={"nu_rule": "min over coordinates of min(holder_gamma, alpha)"},
    )


@dataclass(frozen=True)
class RatioReport:
    """Empirical / asymptotic comparison; operationalizes first-order equivalence."""

    ratio: float | None
    ci: tuple
    grid_step: float
    rule_of_three_bound: float | None = None
    notes: str = ""


def compare_with_asymptotic(empirical: ProbEstimate, approx: AsymptoticApproximation) -> RatioReport:
    if not approx.value_at_u > 0:
        raise DomainError("asymptotic value must be positive")
    a = approx.value_at_u
    if empirical.hits == 0:
        bound = (3.0 / empirical.replications) / a
        return RatioReport(None, (0.0, bound), empirical.grid_step, bound, "zero hits: ratio undefined")
    lo = max(0.0, empirical.value - 3.0 * empirical.se) / a
    hi = (empirical.value + 3.0 * empirical.se) / a
    return RatioReport(empirical.value / a, (lo, hi), empirical.grid_step)
