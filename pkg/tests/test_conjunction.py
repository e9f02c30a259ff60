import math

import numpy as np
import pytest

from gpextremes import (
    AsymptoticApproximation,
    DomainError,
    FractionalBrownian,
    NonStationary,
    PreconditionError,
    ProfileTable,
    RngStream,
    SampleGrid,
    Stationary,
    VectorProcessSpec,
    audit_borell,
    audit_piterbarg_decay,
    audit_slepian,
    compare_with_asymptotic,
    conjunction_prob_nested,
    default_grid_step,
    estimate_conjunction_prob,
    estimate_double_event,
    gaussian_tail,
    sample_vector,
)
from gpextremes.conjunction import ProbEstimate

STREAM = RngStream(90210)


def unit_grid(m=257, T=1.0):
    return SampleGrid(0.0, T / (m - 1), m)


def ou_spec(a=1.0, n=1, kappa=1.0, T=1.0):
    return VectorProcessSpec(tuple(Stationary(a, kappa) for _ in range(n)), T)


class TestConjunctionProb:
    def test_single_node_product_of_tails(self):
        spec = ou_spec(n=2)
        R = 50_000
        est = estimate_conjunction_prob(spec, [1.0, 1.0], SampleGrid(0.0, 1.0, 1), R, STREAM.child("sn"))
        target = gaussian_tail(1.0) ** 2
        assert abs(est.value - target) < 3.0 * max(est.se, math.sqrt(target / R))

    def test_brownian_reflection_principle(self):
        spec = VectorProcessSpec((FractionalBrownian(1.0),), 1.0)
        R = 100_000
        est = estimate_conjunction_prob(spec, [1.0], unit_grid(513), R, STREAM.child("bm"))
        target = 2.0 * gaussian_tail(1.0)
        # discretization only loses crossings: allow a small one-sided gap
        assert est.value <= target + 3.0 * est.se
        assert est.value >= target * 0.93 - 3.0 * est.se

    def test_monotone_in_threshold_shared_paths(self):
        spec = ou_spec()
        thresholds = [[1.0], [1.5], [2.0], [2.5]]
        ests = estimate_conjunction_prob(spec, thresholds, unit_grid(129), 20_000, STREAM.child("mono"))
        hits = [e.hits for e in ests]
        assert all(a >= b for a, b in zip(hits, hits[1:]))

    def test_nested_refinement_monotone(self):
        spec = ou_spec()
        ests = conjunction_prob_nested(spec, [1.5], unit_grid(257), (4, 2, 1), 20_000, STREAM.child("nest"))
        hits = [e.hits for e in ests]
        assert hits[0] <= hits[1] <= hits[2]

    def test_conjunction_below_single_coordinate(self):
        spec = ou_spec(n=2)
        rows = [[1.5, 1.5], [1.5, -1e18], [-1e18, 1.5]]
        both, only0, only1 = estimate_conjunction_prob(spec, rows, unit_grid(129), 30_000, STREAM.child("sub"))
        pooled0 = 3.0 * math.hypot(both.se, only0.se)
        pooled1 = 3.0 * math.hypot(both.se, only1.se)
        assert both.value <= only0.value + pooled0
        assert both.value <= only1.value + pooled1

    def test_zero_hits_rule_of_three(self):
        spec = ou_spec()
        est = estimate_conjunction_prob(spec, [20.0], unit_grid(65), 2000, STREAM.child("rare"))
        assert est.value == 0.0 and est.hits == 0
        assert est.se == pytest.approx(3.0 / 2000)
        assert "rule-of-three" in est.notes

    def test_r_precondition(self):
        with pytest.raises(DomainError):
            estimate_conjunction_prob(ou_spec(), [1.0], unit_grid(65), 100, STREAM)

    def test_order_statistics_consistency(self):
        # exchangeable pair: P(sup max > u) / P(sup X1 > u) -> 2
        spec = ou_spec(n=2)
        R = 100_000
        u = 2.5
        grid = unit_grid(257)
        batch_hits = np.zeros(2)
        from gpextremes.parallel import block_sizes

        sizes = block_sizes(R)
        for b, Rb in enumerate(sizes):
            batch = sample_vector(spec, grid, Rb, STREAM.child("ord", b))
            exceed = batch.values > u
            batch_hits[0] += exceed.any(axis=(1, 2)).sum()  # max order statistic
            batch_hits[1] += exceed[:, 0, :].any(axis=1).sum()  # single coordinate
        p_max, p_one = batch_hits / R
        ratio = p_max / p_one
        rel_se = math.sqrt((1 - p_max) / (R * p_max)) + math.sqrt((1 - p_one) / (R * p_one))
        assert ratio == pytest.approx(2.0, abs=4 * 2.0 * rel_se + 0.06)

    def test_default_grid_step_policy(self):
        assert default_grid_step(1.0, 3.0, 1.0) == pytest.approx(1.0 / 1024.0)
        assert default_grid_step(100.0, 10.0, 2.0) == pytest.approx(0.01)


class TestDoubleEvent:
    def test_containment_and_decay(self):
        spec = ou_spec(T=6.0)
        res = estimate_double_event(spec, 2.0, 2.0, (4.0, 8.0, 16.0), 60_000, STREAM.child("dbl"))
        single = res.single_window
        for joint in res.joint:
            assert joint.value <= single.value + 3.0 * math.hypot(joint.se, single.se)
        vals = [j.value for j in res.joint]
        pooled = [3.0 * math.hypot(a.se, b.se) for a, b in zip(res.joint, res.joint[1:])]
        assert all(b <= a + tol for a, b, tol in zip(vals, vals[1:], pooled))

    def test_superlinear_log_decay(self):
        spec = ou_spec(T=6.0)
        res = estimate_double_event(spec, 2.0, 2.0, (4.0, 8.0, 16.0), 120_000, STREAM.child("dbl2"))
        p = [max(j.value, j.se / 3) for j in res.joint]
        drop_near = math.log(p[0]) - math.log(p[1])
        drop_far = math.log(p[0]) - math.log(p[2])
        assert drop_far > drop_near

    def test_window_bounds_checked(self):
        spec = ou_spec(T=1.0)
        with pytest.raises(DomainError):
            estimate_double_event(spec, 2.0, 2.0, (4.0, 64.0), 2000, STREAM)
        with pytest.raises(DomainError):
            estimate_double_event(spec, 2.0, 0.5, (4.0,), 2000, STREAM)


class TestSlepianAudit:
    def test_same_spec_passes(self):
        spec = ou_spec()
        rep = audit_slepian(spec, spec, [1.5], unit_grid(129), 20_000, STREAM.child("sl0"))
        assert rep.verdict == "pass"

    def test_dominance_orders_probabilities(self):
        rep = audit_slepian(ou_spec(a=1.0), ou_spec(a=2.0), [1.5], unit_grid(257), 50_000, STREAM.child("sl1"))
        assert rep.verdict == "pass"

    def test_vector_case(self):
        rep = audit_slepian(
            ou_spec(a=1.0, n=2), ou_spec(a=2.0, n=2), [1.5, 1.5], unit_grid(257), 50_000, STREAM.child("sl2")
        )
        assert rep.verdict == "pass"

    def test_dominance_precondition(self):
        with pytest.raises(PreconditionError):
            audit_slepian(ou_spec(a=2.0), ou_spec(a=1.0), [1.5], unit_grid(65), 2000, STREAM)

    def test_variance_match_precondition(self):
        spec_fbm = VectorProcessSpec((FractionalBrownian(1.0),), 1.0)
        with pytest.raises(PreconditionError):
            audit_slepian(ou_spec(), spec_fbm, [1.5], unit_grid(65), 2000, STREAM)


class TestBorellAudit:
    def test_brownian_motion_case(self):
        spec = VectorProcessSpec((FractionalBrownian(1.0),), 1.0)
        reports = audit_borell(spec, (0.5, 4.0), unit_grid(513), 100_000, STREAM.child("bor"))
        low, high = reports
        assert low.verdict == "inconclusive"  # u below the mean of the supremum
        assert high.verdict == "pass"
        assert high.tau_sq == pytest.approx(1.0, rel=1e-9)
        assert high.mu_hat == pytest.approx(math.sqrt(2.0 / math.pi), abs=0.05)

    def test_two_coordinate_stationary(self):
        spec = ou_spec(n=2)
        reports = audit_borell(spec, (4.0,), unit_grid(257), 50_000, STREAM.child("bor2"))
        rep = reports[0]
        assert rep.tau_sq == pytest.approx(2.0, rel=1e-9)
        assert rep.verdict == "pass"


def nonstat_pair_spec(T=1.0):
    c1 = NonStationary(
        sigma_profile=ProfileTable.constant(1.0, T),
        alpha=1.0,
        a=1.0,
        beta=1.0,
        b_lower=0.0,
        b_upper=0.0,
        holder_G=4.0,
        holder_gamma=1.0,
        holder_rho=0.5,
    )
    c2 = NonStationary(
        sigma_profile=ProfileTable.from_function(lambda t: 1.0 / (1.0 + t), T, count=65),
        alpha=1.0,
        a=1.0,
        beta=1.0,
        b_lower=0.0,
        b_upper=1.0,
        holder_G=4.0,
        holder_gamma=1.0,
        holder_rho=0.5,
    )
    return VectorProcessSpec((c1, c2), T)


class TestPiterbargDecayAudit:
    def test_bounded_ratio_on_nonstationary_example(self):
        spec = nonstat_pair_spec()
        rep = audit_piterbarg_decay(spec, (1.2, 1.6, 2.0), unit_grid(257), 100_000, STREAM.child("pd"))
        assert rep.verdict == "pass"
        assert rep.nu == 1.0
        assert rep.tau_sq == pytest.approx(2.0, rel=1e-6)
        assert all(r is None or r > 0 for r in rep.ratios)

    def test_measure_doubling_bounds_numerator(self):
        spec_1 = ou_spec(T=1.0)
        spec_2 = ou_spec(T=2.0)
        u = 2.0
        a = estimate_conjunction_prob(spec_1, [u], unit_grid(257, 1.0), 50_000, STREAM.child("m1"))
        b = estimate_conjunction_prob(spec_2, [u], SampleGrid(0.0, 1.0 / 256, 513), 50_000, STREAM.child("m2"))
        assert b.value <= 2.0 * a.value + 3.0 * math.hypot(b.se, 2 * a.se)

    def test_zero_hits_inconclusive(self):
        spec = nonstat_pair_spec()
        rep = audit_piterbarg_decay(spec, (8.0, 9.0, 10.0), unit_grid(65), 2000, STREAM.child("pd0"))
        assert rep.verdict == "inconclusive"
        assert all(r is None for r in rep.ratios)
        assert all(b is not None and b > 0 for b in rep.ratio_bounds)

    def test_ladder_precondition(self):
        with pytest.raises(DomainError):
            audit_piterbarg_decay(nonstat_pair_spec(), (2.0, 1.0, 3.0), unit_grid(65), 2000, STREAM)


class TestCompareWithAsymptotic:
    def test_exact_match_is_ratio_one(self):
        emp = ProbEstimate(0.5, 0.0, 500, 1000, 0.1)
        appr = AsymptoticApproximation("local_window", 1.0, 0.0, (0.0,), 0.5)
        rep = compare_with_asymptotic(emp, appr)
        assert rep.ratio == pytest.approx(1.0)

    def test_zero_hits_gives_rule_of_three_bound(self):
        emp = ProbEstimate(0.0, 3.0 / 1000, 0, 1000, 0.1)
        appr = AsymptoticApproximation("local_window", 1.0, 0.0, (0.0,), 0.01)
        rep = compare_with_asymptotic(emp, appr)
        assert rep.ratio is None
        assert rep.rule_of_three_bound == pytest.approx(0.3)

    def test_ci_contains_ratio(self):
        emp = ProbEstimate(0.012, 0.001, 1200, 100_000, 0.01)
        appr = AsymptoticApproximation("locally_stationary", 1.0, 2.0, (3.0,), 0.0121)
        rep = compare_with_asymptotic(emp, appr)
        assert rep.ci[0] <= rep.ratio <= rep.ci[1]
