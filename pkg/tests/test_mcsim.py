import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmartingale.bounds import BoundReport, khan_bounds
from ncmartingale.martingale import BoundParams
from ncmartingale.mcsim import (
    BLOCK_SIZE,
    CrossingEstimate,
    InvalidHorizon,
    ParameterMismatch,
    StateSpaceTooLarge,
    StepDistribution,
    compare_bound,
    enumerate_exact,
    simulate_crossing,
    wilson_interval,
)


def brute_force(dist, a, b, start, horizon):
    total = 0.0
    for path in itertools.product(range(len(dist.values)), repeat=horizon):
        s, hit = 0.0, start == 0 and a <= 0
        prob = 1.0
        for n, k in enumerate(path, start=1):
            s += dist.values[k]
            prob *= dist.probs[k]
            if n >= start and s >= a + b * n - 1e-9:
                hit = True
        total += prob * hit
    return total


def test_step_distribution_validation():
    with pytest.raises(ValueError):
        StepDistribution((1.0, -1.0), (0.6, 0.6))
    with pytest.raises(ValueError):
        StepDistribution((1.0, -1.0), (0.6, 0.4))  # positive mean
    with pytest.raises(ValueError):
        StepDistribution.two_point(0.5, 1.0, 0.5)
    d = StepDistribution.two_point(2.0, 1.0, 0.5)
    assert d.mean == pytest.approx(-0.5)
    assert d.probs == pytest.approx((0.5, 0.5))


def test_wilson_matches_reference_values():
    # reference values from an independent implementation
    lo, hi = wilson_interval(137, 1000)
    assert lo == pytest.approx(0.11707313063299472, rel=1e-12)
    assert hi == pytest.approx(0.1597050960275183, rel=1e-12)
    lo, hi = wilson_interval(0, 50)
    assert lo == 0.0 and hi == pytest.approx(0.07134759913335874, rel=1e-12)


def test_rademacher_exact_value():
    # 0.138671875 = 71/512, checked by enumerating all 2^12 paths
    dist = StepDistribution.rademacher()
    assert enumerate_exact(dist, 1.0, 0.5, 2, 2, 12) == pytest.approx(0.138671875, abs=1e-15)
    assert brute_force(dist, 1.0, 0.5, 4, 12) == pytest.approx(0.138671875, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from([(1.0, 1.0, 0.0), (2.0, 1.0, 0.0), (2.0, 1.0, 0.5), (1.0, 3.0, 0.0), (3.0, 1.0, 1.0)]),
    st.sampled_from([0.0, 0.25, 0.5, 1.0]),
    st.sampled_from([0.0, 0.2, 0.5, 1.0]),
    st.integers(0, 3),
    st.integers(0, 3),
    st.integers(6, 10),
)
def test_dp_matches_brute_force(abg, a, b, m, i, horizon):
    dist = StepDistribution.two_point(*abg)
    expected = brute_force(dist, a, b, m + i, horizon)
    assert enumerate_exact(dist, a, b, m, i, horizon) == pytest.approx(expected, abs=1e-12)


def test_path_enumeration_for_irrational_support():
    dist = StepDistribution((math.sqrt(2), -1.0), (1 / (1 + math.sqrt(2)), math.sqrt(2) / (1 + math.sqrt(2))))
    got = enumerate_exact(dist, 0.3, 0.1, 1, 1, 10)
    assert got == pytest.approx(brute_force(dist, 0.3, 0.1, 2, 10), abs=1e-12)


def test_state_space_limits():
    dist = StepDistribution.rademacher()
    with pytest.raises(StateSpaceTooLarge):
        enumerate_exact(dist, 0.0, 0.5, 1, 1, 30)
    with pytest.raises(InvalidHorizon):
        enumerate_exact(dist, 0.0, 0.5, 5, 5, 8)
    odd = StepDistribution((math.pi, -1.0), (0.2, 0.8))
    with pytest.raises(StateSpaceTooLarge):
        enumerate_exact(odd, 0.0, 0.5, 1, 1, 22)


def test_simulation_is_deterministic_and_worker_invariant():
    dist = StepDistribution.rademacher()
    n = 3 * BLOCK_SIZE + 17
    a = simulate_crossing(dist, 1.0, 0.5, 2, 2, 12, n, seed=11)
    b = simulate_crossing(dist, 1.0, 0.5, 2, 2, 12, n, seed=11, workers=4)
    c = simulate_crossing(dist, 1.0, 0.5, 2, 2, 12, n, seed=12)
    assert a == b
    assert a.hits != c.hits
    assert a.ci_low <= a.p_hat <= a.ci_high


def test_simulation_close_to_exact():
    dist = StepDistribution.two_point(2.0, 1.0, 0.0)
    est = simulate_crossing(dist, 0.5, 0.1, 1, 1, 10, 50_000, seed=3)
    exact = enumerate_exact(dist, 0.5, 0.1, 1, 1, 10)
    assert abs(est.p_hat - exact) < 5 * math.sqrt(exact * (1 - exact) / 50_000)


def test_wilson_coverage_calibration():
    # nominal 95%; with 200 replications coverage below 0.90 would be a 4 sigma event
    dist = StepDistribution.rademacher()
    exact = enumerate_exact(dist, 1.0, 0.5, 2, 2, 12)
    covered = 0
    for seed in range(200):
        est = simulate_crossing(dist, 1.0, 0.5, 2, 2, 12, 10_000, seed=seed)
        covered += est.ci_low <= exact <= est.ci_high
    assert covered / 200 >= 0.90


def test_compare_bound_statuses():
    rep = BoundReport("khan_a", 1.0, math.log(0.5), 1, {1: math.log(0.1)})
    est = lambda p, lo, hi: CrossingEstimate(1000, int(p * 1000), p, lo, hi, 5, 0, 0.0, 1.0, 1, 1)
    assert compare_bound(est(0.05, 0.04, 0.06), rep, 1).status == "pass"
    assert compare_bound(est(0.11, 0.09, 0.13), rep, 1).status == "warn"
    assert compare_bound(est(0.2, 0.15, 0.25), rep, 1).status == "fail"
    assert compare_bound(0.1 + 1e-13, rep, 1).passed
    assert not compare_bound(0.1 + 1e-9, rep, 1).passed
    with pytest.raises(ParameterMismatch):
        compare_bound(0.05, rep, 2)
    with pytest.raises(ParameterMismatch):
        compare_bound(0.05, rep, 1, start=1)


def test_exact_probabilities_respect_khan_bound():
    params = BoundParams(alpha=1.0, beta=1.0, a=0.05, b=0.9, m=3)
    rep = khan_bounds(params)[0]
    dist = StepDistribution.rademacher()
    for m in (1, 2, 3):
        exact = enumerate_exact(dist, 0.05, 0.9, m, rep.minimal_index, 16)
        assert compare_bound(exact, rep, m).passed
