import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmartingale.chains import conjugated_chain, rademacher_chain
from ncmartingale.mcsim import StepDistribution
from ncmartingale.operator_core import HermitianOperator, Projection, random_unitary, spectral_projection
from ncmartingale.projection_lattice import (
    RangeError,
    empty_tail_event,
    join,
    join_all,
    leq_proj,
    linear_thresholds,
    meet,
    tail_event,
    tail_meet_trace,
)

seeds = st.integers(0, 2**32 - 1)


def line(v):
    v = np.asarray(v, dtype=complex)
    return Projection.from_basis((v / np.linalg.norm(v))[:, None], v.size)


def test_two_skew_lines_span_the_plane():
    p, q = line([1, 0]), line([1, 1])
    np.testing.assert_allclose(join(p, q).operator.matrix, np.eye(2), atol=1e-12)
    assert meet(p, q).rank == 0
    assert join(p, p).rank == 1


def test_meet_of_planes_in_three_dims():
    p = Projection.from_basis(np.eye(3)[:, :2], 3)
    q = Projection.from_basis(np.eye(3)[:, 1:], 3)
    r = meet(p, q)
    assert r.rank == 1
    np.testing.assert_allclose(r.operator.matrix, np.diag([0, 1, 0]), atol=1e-10)


def test_diagonal_fast_path_matches_dense():
    a, b = np.array([1.0, 0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0, 1.0])
    pd, qd = Projection(HermitianOperator(a)), Projection(HermitianOperator(b))
    pm, qm = Projection(HermitianOperator(np.diag(a))), Projection(HermitianOperator(np.diag(b)))
    np.testing.assert_allclose(join(pd, qd).operator.diag, np.diag(join(pm, qm).operator.matrix).real, atol=1e-12)
    np.testing.assert_allclose(meet(pd, qd).operator.diag, np.diag(meet(pm, qm).operator.matrix).real, atol=1e-12)
    assert leq_proj(meet(pd, qd), pd) and not leq_proj(pd, qd)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 6), st.integers(0, 6), st.integers(0, 6))
def test_lattice_order_and_union_bound(seed, d, kp, kq):
    r = np.random.default_rng(seed)
    kp, kq = min(kp, d), min(kq, d)
    p = Projection.from_basis(random_unitary(d, r)[:, :kp], d)
    q = Projection.from_basis(random_unitary(d, r)[:, :kq], d)
    j, m = join(p, q), meet(p, q)
    assert leq_proj(p, j) and leq_proj(q, j)
    assert leq_proj(m, p) and leq_proj(m, q)
    assert max(p.trace, q.trace) - 1e-12 <= j.trace <= p.trace + q.trace + 1e-12
    # generic subspaces: dim(P + Q) = min(d, kp + kq)
    assert j.rank == min(d, kp + kq)
    assert m.rank + j.rank == kp + kq


def test_join_all_single_element_is_identity_map():
    p = line([1, 2, 3])
    np.testing.assert_allclose(join_all([p]).operator.matrix, p.operator.matrix, atol=1e-12)


def test_rademacher_diagonal_tail_events():
    # s_n >= n for some n in [m, H] iff the first m steps are all +1
    seq = rademacher_chain(8)
    for m in range(1, 9):
        ev = tail_event(seq, linear_thresholds(0.0, 1.0), m, 8)
        assert ev.trace == pytest.approx(2.0**-m, abs=1e-15)


def test_tail_event_range_checks():
    seq = rademacher_chain(3)
    with pytest.raises(RangeError):
        tail_event(seq, linear_thresholds(0, 1), 2, 4)
    with pytest.raises(RangeError):
        tail_event(seq, linear_thresholds(0, 1), 3, 2)
    assert empty_tail_event(5, 3).empty and empty_tail_event(5, 3).trace == 0.0


def test_mapping_thresholds():
    seq = rademacher_chain(3)
    ev = tail_event(seq, {2: 2.0, 3: 3.0}, 2, 3)
    assert ev.trace == pytest.approx(0.25)
    assert ev.to_dict()["thresholds"] == {"2": 2.0, "3": 3.0}


@settings(max_examples=10, deadline=None)
@given(seeds, st.floats(0.0, 1.0))
def test_tail_traces_non_increasing_and_match_direct(seed, mixing):
    seq = conjugated_chain(StepDistribution.rademacher(), 5, seed, mixing=mixing)
    thr = linear_thresholds(0.0, 0.5)
    traces = tail_meet_trace(seq, thr, [1, 2, 3, 4, 5], 5)
    vals = [t for _, t in traces]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    for m, t in traces:
        assert t == pytest.approx(tail_event(seq, thr, m, 5).trace, abs=1e-12)


def test_tail_meet_trace_requires_increasing_m():
    with pytest.raises(RangeError):
        tail_meet_trace(rademacher_chain(3), linear_thresholds(0, 1), [2, 1], 3)


def test_noncommutative_join_exceeds_classical_union():
    # with mixing the level sets are in general position, so the join is larger
    # than for the commuting walk but the dimensions still add up
    seq = conjugated_chain(StepDistribution.rademacher(), 8, seed=1, mixing=0.6)
    thr = linear_thresholds(0.05, 0.9)
    ranks = [spectral_projection(seq.ops[n], thr(n)).rank for n in range(3, 9)]
    ev = tail_event(seq, thr, 3, 8)
    assert ev.projection.rank == min(256, sum(ranks))
    assert ev.trace > 0.125
