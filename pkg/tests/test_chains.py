import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmartingale.chains import conjugated_chain, extend, factor_diagonal, factor_dim, rademacher_chain
from ncmartingale.martingale import MARTINGALE, SUPERMARTINGALE, differences
from ncmartingale.mcsim import StepDistribution, enumerate_exact
from ncmartingale.operator_core import commutator_norm
from ncmartingale.projection_lattice import linear_thresholds, tail_event

seeds = st.integers(0, 2**32 - 1)


def test_factor_diagonal():
    dist = StepDistribution.two_point(2.0, 1.0, 0.0)
    np.testing.assert_array_equal(factor_diagonal(dist), [1.0, 1.0, -2.0])
    assert factor_dim(StepDistribution.rademacher()) == 2
    with pytest.raises(ValueError):
        factor_diagonal(StepDistribution((1.0, -1.0), (1 / np.pi, 1 - 1 / np.pi)))


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from([None, 0.3, 1.0]))
def test_chain_steps_have_exact_spectrum_and_mean(seed, mixing):
    dist = StepDistribution.two_point(2.0, 1.0, 0.5)
    seq = conjugated_chain(dist, 4, seed, mixing=mixing)
    assert seq.kind == SUPERMARTINGALE
    for n, dx in enumerate(differences(seq)[1:], start=1):
        vals = np.unique(np.round(dx.eigenvalues, 9))
        np.testing.assert_allclose(vals, [-2.0, 1.0])
        block = seq.filt.reduce(n - 1, dx)
        np.testing.assert_allclose(block, -0.5 * np.eye(block.shape[0]), atol=1e-12)


def test_scrambled_chain_is_noncommutative():
    seq = conjugated_chain(StepDistribution.rademacher(), 4, seed=9, mixing=0.6)
    d = differences(seq)
    assert commutator_norm(seq.ops[2], d[3]) > 0.1
    assert seq.kind == MARTINGALE


def test_diagonal_chain_is_a_permuted_walk():
    seq = conjugated_chain(StepDistribution.rademacher(), 5, seed=4, diagonal=True)
    assert seq.diagonal
    np.testing.assert_allclose(np.sort(seq.ops[5].diag), np.sort(rademacher_chain(5).ops[5].diag))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_diagonal_tail_event_is_classical_probability(seed):
    dist = StepDistribution.two_point(2.0, 1.0, 0.0)
    seq = conjugated_chain(dist, 6, seed, diagonal=True)
    got = tail_event(seq, linear_thresholds(0.5, 0.1), 2, 6).trace
    assert got == pytest.approx(enumerate_exact(dist, 0.5, 0.1, 1, 1, 6), abs=1e-12)


def test_extend_pads_with_zero_steps():
    seq = extend(rademacher_chain(2), 4)
    assert seq.length == 4
    np.testing.assert_array_equal(seq.ops[4].diag, seq.ops[2].diag)
