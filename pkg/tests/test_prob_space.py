import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmartingale.operator_core import PAULI_X, PAULI_Z, HermitianOperator, random_hermitian, trace_state
from ncmartingale.prob_space import (
    Filtration,
    LevelOutOfRange,
    NotSupermartingale,
    TensorSpace,
    cond_exp,
    independent_sum_construction,
    is_measurable,
    preserves_positivity,
    random_level_operator,
    trace_residual,
    verify_module_property,
    verify_tower,
)
from ncmartingale.martingale import MARTINGALE, SUPERMARTINGALE

seeds = st.integers(0, 2**32 - 1)
spaces = st.sampled_from([(2, 2, 2), (3, 2, 2), (2, 3), (4,)])


def test_product_operator_partial_trace():
    # E_1(A (x) B) = tau(B) A (x) 1 computed by hand
    a = np.array([[1.0, 2.0j], [-2.0j, 3.0]])
    b = np.array([[5.0, 1.0], [1.0, -1.0]])
    filt = Filtration(TensorSpace((2, 2)))
    got = cond_exp(filt, 1, HermitianOperator(np.kron(a, b)))
    np.testing.assert_allclose(got.matrix, np.kron(a, np.eye(2)) * 2.0, atol=1e-14)


def test_level_zero_is_the_trace(rng):
    filt = Filtration(TensorSpace((2, 3)))
    x = random_hermitian(6, rng)
    np.testing.assert_allclose(cond_exp(filt, 0, x).matrix, trace_state(x) * np.eye(6), atol=1e-12)


def test_top_level_is_identity_map(rng):
    filt = Filtration(TensorSpace((2, 3)))
    x = random_hermitian(6, rng)
    np.testing.assert_allclose(cond_exp(filt, 2, x).matrix, x.matrix, atol=1e-14)


def test_level_out_of_range():
    filt = Filtration(TensorSpace((2, 2)))
    with pytest.raises(LevelOutOfRange):
        cond_exp(filt, 3, HermitianOperator.identity(4))


def test_embed_places_operator_on_factor():
    space = TensorSpace((2, 2, 2))
    x = space.embed(PAULI_Z, 2)
    np.testing.assert_allclose(x.matrix, np.kron(np.eye(2), np.kron(PAULI_Z, np.eye(2))))


def test_diagonal_space_rejects_dense_factor():
    with pytest.raises(ValueError):
        TensorSpace((2, 2), diagonal=True).embed(PAULI_X, 1)


def test_diagonal_mode_matches_dense(rng):
    dense = Filtration(TensorSpace((2, 3, 2)))
    diag = Filtration(TensorSpace((2, 3, 2), diagonal=True))
    v = rng.standard_normal(12)
    for j in range(4):
        a = cond_exp(dense, j, HermitianOperator(np.diag(v)))
        b = cond_exp(diag, j, HermitianOperator(v))
        assert b.is_diagonal
        np.testing.assert_allclose(np.diag(a.matrix).real, b.diag, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(seeds, spaces)
def test_conditional_expectation_axioms(seed, dims):
    r = np.random.default_rng(seed)
    filt = Filtration(TensorSpace(dims))
    D, K = filt.space.total_dim, filt.n_levels
    x = random_hermitian(D, r)
    scale = 1.0 + x.op_norm()
    j, i = int(r.integers(0, K + 1)), int(r.integers(0, K + 1))
    a, b = random_level_operator(filt, j, r), random_level_operator(filt, j, r)
    assert is_measurable(filt, j, a)
    mscale = scale * (1 + a.op_norm()) * (1 + b.op_norm())
    assert verify_module_property(filt, j, a, x, b) <= 1e-9 * mscale
    assert trace_residual(filt, j, x) <= 1e-9 * scale
    assert verify_tower(filt, i, j, x) <= 1e-9 * scale
    g = r.standard_normal((D, D)) + 1j * r.standard_normal((D, D))
    assert preserves_positivity(filt, j, HermitianOperator(g @ g.conj().T))
    assert is_measurable(filt, j, cond_exp(filt, j, x))


def test_independent_sums_classify():
    space = TensorSpace((2, 2, 2))
    mart = independent_sum_construction(space, [PAULI_Z, PAULI_X, PAULI_Z])
    assert mart.kind == MARTINGALE
    sup = independent_sum_construction(space, [PAULI_Z - 0.5 * np.eye(2), PAULI_X])
    assert sup.kind == SUPERMARTINGALE
    with pytest.raises(NotSupermartingale):
        independent_sum_construction(space, [PAULI_Z + 0.1 * np.eye(2)])
