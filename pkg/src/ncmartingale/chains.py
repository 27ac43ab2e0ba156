"""Seeded generators of adapted operator sequences.

A step distribution with rational probabilities k_i/d is realized as a
d-dimensional diagonal factor operator (value v_i repeated k_i times), so
its normalized trace reproduces the classical expectation.  Step j of a
chain is that operator on factor j, conjugated by a unitary that is
block-diagonal over a random orthonormal basis of the level j-1 space:

    dx_j = sum_r |e_r><e_r| (x) w_r D w_r^*

Every block has the spectrum of D and conditional mean tau(D), so the
bounded-difference and drift conditions hold exactly while dx_j generally
fails to commute with s_{j-1}.  In diagonal mode the basis is the standard
one and the w_r are permutations, which gives a classical random walk.
"""

from __future__ import annotations

from fractions import Fraction
from math import lcm

import numpy as np

from .martingale import AdaptedSequence
from .mcsim import StepDistribution
from .operator_core import HermitianOperator, random_hermitian, random_unitary
from .prob_space import Filtration, TensorSpace


def factor_diagonal(dist: StepDistribution, max_den: int = 16) -> np.ndarray:
    """Diagonal whose uniform distribution equals ``dist``."""
    fracs = [Fraction(p).limit_denominator(max_den) for p in dist.probs]
    if any(abs(float(f) - p) > 1e-12 for f, p in zip(fracs, dist.probs)):
        raise ValueError(f"probabilities {dist.probs} are not multiples of 1/d for d <= {max_den}")
    d = lcm(*(f.denominator for f in fracs))
    counts = [int(f * d) for f in fracs]
    return np.repeat(np.asarray(dist.values), counts)


def factor_dim(dist: StepDistribution, max_den: int = 16) -> int:
    return factor_diagonal(dist, max_den).size


def _unitary(dim: int, rng: np.random.Generator, mixing: float | None) -> np.ndarray:
    if mixing is None:
        return random_unitary(dim, rng)
    h = random_hermitian(dim, rng)
    vals, vecs = np.linalg.eigh(h.matrix)
    vals = vals / max(1e-300, np.max(np.abs(vals)))
    return (vecs * np.exp(1j * mixing * vals)) @ vecs.conj().T


def conjugated_chain(
    dist: StepDistribution,
    n_factors: int,
    seed: int,
    *,
    diagonal: bool = False,
    scramble: bool = True,
    mixing: float | None = None,
) -> AdaptedSequence:
    """Partial sums s_0 = 0, s_j = s_{j-1} + dx_j for j = 1..n_factors.

    ``mixing=None`` draws Haar unitaries.  A number draws exp(i mixing H)
    with H a random Hermitian of unit norm instead, which keeps the chain
    noncommutative but close to the classical walk for small values.
    """
    diag = factor_diagonal(dist)
    d = diag.size
    space = TensorSpace((d,) * n_factors, diagonal=diagonal)
    filt = Filtration(space)
    rng = np.random.default_rng(seed)
    total = HermitianOperator.zeros(space.total_dim, diagonal=diagonal)
    ops = [total]
    for j in range(1, n_factors + 1):
        left = space.level_dim(j - 1)
        if diagonal:
            if scramble:
                block = np.concatenate([diag[rng.permutation(d)] for _ in range(left)])
            else:
                block = np.tile(diag, left)
        else:
            q = _unitary(left, rng, mixing) if (scramble and left > 1) else np.eye(left)
            blocks = np.zeros((left * d, left * d), dtype=complex)
            for r in range(left):
                w = _unitary(d, rng, mixing) if scramble else np.eye(d)
                blocks[r * d : (r + 1) * d, r * d : (r + 1) * d] = (w * diag) @ w.conj().T
            big_q = np.kron(q, np.eye(d))
            block = big_q @ blocks @ big_q.conj().T
        total = total + space.lift(block, j)
        ops.append(total)
    return AdaptedSequence(filt, tuple(ops))


def rademacher_chain(n_factors: int, *, diagonal: bool = True) -> AdaptedSequence:
    """Unscrambled +-1 walk: dx_j = sigma_z on factor j."""
    return conjugated_chain(StepDistribution.rademacher(), n_factors, 0, diagonal=diagonal, scramble=False)


def extend(seq: AdaptedSequence, length: int) -> AdaptedSequence:
    """Pad with zero differences up to index ``length``."""
    ops = list(seq.ops)
    while len(ops) <= length:
        ops.append(ops[-1])
    return AdaptedSequence(seq.filt, tuple(ops))
