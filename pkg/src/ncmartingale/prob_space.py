"""Tensor-product matrix probability spaces and their filtrations.

Factor k (1-based) is the k-th tensor slot, ordered row-major: factor 1 is
the most significant index.  Level j of the filtration is the algebra of
operators ``a (x) 1`` with ``a`` acting on factors 1..j, and its conditional
expectation is the normalized partial trace over factors j+1..K.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Sequence

import numpy as np

from .operator_core import (
    DimensionMismatch,
    HermitianOperator,
    is_psd,
    op_norm,
    random_hermitian,
    trace_state,
)

STRUCT_TOL = 1e-9


class LevelOutOfRange(IndexError):
    pass


class NotSupermartingale(ValueError):
    pass


@dataclass(frozen=True)
class TensorSpace:
    factor_dims: tuple[int, ...]
    diagonal: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"factor dims must be a non-empty list of positive ints, got {self.factor_dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    @property
    def total_dim(self) -> int:
        return prod(self.factor_dims)

    def level_dim(self, j: int) -> int:
        return prod(self.factor_dims[:j])

    def embed(self, op, factor: int) -> HermitianOperator:
        """1 (x) ... (x) op (x) ... (x) 1 with op on the given factor (1-based)."""
        if not 1 <= factor <= self.n_factors:
            raise LevelOutOfRange(f"factor {factor} outside 1..{self.n_factors}")
        left = self.level_dim(factor - 1)
        right = self.total_dim // (left * self.factor_dims[factor - 1])
        op = op if isinstance(op, HermitianOperator) else HermitianOperator(op)
        if op.dim != self.factor_dims[factor - 1]:
            raise DimensionMismatch(f"factor {factor} has dim {self.factor_dims[factor - 1]}, got {op.dim}")
        if self.diagonal:
            if op.is_diagonal:
                d = op.diag
            else:
                m = op.matrix
                if np.max(np.abs(m - np.diag(np.diagonal(m)))) > STRUCT_TOL:
                    raise ValueError("diagonal-mode spaces only accept diagonal factor operators")
                d = np.real(np.diagonal(m))
            return HermitianOperator(np.kron(np.ones(left), np.kron(d, np.ones(right))))
        mat = np.kron(np.eye(left), np.kron(op.matrix, np.eye(right)))
        return HermitianOperator(mat, check=False)

    def lift(self, block, j: int) -> HermitianOperator:
        """block (x) 1 where block acts on factors 1..j."""
        rest = self.total_dim // self.level_dim(j)
        if isinstance(block, HermitianOperator) and block.is_diagonal:
            return HermitianOperator(np.repeat(block.diag, rest))
        if isinstance(block, HermitianOperator):
            block = block.matrix
        block = np.asarray(block)
        if block.ndim == 1:
            return HermitianOperator(np.repeat(np.real(block), rest))
        if block.shape[0] != self.level_dim(j):
            raise DimensionMismatch(f"level-{j} block must be {self.level_dim(j)}-dimensional")
        return HermitianOperator(np.kron(block, np.eye(rest)), check=False)

    def to_config(self) -> list[int]:
        return list(self.factor_dims)


@dataclass(frozen=True)
class Filtration:
    space: TensorSpace

    @property
    def n_levels(self) -> int:
        return self.space.n_factors

    def _check(self, j: int, dim: int) -> tuple[int, int]:
        if not 0 <= j <= self.n_levels:
            raise LevelOutOfRange(f"level {j} outside 0..{self.n_levels}")
        if dim != self.space.total_dim:
            raise DimensionMismatch(f"operator dim {dim} != space dim {self.space.total_dim}")
        left = self.space.level_dim(j)
        return left, self.space.total_dim // left

    def reduce(self, j: int, x):
        """Level-j block of E_j(x): normalized partial trace over factors j+1..K.

        Returns a 1-D array for diagonal operators, otherwise a square matrix.
        """
        if isinstance(x, HermitianOperator) and x.is_diagonal:
            left, right = self._check(j, x.dim)
            return x.diag.reshape(left, right).mean(axis=1)
        m = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
        left, right = self._check(j, m.shape[0])
        return np.einsum("arbr->ab", m.reshape(left, right, left, right)) / right

    def lift(self, j: int, block):
        return self.space.lift(block, j)


def cond_exp(filt: Filtration, j: int, x):
    """E_j(x).  Hermitian input gives a HermitianOperator, raw arrays give arrays."""
    block = filt.reduce(j, x)
    if isinstance(x, HermitianOperator):
        return filt.lift(j, block)
    rest = filt.space.total_dim // filt.space.level_dim(j)
    return np.kron(block, np.eye(rest))


def is_measurable(filt: Filtration, j: int, x: HermitianOperator, tol: float = STRUCT_TOL) -> bool:
    resid = cond_exp(filt, j, x) - x
    return resid.op_norm() <= tol * (1.0 + x.op_norm())


def verify_module_property(filt: Filtration, j: int, a, x, b) -> float:
    """||E_j(axb) - a E_j(x) b||; a and b must be level-j measurable."""
    am = a.matrix if isinstance(a, HermitianOperator) else np.asarray(a)
    bm = b.matrix if isinstance(b, HermitianOperator) else np.asarray(b)
    xm = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
    lhs = cond_exp(filt, j, am @ xm @ bm)
    rhs = am @ cond_exp(filt, j, xm) @ bm
    return op_norm(lhs - rhs)


def verify_tower(filt: Filtration, i: int, j: int, x) -> float:
    """max of ||E_i E_j x - E_min x|| and ||E_j E_i x - E_min x||."""
    xm = x.matrix if isinstance(x, HermitianOperator) else np.asarray(x)
    low = cond_exp(filt, min(i, j), xm)
    ij = cond_exp(filt, i, cond_exp(filt, j, xm))
    ji = cond_exp(filt, j, cond_exp(filt, i, xm))
    return max(op_norm(ij - low), op_norm(ji - low))


def trace_residual(filt: Filtration, j: int, x: HermitianOperator) -> float:
    return abs(trace_state(cond_exp(filt, j, x)) - trace_state(x))


def preserves_positivity(filt: Filtration, j: int, x: HermitianOperator, tol: float = STRUCT_TOL) -> bool:
    """True unless x is PSD and E_j(x) is not."""
    return (not is_psd(x, tol)) or is_psd(cond_exp(filt, j, x), tol)


def random_level_operator(filt: Filtration, j: int, rng: np.random.Generator) -> HermitianOperator:
    """Random Hermitian operator measurable at level j."""
    dim = filt.space.level_dim(j)
    if filt.space.diagonal:
        return filt.lift(j, rng.standard_normal(dim))
    return filt.lift(j, random_hermitian(dim, rng).matrix)


def independent_sum_construction(space: TensorSpace, elements: Sequence, tol: float = STRUCT_TOL):
    """Partial sums of per-factor elements, x_j acting on factor j.

    With the scalars as the common subalgebra, the factor algebras are order
    independent, so a nonpositive trace on every factor makes the partial
    sums a supermartingale (a martingale when all traces vanish).
    """
    from .martingale import AdaptedSequence

    if len(elements) > space.n_factors:
        raise ValueError(f"{len(elements)} elements for {space.n_factors} factors")
    filt = Filtration(space)
    total = HermitianOperator.zeros(space.total_dim, diagonal=space.diagonal)
    ops = [total]
    for k, el in enumerate(elements, start=1):
        el = el if isinstance(el, HermitianOperator) else HermitianOperator(el)
        mean = trace_state(el)
        if mean > tol * (1.0 + el.op_norm()):
            raise NotSupermartingale(f"factor {k} has positive mean {mean:.3e}")
        total = total + space.embed(el, k)
        ops.append(total)
    return AdaptedSequence(filt, tuple(ops))
