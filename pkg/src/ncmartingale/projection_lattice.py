"""Projection lattice operations and tail-event projections.

A tail event is the join of spectral projections 1_[theta_n, inf)(s_n) over
a finite window of indices; its normalized trace is the noncommutative
probability of "s_n crosses theta_n for some n in the window".  Infinite
joins are truncated at a horizon; the trace is monotone in the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .operator_core import DimensionMismatch, HermitianOperator, Projection, spectral_projection
from .martingale import AdaptedSequence

RANK_RTOL = 1e-9
MEET_TOL = 1e-8
LEQ_TOL = 1e-8


class RangeError(IndexError):
    pass


def _same_dim(p: Projection, q: Projection):
    if p.dim != q.dim:
        raise DimensionMismatch(f"{p.dim} vs {q.dim}")


def _orth(stack: np.ndarray, dim: int) -> np.ndarray:
    if stack.shape[1] == 0:
        return stack
    u, s, _ = np.linalg.svd(stack, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return stack[:, :0]
    rank = int(np.count_nonzero(s > RANK_RTOL * dim * s[0]))
    return u[:, :rank]


def join_all(projections: Sequence[Projection]) -> Projection:
    """Left-to-right join of a nonempty list of projections."""
    first = projections[0]
    for q in projections[1:]:
        _same_dim(first, q)
    if all(p.is_diagonal for p in projections):
        acc = np.zeros(first.dim)
        for p in projections:
            acc = np.maximum(acc, p.operator.diag)
        return Projection(HermitianOperator(acc))
    basis = first.range_basis
    for q in projections[1:]:
        basis = _orth(np.hstack([basis, q.range_basis]), first.dim)
    return Projection.from_basis(basis, first.dim)


def join(p: Projection, q: Projection) -> Projection:
    """Projection onto range(p) + range(q)."""
    return join_all([p, q])


def meet(p: Projection, q: Projection) -> Projection:
    """Projection onto range(p) and range(q) intersected: eigenvalue-2 space of p + q."""
    _same_dim(p, q)
    if p.is_diagonal and q.is_diagonal:
        return Projection(HermitianOperator(np.minimum(p.operator.diag, q.operator.diag)))
    spec = (p.operator + q.operator).spectral
    keep = spec.eigenvalues >= 2.0 - MEET_TOL
    return Projection.from_basis(spec.eigenvectors[:, keep], p.dim)


def leq_proj(p: Projection, q: Projection) -> bool:
    """p <= q, i.e. ||qp - p|| is within tolerance."""
    _same_dim(p, q)
    if p.is_diagonal and q.is_diagonal:
        pd, qd = p.operator.diag, q.operator.diag
        return bool(np.max(np.abs(qd * pd - pd), initial=0.0) <= LEQ_TOL)
    pm, qm = p.operator.matrix, q.operator.matrix
    return bool(np.linalg.norm(qm @ pm - pm, 2) <= LEQ_TOL)


Thresholds = Callable[[int], float] | Mapping[int, float]


def _threshold(thresholds: Thresholds, n: int) -> float:
    if callable(thresholds):
        return float(thresholds(n))
    return float(thresholds[n])


def linear_thresholds(a: float, b: float) -> Callable[[int], float]:
    """n -> a + b n."""
    return lambda n: a + b * n


@dataclass(frozen=True)
class TailEvent:
    start: int
    horizon: int
    thresholds: dict[int, float]
    projection: Projection | None
    trace: float

    @property
    def empty(self) -> bool:
        return self.start > self.horizon

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "horizon": self.horizon,
            "trace": self.trace,
            "thresholds": {str(k): v for k, v in self.thresholds.items()},
        }


def tail_event(seq: AdaptedSequence, thresholds: Thresholds, start: int, horizon: int) -> TailEvent:
    """Join of 1_[theta_n, inf)(s_n) for n in [start, horizon]."""
    if start < 0 or start > horizon or horizon > seq.length:
        raise RangeError(f"need 0 <= start <= horizon <= {seq.length}, got start={start}, horizon={horizon}")
    thetas = {n: _threshold(thresholds, n) for n in range(start, horizon + 1)}
    projs = [spectral_projection(seq.ops[n], theta) for n, theta in thetas.items()]
    p = join_all(projs)
    return TailEvent(start, horizon, thetas, p, p.trace)


def empty_tail_event(start: int, horizon: int) -> TailEvent:
    """Placeholder for a window that starts after the truncation horizon."""
    return TailEvent(start, horizon, {}, None, 0.0)


def tail_meet_trace(
    seq: AdaptedSequence, thresholds: Thresholds, m_list: Sequence[int], horizon: int
) -> list[tuple[int, float]]:
    """Trace of the tail event starting at each m, truncated at the horizon.

    The events are nested (later starts give smaller joins), so the traces
    are non-increasing and their meet is the last one.
    """
    m_list = list(m_list)
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise RangeError("m_list must be strictly increasing")
    if m_list and m_list[-1] > horizon:
        raise RangeError(f"m={m_list[-1]} beyond horizon {horizon}")
    if horizon > seq.length:
        raise RangeError(f"horizon {horizon} beyond sequence length {seq.length}")
    # build joins from the far end so each start reuses the later join
    projs = {n: spectral_projection(seq.ops[n], _threshold(thresholds, n)) for n in range(min(m_list, default=horizon), horizon + 1)}
    suffix: dict[int, Projection] = {}
    acc = None
    for n in range(horizon, min(m_list, default=horizon) - 1, -1):
        acc = projs[n] if acc is None else join(projs[n], acc)
        suffix[n] = acc
    return [(m, suffix[m].trace) for m in m_list]
