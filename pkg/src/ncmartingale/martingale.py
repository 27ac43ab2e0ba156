"""Adapted operator sequences and the checks run on them before a bound applies.

Sequences store the partial sums s_0..s_N; the difference sequence is
derived with the convention s_{-1} = 0.  Step n is measurable at level
min(n, K), so steps past the last tensor factor live in the full algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .operator_core import HermitianOperator, func_calculus, is_psd
from .prob_space import Filtration, cond_exp, is_measurable

MARTINGALE = "martingale"
SUPERMARTINGALE = "supermartingale"
UNVERIFIED = "unverified"

MGF_RTOL = 1e-8


class NotAdapted(ValueError):
    pass


@dataclass(frozen=True)
class AdaptedSequence:
    filt: Filtration
    ops: tuple[HermitianOperator, ...]

    def __post_init__(self):
        ops = tuple(self.ops)
        if not ops:
            raise ValueError("sequence must be nonempty")
        object.__setattr__(self, "ops", ops)
        for j, s in enumerate(ops):
            if not is_measurable(self.filt, self.level(j), s):
                raise NotAdapted(f"s_{j} is not measurable at level {self.level(j)}")

    def level(self, n: int) -> int:
        return min(n, self.filt.n_levels)

    @property
    def length(self) -> int:
        """Index N of the last element."""
        return len(self.ops) - 1

    @property
    def diagonal(self) -> bool:
        return self.ops[0].is_diagonal

    @cached_property
    def kind(self) -> str:
        return classify(self)

    @cached_property
    def scale(self) -> float:
        return 1.0 + max(s.op_norm() for s in self.ops)

    def __len__(self) -> int:
        return len(self.ops)

    def __getitem__(self, n: int) -> HermitianOperator:
        return self.ops[n]


def from_final(filt: Filtration, x: HermitianOperator) -> AdaptedSequence:
    """The martingale s_j = E_j(x), j = 0..K."""
    return AdaptedSequence(filt, tuple(cond_exp(filt, j, x) for j in range(filt.n_levels + 1)))


def from_differences(filt: Filtration, diffs: Sequence[HermitianOperator]) -> AdaptedSequence:
    total = diffs[0]
    ops = [total]
    for d in diffs[1:]:
        total = total + d
        ops.append(total)
    return AdaptedSequence(filt, tuple(ops))


def differences(seq: AdaptedSequence) -> list[HermitianOperator]:
    out = [seq.ops[0]]
    for prev, cur in zip(seq.ops, seq.ops[1:]):
        out.append(cur - prev)
    return out


def classify(seq: AdaptedSequence, tol: float = 1e-9) -> str:
    scale = 1.0 + max(s.op_norm() for s in seq.ops)
    gaps = []
    for j in range(seq.length):
        gaps.append(seq.ops[j] - cond_exp(seq.filt, seq.level(j), seq.ops[j + 1]))
    if all(g.op_norm() <= tol * scale for g in gaps):
        return MARTINGALE
    if all(is_psd(g, tol) for g in gaps):
        return SUPERMARTINGALE
    return UNVERIFIED


@dataclass(frozen=True)
class BoundedDifferences:
    ok: bool
    lower_margin: float  # min eigenvalue of dx_j + alpha over j
    upper_margin: float  # min eigenvalue of beta - dx_j over j


def check_bounded_differences(seq: AdaptedSequence, alpha: float, beta: float) -> BoundedDifferences:
    """-alpha <= dx_j <= beta for j >= 1."""
    diffs = differences(seq)[1:]
    if not diffs:
        return BoundedDifferences(True, float("inf"), float("inf"))
    ok = all(is_psd(d + alpha) and is_psd(beta - d) for d in diffs)
    lower = min(float(d.eigenvalues[0]) + alpha for d in diffs)
    upper = min(beta - float(d.eigenvalues[-1]) for d in diffs)
    return BoundedDifferences(ok, lower, upper)


def check_drift(seq: AdaptedSequence, gamma: float) -> float:
    """Smallest eigenvalue of -gamma - E_{n-1}(dx_n) over n >= 1 (>= 0 means drift holds)."""
    worst = float("inf")
    diffs = differences(seq)
    for n in range(1, len(diffs)):
        lo = seq.level(n - 1)
        block = seq.filt.reduce(lo, diffs[n])
        top = np.max(block) if block.ndim == 1 else np.linalg.eigvalsh(block)[-1]
        worst = min(worst, -gamma - float(top))
    return worst


@dataclass(frozen=True)
class MgfEnvelope:
    """Scalar envelope f with f(t) <= exp(-gamma t + lam t^2), held in log form."""

    log_f: Callable[[np.ndarray], np.ndarray]
    gamma: float
    lam: float
    name: str = "custom"
    grid: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.gamma < 0 or self.lam <= 0:
            raise ValueError(f"need gamma >= 0 and lambda > 0, got {self.gamma}, {self.lam}")
        ts = np.asarray(self.grid) if self.grid else np.concatenate(([0.0], np.geomspace(1e-3, 50.0, 64)))
        lf = np.asarray(self.log_f(ts), dtype=float)
        if not np.all(np.isfinite(lf)):
            raise ValueError(f"envelope {self.name} is not positive and finite on its grid")
        cap = self.log_cap(ts)
        if np.any(lf > cap + 1e-12 * (1.0 + np.abs(cap))):
            bad = float(ts[np.argmax(lf - cap)])
            raise ValueError(f"envelope {self.name} exceeds exp(-gamma t + lambda t^2) at t={bad}")

    def log_cap(self, t):
        t = np.asarray(t, dtype=float)
        return -self.gamma * t + self.lam * t * t

    def __call__(self, t):
        return np.exp(self.log_f(np.asarray(t, dtype=float)))


def saturated_envelope(gamma: float, lam: float) -> MgfEnvelope:
    """f(t) = exp(-gamma t + lam t^2) exactly; gives constant A = 1."""
    return MgfEnvelope(lambda t: -gamma * np.asarray(t) + lam * np.asarray(t) ** 2, gamma, lam, "saturated")


def grid_envelope(ts, fs, gamma: float, lam: float) -> MgfEnvelope:
    """Envelope given by samples, interpolated linearly in log f.

    Outside the sampled range the cap exp(-gamma t + lam t^2) is used.
    """
    ts = np.asarray(ts, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if ts.shape != fs.shape or ts.ndim != 1 or ts.size < 2:
        raise ValueError("need matching 1-D sample arrays with at least two points")
    if np.any(fs <= 0) or not np.all(np.isfinite(fs)):
        raise ValueError("envelope samples must be positive and finite")
    order = np.argsort(ts)
    ts, lfs = ts[order], np.log(fs[order])
    cap = -gamma * ts + lam * ts * ts
    if np.any(lfs > cap + 1e-12 * (1.0 + np.abs(cap))):
        bad = float(ts[np.argmax(lfs - cap)])
        raise ValueError(f"envelope sample at t={bad} exceeds exp(-gamma t + lambda t^2)")

    def log_f(t):
        t = np.asarray(t, dtype=float)
        cap = -gamma * t + lam * t * t
        inside = (t >= ts[0]) & (t <= ts[-1])
        return np.where(inside, np.minimum(np.interp(t, ts, lfs), cap), cap)

    return MgfEnvelope(log_f, gamma, lam, "explicit-grid", tuple(ts))


@dataclass(frozen=True)
class BoundParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.0
    lam: float = 0.5
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    m: int = 1

    def __post_init__(self):
        for name in ("alpha", "beta", "lam", "a", "b", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")

    @property
    def khan_lambda(self) -> float:
        return (self.alpha + self.beta) ** 2 / 8.0

    @property
    def ms(self) -> list[int]:
        return list(range(1, int(self.m) + 1))


@dataclass(frozen=True)
class MgfCheck:
    worst: float  # min eigenvalue of f(t) - E_{n-1}(exp(t dx_n)) over the grid
    worst_relative: float  # same, divided by max(1, f(t)) per check
    at_n: int
    at_t: float

    @property
    def ok(self) -> bool:
        return self.worst_relative >= -MGF_RTOL


def default_t_grid(t0: float, points: int = 64) -> np.ndarray:
    grid = np.geomspace(1e-3, 10.0 * t0, points)
    return np.unique(np.append(grid, t0))


def _exp_reduced(block: np.ndarray, t: float, evals=None, evecs=None) -> np.ndarray:
    if block.ndim == 1:
        return np.exp(t * block)
    return (evecs * np.exp(t * evals)) @ evecs.conj().T


def _partial_mean(block: np.ndarray, left: int, right: int) -> np.ndarray:
    if block.ndim == 1:
        return block.reshape(left, right).mean(axis=1)
    return np.einsum("arbr->ab", block.reshape(left, right, left, right)) / right


def check_mgf_condition(seq: AdaptedSequence, env: MgfEnvelope, t_grid) -> MgfCheck:
    """Worst violation of E_{n-1}(exp(t dx_n)) <= f(t) over n >= 1 and the t grid.

    Works on level blocks: dx_n is reduced to its level-n block, exponentiated
    there, and partially traced down to level n-1.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise ValueError("t_grid must be nonempty")
    fs = env(t_grid)
    space = seq.filt.space
    diffs = differences(seq)
    worst, worst_rel, at_n, at_t = np.inf, np.inf, 0, float(t_grid[0])
    for n in range(1, len(diffs)):
        hi, lo = seq.level(n), seq.level(n - 1)
        block = seq.filt.reduce(hi, diffs[n])
        left = space.level_dim(lo)
        right = space.level_dim(hi) // left
        evals = evecs = None
        if block.ndim == 2:
            evals, evecs = np.linalg.eigh(block)
        for t, ft in zip(t_grid, fs):
            cond = _partial_mean(_exp_reduced(block, t, evals, evecs), left, right)
            top = float(np.max(cond)) if cond.ndim == 1 else float(np.linalg.eigvalsh(cond)[-1])
            margin = ft - top
            rel = margin / max(1.0, ft)
            if rel < worst_rel:
                worst, worst_rel, at_n, at_t = margin, rel, n, float(t)
    if at_n == 0:
        worst = worst_rel = float("inf")
    return MgfCheck(float(worst), float(worst_rel), at_n, at_t)


def aux_sequence(seq: AdaptedSequence, a: float, b: float, t: float) -> list[HermitianOperator]:
    """y_n = exp(t s_n - (a + b n) t)."""
    if t <= 0:
        raise ValueError("t must be positive")
    return [func_calculus(t * s - (a + b * n) * t, np.exp) for n, s in enumerate(seq.ops)]
