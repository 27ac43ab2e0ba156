"""Classical crossing probabilities: Monte Carlo estimates and an exact DP oracle.

The event is "S_n >= a + b n for some n in [m + i, horizon]" for a random
walk S_n with i.i.d. steps from a finite distribution, S_0 = 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from statistics import NormalDist

import numpy as np

from .bounds import BoundReport

BLOCK_SIZE = 8192
Z95 = NormalDist().inv_cdf(0.975)
HORIZON_CAP = 24
MAX_PATHS = 2**20
MAX_STATES = 10**7


class InvalidHorizon(ValueError):
    pass


class StateSpaceTooLarge(RuntimeError):
    pass


class ParameterMismatch(ValueError):
    pass


@dataclass(frozen=True)
class StepDistribution:
    values: tuple[float, ...]
    probs: tuple[float, ...]
    alpha: float | None = None
    beta: float | None = None
    gamma: float = 0.0

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        if not vals or len(vals) != len(probs):
            raise ValueError("values and probs must be nonempty and of equal length")
        if any(p <= 0 for p in probs):
            raise ValueError("probabilities must be positive")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", probs)
        alpha = -min(vals) if self.alpha is None else self.alpha
        beta = max(vals) if self.beta is None else self.beta
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "beta", float(beta))
        if min(vals) < -self.alpha - 1e-12 or max(vals) > self.beta + 1e-12:
            raise ValueError(f"support {vals} leaves [-{self.alpha}, {self.beta}]")
        if self.mean > -self.gamma + 1e-12:
            raise ValueError(f"mean {self.mean!r} exceeds -gamma = {-self.gamma!r}")

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    @classmethod
    def two_point(cls, alpha: float, beta: float, gamma: float = 0.0) -> "StepDistribution":
        """beta w.p. (alpha-gamma)/(alpha+beta), -alpha w.p. (beta+gamma)/(alpha+beta); mean -gamma."""
        if not (alpha > gamma >= 0 and beta > 0):
            raise ValueError(f"need alpha > gamma >= 0 and beta > 0, got {alpha}, {beta}, {gamma}")
        p = (alpha - gamma) / (alpha + beta)
        return cls((beta, -alpha), (p, 1.0 - p), alpha, beta, gamma)

    @classmethod
    def rademacher(cls) -> "StepDistribution":
        return cls((1.0, -1.0), (0.5, 0.5))


@dataclass(frozen=True)
class CrossingEstimate:
    n_paths: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    horizon: int
    seed: int
    a: float
    b: float
    m: int
    i: int

    def to_row(self) -> dict:
        return {
            "seed": self.seed,
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "a": self.a,
            "b": self.b,
            "m": self.m,
            "i": self.i,
            "p_hat": self.p_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
        }


def wilson_interval(hits: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


def _check_window(m: int, i: int, horizon: int):
    if m < 0 or i < 0:
        raise InvalidHorizon("m and i must be nonnegative")
    if horizon < m + i:
        raise InvalidHorizon(f"horizon {horizon} < m + i = {m + i}")


def _block_hits(dist: StepDistribution, thetas: np.ndarray, start: int, horizon: int, seed: int, block: int, size: int) -> int:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))
    cum = np.cumsum(dist.probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random((size, horizon)), side="right")
    sums = np.zeros((size, horizon + 1))
    np.cumsum(np.asarray(dist.values)[idx], axis=1, out=sums[:, 1:])
    window = thetas[start:]
    hit = np.any(sums[:, start:] >= window - 1e-9 * (1 + np.abs(window)), axis=1)
    return int(np.count_nonzero(hit))


def simulate_crossing(
    dist: StepDistribution,
    a: float,
    b: float,
    m: int,
    i: int,
    horizon: int,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> CrossingEstimate:
    """Monte Carlo estimate with a 95% Wilson interval.

    Paths are drawn in fixed-size blocks, block k from its own Philox stream
    keyed by (seed, k), so the count does not depend on ``workers``.
    """
    _check_window(m, i, horizon)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    start = m + i
    thetas = a + b * np.arange(horizon + 1, dtype=float)
    sizes = [min(BLOCK_SIZE, n_paths - k) for k in range(0, n_paths, BLOCK_SIZE)]
    jobs = [(dist, thetas, start, horizon, seed, k, s) for k, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = sum(pool.map(lambda args: _block_hits(*args), jobs))
    else:
        hits = sum(_block_hits(*job) for job in jobs)
    lo, hi = wilson_interval(hits, n_paths)
    return CrossingEstimate(n_paths, hits, hits / n_paths, lo, hi, horizon, seed, a, b, m, i)


def _as_fraction(x: float, max_den: int = 10**6) -> Fraction | None:
    f = Fraction(x).limit_denominator(max_den)
    return f if abs(float(f) - x) <= 1e-15 * max(1.0, abs(x)) else None


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def enumerate_exact(
    dist: StepDistribution,
    a: float,
    b: float,
    m: int,
    i: int,
    horizon: int,
    horizon_cap: int = HORIZON_CAP,
) -> float:
    """Exact crossing probability.

    With rational support and thresholds the partial sums are tracked as
    scaled integers and the DP absorbs mass at the first crossing.
    Otherwise every path is enumerated, up to 2^20 paths.
    """
    _check_window(m, i, horizon)
    if horizon > horizon_cap:
        raise StateSpaceTooLarge(f"horizon {horizon} exceeds the cap {horizon_cap}")
    start = m + i
    fracs = [_as_fraction(v) for v in (*dist.values, a, b)]
    if all(f is not None for f in fracs):
        return _dp_exact(dist, fracs, start, horizon)
    return _enumerate_paths(dist, a, b, start, horizon)


def _dp_exact(dist: StepDistribution, fracs: list[Fraction], start: int, horizon: int) -> float:
    *vals, a, b = fracs
    scale = reduce(_lcm, (f.denominator for f in fracs), 1)
    steps = [int(v * scale) for v in vals]
    lo_step, hi_step = min(steps), max(steps)
    lowest, highest = min(0, horizon * lo_step), max(0, horizon * hi_step)
    width = highest - lowest + 1
    if width > MAX_STATES:
        raise StateSpaceTooLarge(f"{width} partial-sum states")
    offset = -lowest  # array index of S = 0
    mass = np.zeros(width)
    mass[offset] = 1.0
    crossed = 0.0

    def absorb(n: int) -> float:
        need = math.ceil((a + b * n) * scale)  # S_scaled >= need
        first = max(0, need + offset)
        if first >= width:
            return 0.0
        got = float(mass[first:].sum())
        mass[first:] = 0.0
        return got

    if start == 0:
        crossed += absorb(0)
    for n in range(1, horizon + 1):
        nxt = np.zeros(width)
        for s, p in zip(steps, dist.probs):
            if s >= 0:
                nxt[s:] += p * mass[: width - s]
            else:
                nxt[: width + s] += p * mass[-s:]
        mass = nxt
        if n >= start:
            crossed += absorb(n)
    return min(1.0, crossed)


def _enumerate_paths(dist: StepDistribution, a: float, b: float, start: int, horizon: int) -> float:
    k = len(dist.values)
    if k**horizon > MAX_PATHS:
        raise StateSpaceTooLarge(f"{k}^{horizon} paths exceed {MAX_PATHS}")
    vals = np.asarray(dist.values)
    logp = np.log(np.asarray(dist.probs))

    def crosses(s, n):
        theta = a + b * n
        return s >= theta - 1e-9 * (1 + abs(theta))

    sums = np.zeros(1)
    lp = np.zeros(1)
    hit = np.array([start == 0 and crosses(0.0, 0)])
    for n in range(1, horizon + 1):
        sums = (sums[:, None] + vals[None, :]).ravel()
        lp = (lp[:, None] + logp[None, :]).ravel()
        hit = np.repeat(hit, k)
        if n >= start:
            hit |= crosses(sums, n)
    return float(min(1.0, np.exp(lp[hit]).sum()))


@dataclass(frozen=True)
class Verdict:
    status: str  # "pass", "warn" or "fail"
    value: float
    rhs: float
    margin: float

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def compare_bound(result, report: BoundReport, m: int, *, start: int | None = None) -> Verdict:
    """Check an exact probability or a Monte Carlo estimate against rhs(m).

    Exact values pass iff value <= rhs + 1e-12.  Estimates fail only when the
    whole Wilson interval lies above rhs; a point estimate above rhs with a
    straddling interval is a warning.
    """
    if m not in report.log_rhs_by_m:
        raise ParameterMismatch(f"report has no rhs for m={m}")
    rhs = report.rhs(m)
    if isinstance(result, CrossingEstimate):
        if result.m != m:
            raise ParameterMismatch(f"estimate is for m={result.m}, not {m}")
        if result.m + result.i < m + report.minimal_index:
            raise ParameterMismatch("estimate window starts before m + minimal_index")
        if result.ci_low > rhs:
            status = "fail"
        elif result.p_hat > rhs:
            status = "warn"
        else:
            status = "pass"
        return Verdict(status, result.p_hat, rhs, rhs - result.p_hat)
    if start is not None and start < m + report.minimal_index:
        raise ParameterMismatch("exact window starts before m + minimal_index")
    value = float(result)
    return Verdict("pass" if value <= rhs + 1e-12 else "fail", value, rhs, rhs - value)
