"""Closed-form right-hand sides of the linear-boundary crossing tail bounds.

All exponentials are handled in log space; every report carries both the
linear and the log value of each bound.

Modes and the row tags they are reported under:

=================  =====================  =========================================
mode               tag                    threshold on s_n, bound
=================  =====================  =========================================
theorem2_a         eq32                   a + b n,  A^m exp(-a t0),  t0=(b+g)/lam
theorem2_b         eq33                   b n,      A0^m exp(-m (b+g)^2 / (4 lam))
khan_a             cor_khan_a             eq32 with the two-point envelope
khan_b             cor_khan_b             eq33 with the two-point envelope
ncbr               cor_ncbr               a + b n,  A^m exp(-8ab/(alpha+beta)^2)
azuma_nc           cor_azuma_nc           c n,      B^m exp(-2mc^2/(alpha+beta)^2)
azuma_classical    cor_azuma_classical    c n,      exp(-mc^2/(2 alpha^2))
=================  =====================  =========================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .martingale import (
    MARTINGALE,
    SUPERMARTINGALE,
    AdaptedSequence,
    BoundParams,
    MgfEnvelope,
    check_bounded_differences,
    check_drift,
    check_mgf_condition,
    default_t_grid,
)
from .projection_lattice import RangeError, linear_thresholds, tail_event

MAX_INDEX = 10**6
MARGIN_TOL = 1e-9

TAGS = {
    "theorem2_a": "eq32",
    "theorem2_b": "eq33",
    "ncbr": "cor_ncbr",
    "azuma_nc": "cor_azuma_nc",
    "azuma_classical": "cor_azuma_classical",
    "khan_a": "cor_khan_a",
    "khan_b": "cor_khan_b",
}


class NoFiniteIndex(ArithmeticError):
    def __init__(self, constant: float, message: str | None = None):
        self.constant = constant
        super().__init__(message or f"constant {constant!r} >= 1: no index i with A^i <= 1 - A")


class InvalidParams(ValueError):
    pass


class PremiseViolation(ValueError):
    pass


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def minimal_index(log_constant: float) -> int:
    """Smallest i >= 1 with A^i <= 1 - A, for A = exp(log_constant)."""
    constant = _exp(log_constant)
    if not log_constant < 0.0:
        raise NoFiniteIndex(constant)
    log_gap = math.log(-math.expm1(log_constant))  # log(1 - A)
    i = max(1, math.ceil(log_gap / log_constant))
    if i > MAX_INDEX + 1:
        raise NoFiniteIndex(constant, f"minimal index for A={constant!r} exceeds the cap {MAX_INDEX}")
    while i > 1 and (i - 1) * log_constant <= log_gap:
        i -= 1
    while i * log_constant > log_gap:
        i += 1
    if i > MAX_INDEX:
        raise NoFiniteIndex(constant, f"minimal index for A={constant!r} exceeds the cap {MAX_INDEX}")
    return i


@dataclass
class BoundReport:
    mode: str
    t0: float
    log_constant: float
    minimal_index: int
    log_rhs_by_m: dict[int, float]
    lhs_by_m: dict[int, float] = field(default_factory=dict)
    premises: dict[str, object] = field(default_factory=dict)
    horizon: int | None = None

    @property
    def tag(self) -> str:
        return TAGS[self.mode]

    @property
    def constant(self) -> float:
        return _exp(self.log_constant)

    @property
    def constant_le_one(self) -> bool:
        return self.log_constant <= 0.0

    @property
    def rhs_by_m(self) -> dict[int, float]:
        return {m: _exp(v) for m, v in self.log_rhs_by_m.items()}

    @property
    def margins(self) -> dict[int, float]:
        rhs = self.rhs_by_m
        return {m: rhs[m] - lhs for m, lhs in self.lhs_by_m.items()}

    @property
    def passed(self) -> bool:
        return all(v >= -MARGIN_TOL for v in self.margins.values())

    def rhs(self, m: int) -> float:
        return self.rhs_by_m[m]

    def rows(self) -> list[dict]:
        rhs, margins = self.rhs_by_m, self.margins
        out = []
        for m, log_rhs in self.log_rhs_by_m.items():
            out.append(
                {
                    "tag": self.tag,
                    "mode": self.mode,
                    "t0": self.t0,
                    "constant": self.constant,
                    "minimal_index": self.minimal_index,
                    "m": m,
                    "rhs": rhs[m],
                    "lhs": self.lhs_by_m.get(m),
                    "margin": margins.get(m),
                    "log_rhs": log_rhs,
                }
            )
        return out

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "mode": self.mode,
            "t0": self.t0,
            "constant": self.constant,
            "log_constant": self.log_constant,
            "constant_le_one": self.constant_le_one,
            "minimal_index": self.minimal_index,
            "horizon": self.horizon,
            "premises": self.premises,
            "rows": self.rows(),
            "passed": self.passed,
        }


def _ms(params: BoundParams, ms: Sequence[int] | None) -> list[int]:
    ms = params.ms if ms is None else [int(m) for m in ms]
    if any(m < 1 for m in ms):
        raise InvalidParams("m must be a positive integer")
    return ms


def lemma_gap(lam, x):
    """exp(x^2/8) - (lam exp((1-lam) x) + (1-lam) exp(-lam x)); vectorized.

    The ones cancel exactly through expm1, so the gap keeps full relative
    precision near x = 0.  Overflow only happens when the true value does.
    """
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any((lam < 0) | (lam > 1)):
        raise InvalidParams("lambda must lie in [0, 1]")
    q = x * x / 8.0
    with np.errstate(over="ignore", invalid="ignore"):
        direct = np.expm1(q) - (lam * np.expm1((1 - lam) * x) + (1 - lam) * np.expm1(-lam * x))
        guarded = -np.expm1(lemma_log_ratio(lam, x)) * np.exp(q)
    out = np.where(np.abs(x) <= 50.0, direct, guarded)
    return float(out) if out.ndim == 0 else out


def lemma_log_ratio(lam, x):
    """log(lam e^{(1-lam)x} + (1-lam) e^{-lam x}) - x^2/8, which is <= 0."""
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.logaddexp(np.log(lam) + (1 - lam) * x, np.log1p(-lam) - lam * x) - x * x / 8.0


def theorem2_bound_a(params: BoundParams, env: MgfEnvelope, ms=None, *, mode: str = "theorem2_a") -> BoundReport:
    """t0 = (b+g)/lam, A = e^{-b t0} f(t0), rhs(m) = A^m e^{-a (b+g)/lam}.

    The drift g and curvature lam are those of the envelope.
    """
    g, lam = env.gamma, env.lam
    t0 = (params.b + g) / lam
    log_a = -params.b * t0 + float(env.log_f(np.asarray(t0)))
    i = minimal_index(log_a)
    log_rhs = {m: m * log_a - params.a * t0 for m in _ms(params, ms)}
    return BoundReport(mode, t0, log_a, i, log_rhs)


def theorem2_bound_b(params: BoundParams, env: MgfEnvelope, ms=None, *, mode: str = "theorem2_b") -> BoundReport:
    """t0 = (b+g)/(2 lam), A0 = e^{-(b-g) t0/2} f(t0), rhs(m) = A0^m e^{-m (b+g)^2/(4 lam)}."""
    g, lam = env.gamma, env.lam
    t0 = (params.b + g) / (2.0 * lam)
    log_a0 = -0.5 * (params.b - g) * t0 + float(env.log_f(np.asarray(t0)))
    i = minimal_index(log_a0)
    decay = (params.b + g) ** 2 / (4.0 * lam)
    log_rhs = {m: m * log_a0 - m * decay for m in _ms(params, ms)}
    return BoundReport(mode, t0, log_a0, i, log_rhs)


def _khan_pq(alpha: float, beta: float, gamma: float) -> tuple[float, float]:
    if not (alpha > 0 and beta > 0 and gamma >= 0):
        raise InvalidParams(f"need alpha, beta > 0 and gamma >= 0, got {alpha}, {beta}, {gamma}")
    if alpha <= gamma:
        raise InvalidParams(f"need alpha > gamma, got alpha={alpha}, gamma={gamma}")
    return (alpha - gamma) / (alpha + beta), (beta + gamma) / (alpha + beta)


def khan_envelope(alpha: float, beta: float, gamma: float = 0.0) -> MgfEnvelope:
    """f(t) = e^{-g t}(p e^{(alpha+beta) t q} + q e^{-(alpha+beta) t p}).

    This is the moment generating function of the two-point step that takes
    beta with probability p and -alpha with probability q.
    """
    p, q = _khan_pq(alpha, beta, gamma)
    w = alpha + beta
    lp, lq = math.log(p), math.log(q)

    def log_f(t):
        t = np.asarray(t, dtype=float)
        return -gamma * t + np.logaddexp(lp + w * t * q, lq - w * t * p)

    return MgfEnvelope(log_f, gamma, w * w / 8.0, "khan")


def _khan_log_f(alpha: float, beta: float, gamma: float, t: float) -> float:
    p, q = _khan_pq(alpha, beta, gamma)
    w = alpha + beta
    hi, lo = w * t * q, -w * t * p
    top = max(hi, lo)
    return -gamma * t + top + math.log(p * math.exp(hi - top) + q * math.exp(lo - top))


def khan_bounds(params: BoundParams, ms=None) -> tuple[BoundReport, BoundReport]:
    """Both two-point-envelope bounds, in their explicit (alpha+beta)^2 forms."""
    al, be, g, a, b = params.alpha, params.beta, params.gamma, params.a, params.b
    w2 = (al + be) ** 2
    t_a = 8.0 * (b + g) / w2
    log_a = -b * t_a + _khan_log_f(al, be, g, t_a)
    t_b = 4.0 * (b + g) / w2
    log_a0 = -0.5 * (b - g) * t_b + _khan_log_f(al, be, g, t_b)
    ms = _ms(params, ms)
    rep_a = BoundReport(
        "khan_a", t_a, log_a, minimal_index(log_a), {m: m * log_a - 8.0 * a * (b + g) / w2 for m in ms}
    )
    rep_b = BoundReport(
        "khan_b", t_b, log_a0, minimal_index(log_a0), {m: m * log_a0 - 2.0 * m * (b + g) ** 2 / w2 for m in ms}
    )
    return rep_a, rep_b


def _two_term_log(w1: float, e1: float, w2: float, e2: float) -> float:
    top = max(e1, e2)
    return top + math.log(w1 * math.exp(e1 - top) + w2 * math.exp(e2 - top))


def ncbr_log_constant(alpha: float, beta: float, b: float) -> float:
    w2 = (alpha + beta) ** 2
    return _two_term_log(
        beta / (alpha + beta), -8.0 * b * (b + alpha) / w2, alpha / (alpha + beta), -8.0 * b * (b - beta) / w2
    )


def ncbr_bound(params: BoundParams, ms=None) -> BoundReport:
    """Martingale bound with steps in [-alpha, beta]: A^m exp(-8ab/(alpha+beta)^2)."""
    al, be, a, b = params.alpha, params.beta, params.a, params.b
    w2 = (al + be) ** 2
    log_a = ncbr_log_constant(al, be, b)
    log_rhs = {m: m * log_a - 8.0 * a * b / w2 for m in _ms(params, ms)}
    return BoundReport("ncbr", 8.0 * b / w2, log_a, minimal_index(log_a), log_rhs)


def azuma_nc_log_constant(alpha: float, beta: float, c: float) -> float:
    w2 = (alpha + beta) ** 2
    return _two_term_log(
        beta / (alpha + beta), -2.0 * c * (c + 2 * alpha) / w2, alpha / (alpha + beta), -2.0 * c * (c - 2 * beta) / w2
    )


def azuma_nc_bound(params: BoundParams, ms=None) -> BoundReport:
    """Threshold c n: B^m exp(-2 m c^2/(alpha+beta)^2)."""
    al, be, c = params.alpha, params.beta, params.c
    w2 = (al + be) ** 2
    log_b = azuma_nc_log_constant(al, be, c)
    log_rhs = {m: m * log_b - 2.0 * m * c * c / w2 for m in _ms(params, ms)}
    return BoundReport("azuma_nc", 4.0 * c / w2, log_b, minimal_index(log_b), log_rhs)


def azuma_classical_bound(alpha: float, c: float, m: int) -> float:
    if not (alpha > 0 and c > 0):
        raise InvalidParams("alpha and c must be positive")
    if int(m) != m or m < 1:
        raise InvalidParams("m must be a positive integer")
    return math.exp(-m * c * c / (2.0 * alpha * alpha))


def azuma_classical_report(params: BoundParams, ms=None) -> BoundReport:
    """Symmetric steps |dZ| <= alpha; the start index comes from B."""
    if params.alpha != params.beta:
        raise InvalidParams("the classical Azuma bound needs alpha == beta")
    nc = azuma_nc_bound(params, ms)
    al, c = params.alpha, params.c
    log_rhs = {m: -m * c * c / (2.0 * al * al) for m in nc.log_rhs_by_m}
    return BoundReport("azuma_classical", nc.t0, nc.log_constant, nc.minimal_index, log_rhs)


def bound_report(mode: str, params: BoundParams, env: MgfEnvelope | None = None, ms=None) -> BoundReport:
    if mode == "theorem2_a":
        return theorem2_bound_a(params, env, ms)
    if mode == "theorem2_b":
        return theorem2_bound_b(params, env, ms)
    if mode == "khan_a":
        return khan_bounds(params, ms)[0]
    if mode == "khan_b":
        return khan_bounds(params, ms)[1]
    if mode == "ncbr":
        return ncbr_bound(params, ms)
    if mode == "azuma_nc":
        return azuma_nc_bound(params, ms)
    if mode == "azuma_classical":
        return azuma_classical_report(params, ms)
    raise InvalidParams(f"unknown mode {mode!r}")


def thresholds_for(mode: str, params: BoundParams):
    """Crossing levels n -> theta_n for the event each mode bounds."""
    if mode in ("theorem2_a", "khan_a", "ncbr"):
        return linear_thresholds(params.a, params.b)
    if mode in ("theorem2_b", "khan_b"):
        return linear_thresholds(0.0, params.b)
    if mode in ("azuma_nc", "azuma_classical"):
        return linear_thresholds(0.0, params.c)
    raise InvalidParams(f"unknown mode {mode!r}")


def envelope_for(mode: str, params: BoundParams, env: MgfEnvelope | None = None) -> MgfEnvelope:
    """Envelope whose grid condition must hold for the mode to apply."""
    if mode in ("theorem2_a", "theorem2_b"):
        if env is None:
            raise InvalidParams(f"mode {mode} needs an envelope")
        return env
    if mode in ("khan_a", "khan_b"):
        return khan_envelope(params.alpha, params.beta, params.gamma)
    return khan_envelope(params.alpha, params.beta, 0.0)


def verify_inequality(
    seq: AdaptedSequence,
    params: BoundParams,
    env: MgfEnvelope | None,
    mode: str,
    horizon: int,
    ms=None,
    *,
    t_points: int = 64,
) -> BoundReport:
    """Fill the truncated tail-event traces (LHS) next to the bound (RHS).

    The window for each m starts at m + minimal_index; a window that starts
    past the horizon is empty and contributes a zero trace.
    """
    if horizon > seq.length or horizon < 0:
        raise RangeError(f"horizon {horizon} outside 0..{seq.length}")
    report = bound_report(mode, params, env, ms)
    report.horizon = horizon
    use_env = envelope_for(mode, params, env)

    kind = seq.kind
    needs_martingale = mode in ("ncbr", "azuma_nc", "azuma_classical")
    allowed = (MARTINGALE,) if needs_martingale else (MARTINGALE, SUPERMARTINGALE)
    start_norm = seq.ops[0].op_norm()
    mgf = check_mgf_condition(seq, use_env, default_t_grid(report.t0, t_points))
    premises: dict[str, object] = {
        "kind": kind,
        "s0_norm": start_norm,
        "mgf_worst_relative": mgf.worst_relative,
        "mgf_ok": mgf.ok,
    }
    ok = kind in allowed and start_norm <= 1e-9 and mgf.ok
    if mode not in ("theorem2_a", "theorem2_b"):
        beta = params.alpha if mode == "azuma_classical" else params.beta
        bd = check_bounded_differences(seq, params.alpha, beta)
        premises.update(bounded_ok=bd.ok, lower_margin=bd.lower_margin, upper_margin=bd.upper_margin)
        ok = ok and bd.ok
        if mode in ("khan_a", "khan_b"):
            drift = check_drift(seq, params.gamma)
            premises["drift_margin"] = drift
            ok = ok and drift >= -1e-9 * seq.scale
    report.premises = premises
    if not ok:
        raise PremiseViolation(f"sequence does not satisfy the premises of {mode}: {premises}")

    thresholds = thresholds_for(mode, params)
    for m in report.log_rhs_by_m:
        start = m + report.minimal_index
        report.lhs_by_m[m] = 0.0 if start > horizon else tail_event(seq, thresholds, start, horizon).trace
    return report
