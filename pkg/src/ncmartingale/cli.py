"""Batch experiment runner.

Usage::

    ncmart all --preset hoeffding --seed 42 --horizon 10 --out out/
    ncmart bounds --config experiment.yaml --envelope saturated

Exit codes: 0 all checks pass, 1 an inequality violation was found,
2 configuration error, 3 numerical failure (no finite index, state space
too large).
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .bounds import (
    InvalidParams,
    NoFiniteIndex,
    PremiseViolation,
    bound_report,
    khan_envelope,
    lemma_gap,
    verify_inequality,
)
from .chains import conjugated_chain, factor_dim
from .martingale import BoundParams, MgfEnvelope, grid_envelope, saturated_envelope
from .mcsim import (
    HORIZON_CAP,
    StateSpaceTooLarge,
    StepDistribution,
    compare_bound,
    enumerate_exact,
    simulate_crossing,
)
from .operator_core import HermitianOperator, expm, gt_gap, is_psd, random_hermitian, random_unitary, trace_product
from .prob_space import (
    Filtration,
    TensorSpace,
    cond_exp,
    random_level_operator,
    trace_residual,
    verify_module_property,
    verify_tower,
)
from .projection_lattice import linear_thresholds, tail_meet_trace

SCHEMA_VERSION = 1
MODES = ("gt-check", "lemma-check", "space-verify", "nc-verify", "mc-run", "bounds", "all")
OUT_ENV = "NCMART_OUT_DIR"

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

BOUND_COLUMNS = ["tag", "suite", "mode", "t0", "constant", "minimal_index", "m", "rhs", "lhs", "margin", "log_rhs"]
CHECK_COLUMNS = ["tag", "check", "label", "n", "worst", "tolerance", "passed"]
MC_COLUMNS = ["tag", "seed", "n_paths", "horizon", "a", "b", "m", "i", "p_hat", "ci_low", "ci_high", "rhs", "verdict"]
EXACT_COLUMNS = ["tag", "m", "start", "horizon", "exact_p", "rhs", "margin", "verdict"]

PRESETS: dict[str, dict[str, Any]] = {
    "hoeffding": {
        "params": {"alpha": 1.0, "beta": 1.0, "gamma": 0.0, "lambda": 0.5, "a": 0.05, "b": 0.9, "c": 1.0, "m": 3},
        "space": [2] * 8,
    },
    "asymmetric": {
        "params": {"alpha": 2.0, "beta": 1.0, "gamma": 0.0, "lambda": 1.125, "a": 0.05, "b": 0.9, "c": 1.0, "m": 3},
        "space": [3] * 5,
    },
    "khan-drift": {
        "params": {"alpha": 2.0, "beta": 1.0, "gamma": 0.5, "lambda": 1.125, "a": 0.05, "b": 0.5, "c": 1.0, "m": 3},
        "space": [2] * 8,
    },
}

DEFAULTS: dict[str, Any] = {
    "mode": "all",
    "preset": "hoeffding",
    "envelope": "khan",
    "horizon": 10,
    "n_paths": 100_000,
    "seed": None,
    "diagonal": False,
    "chain": {"mixing": 0.6},
    "t_grid": {"points": 64},
    "gt": {"pairs": 1000, "dims": [2, 4, 8, 16]},
    "lemma": {"lam_step": 0.01, "x_step": 0.1, "x_max": 50.0},
    "space_verify": {"samples": 500, "spaces": [[2, 2, 2], [3, 2, 2]]},
    "output": {"dir": "ncmart-out", "json": "report.json"},
}

RANDOMIZED = {"gt-check", "space-verify", "nc-verify", "mc-run", "all"}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    mode: str
    preset: str | None
    space: list[int]
    params: BoundParams
    envelope: dict[str, Any]
    horizon: int
    n_paths: int
    seed: int | None
    diagonal: bool
    mixing: float | None
    t_points: int
    gt: dict[str, Any]
    lemma: dict[str, Any]
    space_verify: dict[str, Any]
    output: dict[str, Any]
    raw: dict[str, Any] = field(repr=False, default_factory=dict)

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ExperimentConfig":
        preset = data.get("preset", DEFAULTS["preset"])
        merged = copy.deepcopy(DEFAULTS)
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            merged = _merge(merged, PRESETS[preset])
        merged = _merge(merged, data)
        mode = merged["mode"]
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; choose from {MODES}")
        p = merged.get("params", {})
        try:
            params = BoundParams(
                alpha=float(p["alpha"]),
                beta=float(p["beta"]),
                gamma=float(p.get("gamma", 0.0)),
                lam=float(p.get("lambda", (float(p["alpha"]) + float(p["beta"])) ** 2 / 8.0)),
                a=float(p["a"]),
                b=float(p["b"]),
                c=float(p["c"]),
                m=int(p["m"]),
            )
        except KeyError as e:
            raise ConfigError(f"missing parameter {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid parameters: {e}") from None
        env = merged["envelope"]
        if isinstance(env, str):
            env = {"kind": env}
        if env.get("kind") not in ("khan", "explicit-grid", "saturated"):
            raise ConfigError(f"envelope kind must be khan, explicit-grid or saturated, got {env.get('kind')!r}")
        if env["kind"] == "explicit-grid" and not (env.get("t") and env.get("f")):
            raise ConfigError("explicit-grid envelope needs 't' and 'f' sample lists")
        seed = merged.get("seed")
        if mode in RANDOMIZED and seed is None:
            raise ConfigError(f"mode {mode} is randomized and needs a seed")
        try:
            space = [int(d) for d in merged["space"]]
            horizon = int(merged["horizon"])
            n_paths = int(merged["n_paths"])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid numeric setting: {e}") from None
        if not space or any(d < 1 for d in space):
            raise ConfigError(f"space must be a list of positive factor dims, got {space}")
        if horizon < 1 or n_paths < 1:
            raise ConfigError("horizon and n_paths must be positive")
        mixing = merged.get("chain", {}).get("mixing")
        return cls(
            mode=mode,
            preset=preset,
            space=space,
            params=params,
            envelope=env,
            horizon=horizon,
            n_paths=n_paths,
            seed=None if seed is None else int(seed),
            diagonal=bool(merged.get("diagonal", False)),
            mixing=None if mixing is None else float(mixing),
            t_points=int(merged.get("t_grid", {}).get("points", 64)),
            gt=merged["gt"],
            lemma=merged["lemma"],
            space_verify=merged["space_verify"],
            output=merged["output"],
            raw=merged,
        )

    def build_envelope(self) -> MgfEnvelope:
        p, kind = self.params, self.envelope["kind"]
        if kind == "khan":
            try:
                return khan_envelope(p.alpha, p.beta, p.gamma)
            except InvalidParams as e:
                raise ConfigError(str(e)) from None
        if kind == "saturated":
            return saturated_envelope(p.gamma, p.lam)
        try:
            return grid_envelope(self.envelope["t"], self.envelope["f"], p.gamma, p.lam)
        except ValueError as e:
            raise ConfigError(f"invalid explicit-grid envelope: {e}") from None

    def to_dict(self) -> dict[str, Any]:
        p = self.params
        return {
            "mode": self.mode,
            "preset": self.preset,
            "space": self.space,
            "diagonal": self.diagonal,
            "params": {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma, "lambda": p.lam,
                       "a": p.a, "b": p.b, "c": p.c, "m": p.m},
            "envelope": self.envelope,
            "horizon": self.horizon,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "chain": {"mixing": self.mixing},
            "t_grid": {"points": self.t_points},
            "gt": self.gt,
            "lemma": self.lemma,
            "space_verify": self.space_verify,
        }


def load_config(path: str | os.PathLike | None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
    return ExperimentConfig.from_mapping(_merge(data, overrides or {}))


class _Run:
    """Accumulates rows and outcome flags for one invocation."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.bounds: list[dict] = []
        self.checks: list[dict] = []
        self.mc: list[dict] = []
        self.exact: list[dict] = []
        self.errors: list[dict] = []
        self.violation = False
        self.numerical = False
        self.config_problem = False

    def check(self, tag, check, label, n, worst, tol, passed):
        self.checks.append(
            {"tag": tag, "check": check, "label": label, "n": int(n), "worst": float(worst),
             "tolerance": float(tol), "passed": bool(passed)}
        )
        self.violation |= not passed

    def error(self, where: str, exc: Exception, **extra):
        self.errors.append({"where": where, "error": type(exc).__name__, "message": str(exc), **extra})
        if isinstance(exc, (NoFiniteIndex, StateSpaceTooLarge)):
            self.numerical = True
        else:
            self.config_problem = True

    def rng(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.cfg.seed or 0, *key]))


def _suite_gt(run: _Run):
    pairs, dims = int(run.cfg.gt["pairs"]), [int(d) for d in run.cfg.gt["dims"]]
    for k, d in enumerate(dims):
        rng = run.rng(1, k)
        worst = math.inf
        worst_comm = 0.0
        for _ in range(pairs):
            y1, y2 = random_hermitian(d, rng), random_hermitian(d, rng)
            gap = gt_gap(y1, y2)
            scale = 1.0 + abs(trace_product(expm(y1), expm(y2)))
            worst = min(worst, gap / scale)
            u = random_unitary(d, rng)
            c1 = HermitianOperator((u * rng.standard_normal(d)) @ u.conj().T, check=False)
            c2 = HermitianOperator((u * rng.standard_normal(d)) @ u.conj().T, check=False)
            cscale = 1.0 + abs(trace_product(expm(c1), expm(c2)))
            worst_comm = max(worst_comm, abs(gt_gap(c1, c2)) / cscale)
        run.check("gt", "gap_nonnegative", f"d={d}", pairs, worst, 1e-9, worst >= -1e-9)
        run.check("gt", "commuting_equality", f"d={d}", pairs, worst_comm, 1e-9, worst_comm <= 1e-9)


def _suite_lemma(run: _Run):
    lc = run.cfg.lemma
    lams = np.round(np.arange(0.0, 1.0 + 1e-12, float(lc["lam_step"])), 12)
    x_max, x_step = float(lc["x_max"]), float(lc["x_step"])
    xs = np.round(np.arange(-x_max, x_max + 1e-9, x_step), 12)
    gaps = lemma_gap(lams[:, None], xs[None, :])
    worst = float(np.min(gaps))
    run.check("lemma", "gap_nonnegative", f"|x|<={x_max}", gaps.size, worst, 1e-12, worst >= -1e-12)


def _suite_space(run: _Run):
    sv = run.cfg.space_verify
    samples = int(sv["samples"])
    for k, dims in enumerate(sv["spaces"]):
        filt = Filtration(TensorSpace(tuple(dims)))
        rng = run.rng(2, k)
        K, D = filt.n_levels, filt.space.total_dim
        worst = {"module": 0.0, "trace": 0.0, "positivity": 0.0, "tower": 0.0, "contraction": 0.0}
        for _ in range(samples):
            x = random_hermitian(D, rng)
            scale = 1.0 + x.op_norm()
            j = int(rng.integers(0, K + 1))
            i = int(rng.integers(0, K + 1))
            a, b = random_level_operator(filt, j, rng), random_level_operator(filt, j, rng)
            mscale = scale * (1.0 + a.op_norm()) * (1.0 + b.op_norm())
            worst["module"] = max(worst["module"], verify_module_property(filt, j, a, x, b) / mscale)
            worst["trace"] = max(worst["trace"], trace_residual(filt, j, x) / scale)
            worst["tower"] = max(worst["tower"], verify_tower(filt, i, j, x) / scale)
            ex = cond_exp(filt, j, x)
            worst["contraction"] = max(worst["contraction"], (ex.op_norm() - x.op_norm()) / scale)
            g = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
            pos = HermitianOperator(g @ g.conj().T, check=False)
            epos = cond_exp(filt, j, pos)
            worst["positivity"] = max(
                worst["positivity"], max(0.0, -float(epos.eigenvalues[0])) / (1.0 + pos.op_norm())
            )
            if not is_psd(epos):
                worst["positivity"] = max(worst["positivity"], 1.0)
        label = "x".join(str(d) for d in dims)
        for name, value in worst.items():
            run.check("tower", name, label, samples, value, 1e-9, value <= 1e-9)


NC_MODES = ("theorem2_a", "theorem2_b", "khan_a", "khan_b", "ncbr", "azuma_nc")


def _nc_chain(run: _Run):
    cfg = run.cfg
    p = cfg.params
    try:
        dist = StepDistribution.two_point(p.alpha, p.beta, p.gamma)
        d = factor_dim(dist)
    except ValueError as e:
        raise ConfigError(f"cannot realize the two-point step on a finite factor: {e}") from None
    if any(dim != d for dim in cfg.space):
        raise ConfigError(f"space {cfg.space} does not match the factor dimension {d} the step distribution needs")
    seq = conjugated_chain(dist, len(cfg.space), cfg.seed, diagonal=cfg.diagonal, mixing=cfg.mixing)
    return dist, seq


def _suite_nc(run: _Run):
    cfg = run.cfg
    p = cfg.params
    _, seq = _nc_chain(run)
    horizon = min(cfg.horizon, seq.length)
    env = cfg.build_envelope()
    modes = NC_MODES if p.gamma == 0 else NC_MODES[:4]
    for mode in modes:
        try:
            rep = verify_inequality(seq, p, env, mode, horizon, t_points=cfg.t_points)
        except (NoFiniteIndex, PremiseViolation) as e:
            run.error(f"nc-verify:{mode}", e, constant=getattr(e, "constant", None))
            continue
        run.bounds.append({**rep.to_dict(), "suite": "nc-verify"})
        run.violation |= not rep.passed
    # nested tails: traces are non-increasing in the start index
    ms = list(range(1, horizon + 1))
    for label, thr in (("theta=1", lambda n: 1.0), ("theta=bn", linear_thresholds(0.0, p.b))):
        traces = [t for _, t in tail_meet_trace(seq, thr, ms, horizon)]
        worst = max((b - a for a, b in zip(traces, traces[1:])), default=0.0)
        run.check("cor_ncbr", "tail_monotone", label, len(ms), worst, 0.0, worst <= 0.0)


def _cell_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _suite_mc(run: _Run):
    cfg = run.cfg
    p = cfg.params
    try:
        dist = StepDistribution.two_point(p.alpha, p.beta, p.gamma)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    modes = ["khan_a", "khan_b"]
    if p.gamma == 0 and p.alpha == p.beta:
        modes.append("azuma_classical")
    for k, mode in enumerate(modes):
        try:
            rep = bound_report(mode, p)
        except NoFiniteIndex as e:
            run.error(f"mc-run:{mode}", e, constant=e.constant)
            continue
        if mode == "khan_a":
            a, b = p.a, p.b
        elif mode == "khan_b":
            a, b = 0.0, p.b
        else:
            a, b = 0.0, p.c
        i = rep.minimal_index
        for m in rep.log_rhs_by_m:
            rhs = rep.rhs(m)
            start = m + i
            if start > cfg.horizon:
                run.exact.append({"tag": rep.tag, "m": m, "start": start, "horizon": cfg.horizon,
                                  "exact_p": 0.0, "rhs": rhs, "margin": rhs, "verdict": "pass"})
                continue
            if cfg.horizon <= HORIZON_CAP:
                try:
                    exact = enumerate_exact(dist, a, b, m, i, cfg.horizon)
                except StateSpaceTooLarge as e:
                    run.error(f"mc-run:{mode}:m={m}", e)
                else:
                    v = compare_bound(exact, rep, m, start=start)
                    run.exact.append({"tag": rep.tag, "m": m, "start": start, "horizon": cfg.horizon,
                                      "exact_p": exact, "rhs": rhs, "margin": v.margin, "verdict": v.status})
                    run.violation |= not v.passed
            seed = _cell_seed(cfg.seed, k, m)
            est = simulate_crossing(dist, a, b, m, i, cfg.horizon, cfg.n_paths, seed)
            v = compare_bound(est, rep, m)
            run.mc.append({"tag": rep.tag, **est.to_row(), "rhs": rhs, "verdict": v.status})
            run.violation |= not v.passed


def _suite_bounds(run: _Run):
    p = run.cfg.params
    env = run.cfg.build_envelope()
    modes = ["theorem2_a", "theorem2_b", "khan_a", "khan_b", "ncbr", "azuma_nc"]
    if p.alpha == p.beta:
        modes.append("azuma_classical")
    for mode in modes:
        try:
            rep = bound_report(mode, p, env)
        except NoFiniteIndex as e:
            run.error(f"bounds:{mode}", e, constant=e.constant)
            continue
        except InvalidParams as e:
            run.error(f"bounds:{mode}", e)
            continue
        run.bounds.append({**rep.to_dict(), "suite": "bounds"})


SUITES = {
    "gt-check": [_suite_gt],
    "lemma-check": [_suite_lemma],
    "space-verify": [_suite_space],
    "nc-verify": [_suite_nc],
    "mc-run": [_suite_mc],
    "bounds": [_suite_bounds],
    "all": [_suite_gt, _suite_lemma, _suite_space, _suite_bounds, _suite_nc, _suite_mc],
}


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _clean(obj.item())
    return obj


def execute(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Run the configured suites and return (exit code, report)."""
    run = _Run(cfg)
    for suite in SUITES[cfg.mode]:
        try:
            suite(run)
        except ConfigError as e:
            run.error(suite.__name__.removeprefix("_suite_"), e)
    if run.config_problem:
        code = EXIT_CONFIG
    elif run.violation:
        code = EXIT_VIOLATION
    elif run.numerical:
        code = EXIT_NUMERICAL
    else:
        code = EXIT_OK
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "bounds": run.bounds,
        "checks": run.checks,
        "mc": run.mc,
        "exact": run.exact,
        "errors": run.errors,
        "exit_code": code,
    }
    return code, _clean(report)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _write_csv(path: Path, columns: list[str], rows: list[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


def write_report(report: dict, out_dir: Path, json_name: str = "report.json") -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / json_name, out_dir / "bounds.csv", out_dir / "checks.csv", out_dir / "mc.csv", out_dir / "exact.csv"]
    paths[0].write_text(report_json(report))
    bound_rows = [{**row, "suite": rep["suite"]} for rep in report["bounds"] for row in rep["rows"]]
    _write_csv(paths[1], BOUND_COLUMNS, bound_rows)
    _write_csv(paths[2], CHECK_COLUMNS, report["checks"])
    _write_csv(paths[3], MC_COLUMNS, report["mc"])
    _write_csv(paths[4], EXACT_COLUMNS, report["exact"])
    return paths


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> int:
    code, report = execute(cfg)
    target = Path(out_dir or os.environ.get(OUT_ENV) or cfg.output.get("dir", "ncmart-out"))
    write_report(report, target, cfg.output.get("json", "report.json"))
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncmart", description="Verify noncommutative martingale tail bounds.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", help="YAML experiment file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--paths", type=int, dest="n_paths")
        sp.add_argument("--out", help="output directory (overrides NCMART_OUT_DIR and the config)")
        sp.add_argument("--envelope", choices=["khan", "saturated"])
        sp.add_argument("--diagonal", action="store_true", default=None)
        sp.add_argument("--space", help="comma-separated factor dims, e.g. 2,2,2")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    overrides: dict[str, Any] = {"mode": args.mode}
    for key in ("preset", "seed", "horizon", "n_paths", "envelope", "diagonal"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val
    try:
        if args.space:
            overrides["space"] = [int(x) for x in args.space.split(",")]
        cfg = load_config(args.config, overrides)
    except (ConfigError, ValueError) as e:
        print(f"ncmart: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    code = run(cfg, args.out)
    print(f"ncmart {cfg.mode}: exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
