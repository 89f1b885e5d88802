"""Experiment configuration, deterministic execution, reports, and the CLI.

A config file is plain JSON mirroring the model descriptors of the
environment module.  Seeds are mandatory: there is no wall-clock fallback,
so a config uniquely determines every emitted byte.  Tests run with
per-test error isolation; a failing estimator is recorded in the report
without aborting the rest of the battery.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels, statistics
from .rng import STREAM_FIELD, STREAM_STEPS, derive_keys
from .walk import Model, normalize_checkpoints, parse_model, run_ensemble
from .statistics import targets_of

# tests fed from the shared checkpointed ensemble of the config
_ENSEMBLE_TESTS = {
    "step_fractions": statistics.step_fractions,
    "msd": statistics.msd,
    "marginal_clt_test": statistics.marginal_clt_test,
    "cross_independence_test": statistics.cross_independence_test,
    "time_integral_test": statistics.time_integral_test,
    "brownian_max_test": statistics.brownian_max_test,
    "lil_envelope": statistics.lil_envelope,
    "ellipse_cloud": statistics.ellipse_cloud,
    "anisotropy_ratio": statistics.anisotropy_ratio,
    "residual_decay": statistics.residual_decay,
}

# tests that sample their own ensembles from the model
_MODEL_TESTS = ("return_probability", "range_curve")

KNOWN_TESTS = tuple(_ENSEMBLE_TESTS) + _MODEL_TESTS


@dataclass
class ExperimentConfig:
    model: dict
    n: int
    replicates: int
    seed: int
    checkpoints: dict = field(default_factory=lambda: {"policy": "dense", "count": 200})
    workers: int = 1
    tests: list = field(default_factory=list)
    test_params: dict = field(default_factory=dict)
    out: str = "reports"
    format: str = "json"


@dataclass
class SummaryReport:
    config: dict
    tests: list
    overall: str
    wall_time_s: float
    seed_derivation: dict

    @property
    def passed(self) -> bool:
        return self.overall == "pass"

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "tests": self.tests,
            "overall": self.overall,
            "wall_time_s": self.wall_time_s,
            "seed_derivation": self.seed_derivation,
        }


def checkpoint_indices(policy: Mapping, n: int) -> np.ndarray:
    """Expand a checkpoint policy into concrete step indices ending at n."""
    kind = policy.get("policy")
    if kind == "explicit":
        return normalize_checkpoints(policy.get("points", []), n)
    if kind == "dense":
        count = int(policy.get("count", 200))
        if count < 1:
            raise ValueError("dense policy needs count >= 1")
        pts = np.unique(np.ceil(np.arange(1, count + 1) * (n / count)).astype(np.int64))
        return normalize_checkpoints(pts, n)
    if kind == "geometric":
        base = int(policy.get("base", 16))
        ratio = float(policy.get("ratio", 1.5))
        if base < 1 or ratio <= 1.0:
            raise ValueError("geometric policy needs base >= 1 and ratio > 1")
        pts = []
        i = 0
        while True:
            v = int(math.ceil(base * ratio**i))
            if v >= n:
                break
            pts.append(v)
            i += 1
        pts.append(n)
        return normalize_checkpoints(pts, n)
    raise ValueError(f"unknown checkpoint policy: {kind!r}")


def parse_config(raw: Mapping) -> ExperimentConfig:
    """Validate a config mapping; raises ValueError on any defect."""
    if "model" not in raw:
        raise ValueError("config needs a model descriptor")
    parse_model(raw["model"])
    if "seed" not in raw or raw["seed"] is None:
        raise ValueError("seed is required; wall-clock seeding is not supported")
    seed = int(raw["seed"])
    n = int(raw.get("n", 0))
    if n < 1:
        raise ValueError("need n >= 1")
    replicates = int(raw.get("replicates", 0))
    if replicates < 1:
        raise ValueError("need replicates >= 1")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ValueError("need workers >= 1")
    fmt = raw.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown report format: {fmt!r}")
    tests = list(raw.get("tests", []))
    for name in tests:
        if name not in KNOWN_TESTS:
            raise ValueError(f"unknown test: {name!r}")
    cfg = ExperimentConfig(
        model=dict(raw["model"]),
        n=n,
        replicates=replicates,
        seed=seed,
        checkpoints=dict(raw.get("checkpoints", {"policy": "dense", "count": 200})),
        workers=workers,
        tests=tests,
        test_params={k: dict(v) for k, v in raw.get("test_params", {}).items()},
        out=str(raw.get("out", "reports")),
        format=fmt,
    )
    # fail fast on a malformed policy as well
    checkpoint_indices(cfg.checkpoints, cfg.n)
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(json.load(fh))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Round-trip inverse of parse_config."""
    return {
        "model": cfg.model,
        "n": cfg.n,
        "replicates": cfg.replicates,
        "seed": cfg.seed,
        "checkpoints": cfg.checkpoints,
        "workers": cfg.workers,
        "tests": list(cfg.tests),
        "test_params": cfg.test_params,
        "out": cfg.out,
        "format": cfg.format,
    }


def _validate_preconditions(cfg: ExperimentConfig, model: Model, cps: np.ndarray) -> None:
    # every requested test must be satisfiable by the policy before any
    # simulation is paid for
    k = cps.size
    r = cfg.replicates
    for name in cfg.tests:
        params = cfg.test_params.get(name, {})
        if name in ("marginal_clt_test", "cross_independence_test", "brownian_max_test"):
            if r < 500:
                raise ValueError(f"{name} needs replicates >= 500")
        if name in ("step_fractions", "msd", "anisotropy_ratio"):
            if r < 2:
                raise ValueError(f"{name} needs replicates >= 2")
        if name in ("time_integral_test", "brownian_max_test") and k < 100:
            raise ValueError(f"{name} needs a checkpoint grid of >= 100 points")
        if name in ("lil_envelope", "ellipse_cloud"):
            if cfg.n < 10**6:
                raise ValueError(f"{name} needs n >= 1e6")
            if cps[0] < 16:
                raise ValueError(f"{name} needs checkpoints starting at 16 or later")
        if name in ("msd", "marginal_clt_test"):
            default = (1.0,) if name == "msd" else (0.25, 1.0)
            for t in params.get("t_grid", default):
                m = int(math.floor(cfg.n * t))
                j = int(np.searchsorted(cps, m))
                if j >= k or cps[j] != m:
                    raise ValueError(f"{name} needs a checkpoint at step {m} (t={t})")
        if name == "return_probability":
            targets = targets_of(model)
            if targets.qn_const is None:
                raise ValueError("return_probability needs an iid environment or the all-connective profile")
            n_ret = int(params.get("n", cfg.n))
            reps = int(params.get("replicates", cfg.replicates))
            if reps * targets.qn_const / n_ret < 200:
                raise ValueError("return_probability expects fewer than 200 hits; increase replicates")
        if name == "range_curve":
            targets = targets_of(model)
            if targets.rn_const is None:
                raise ValueError("range_curve needs an iid environment or the all-connective profile")
            grid = params.get("n_grid", [cfg.n])
            if max(int(v) for v in grid) > 10**6:
                raise ValueError("range_curve grid capped at 1e6 steps per replicate")


def run_experiment(cfg: ExperimentConfig) -> SummaryReport:
    """Run the configured test battery; deterministic for any worker count."""
    model = parse_model(cfg.model)
    cps = checkpoint_indices(cfg.checkpoints, cfg.n)
    _validate_preconditions(cfg, model, cps)
    kernels.set_workers(cfg.workers)

    t0 = time.perf_counter()
    ensemble = None
    if any(name in _ENSEMBLE_TESTS for name in cfg.tests):
        ensemble = run_ensemble(model, cfg.n, cps, cfg.seed, cfg.replicates)

    entries = []
    all_pass = True
    for name in cfg.tests:
        params = dict(cfg.test_params.get(name, {}))
        try:
            if name in _ENSEMBLE_TESTS:
                report = _ENSEMBLE_TESTS[name](ensemble, **params)
            elif name == "return_probability":
                report = statistics.return_probability(
                    model,
                    int(params.pop("n", cfg.n)),
                    int(params.pop("replicates", cfg.replicates)),
                    cfg.seed,
                    **params,
                )
            else:
                report = statistics.range_curve(
                    model,
                    params.pop("n_grid", [cfg.n]),
                    int(params.pop("replicates", cfg.replicates)),
                    cfg.seed,
                    **params,
                )
            entries.append(report.to_dict())
            all_pass = all_pass and report.passed
        except Exception as exc:  # per-test isolation: record, keep going
            entries.append({"name": name, "verdict": "error", "error": str(exc)})
            all_pass = False
    wall = time.perf_counter() - t0

    k1, k2 = derive_keys(cfg.seed, 0, STREAM_STEPS)
    return SummaryReport(
        config=config_to_dict(cfg),
        tests=entries,
        overall="pass" if all_pass else "fail",
        wall_time_s=wall,
        seed_derivation={
            "scheme": "keyed 64-bit mix chain: master seed -> replicate index -> purpose",
            "master_seed": cfg.seed,
            "purposes": {"steps": STREAM_STEPS, "field": STREAM_FIELD},
            "replicate0_step_keys": [f"0x{k1:016x}", f"0x{k2:016x}"],
        },
    )


def emit_report(report: SummaryReport, out_dir: str, fmt: str = "json") -> list[str]:
    """Write report files atomically; on failure no partial files remain.

    Wall time stays off disk: emitted bytes depend on the config and seed
    only, so identical runs produce identical files.
    """
    payload = report.to_dict()
    payload.pop("wall_time_s", None)
    payloads = {"report.json": json.dumps(payload, indent=2, sort_keys=True) + "\n"}
    if fmt == "csv":
        for entry in report.tests:
            for curve_name, rows in entry.get("curves", {}).items():
                lines = ["m,estimate,target"]
                for m, est, target in rows:
                    lines.append(f"{m},{est!r},{target!r}")
                payloads[f"{entry['name']}_{curve_name}.csv"] = "\n".join(lines) + "\n"

    os.makedirs(out_dir, exist_ok=True)
    tmp_paths = []
    final_paths = []
    try:
        for name, text in payloads.items():
            final = os.path.join(out_dir, name)
            tmp = final + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(text)
            tmp_paths.append(tmp)
            final_paths.append(final)
        for tmp, final in zip(tmp_paths, final_paths):
            os.replace(tmp, final)
    except OSError:
        for tmp in tmp_paths:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    return final_paths


def _model_from_flags(args) -> dict:
    if args.model == "heyde":
        if args.probs:
            probs = [float(v) for v in args.probs.split(",")]
            return {"model": "heyde", "profile": {"kind": "explicit", "probs": probs}}
        if args.L is None:
            raise ValueError("heyde model needs --L or --probs")
        return {"model": "heyde", "profile": {"kind": "uniform", "L": args.L}}
    if args.q is not None:
        return {"model": "env", "law": {"kind": "iid", "q": args.q}}
    if args.pattern:
        bits = [int(v) for v in args.pattern.split(",")]
        return {"model": "env", "law": {"kind": "periodic-random-phase", "pattern": bits}}
    if args.p01 is not None and args.p10 is not None:
        return {
            "model": "env",
            "law": {"kind": "two-state-markov", "p01": args.p01, "p10": args.p10},
        }
    raise ValueError("env model needs --q, --pattern, or --p01/--p10")


def _overridden_config(args) -> ExperimentConfig:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    for key in ("seed", "replicates", "workers", "out", "format"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if getattr(args, "steps", None) is not None:
        raw["n"] = args.steps
    return parse_config(raw)


def cli(argv: Sequence[str]) -> int:
    """Entry point behind main(); returns the process exit status."""
    parser = argparse.ArgumentParser(prog="anisowalk")
    sub = parser.add_subparsers(dest="command", required=True)

    p_targets = sub.add_parser("targets", help="print closed-form limit constants")
    p_targets.add_argument("--model", choices=("heyde", "env"), required=True)
    p_targets.add_argument("--L", type=int)
    p_targets.add_argument("--probs")
    p_targets.add_argument("--q", type=float)
    p_targets.add_argument("--pattern")
    p_targets.add_argument("--p01", type=float)
    p_targets.add_argument("--p10", type=float)

    for name in ("simulate", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=("json", "csv"))

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "targets":
            targets = targets_of(parse_model(_model_from_flags(args)))
            for key in (
                "gamma",
                "q",
                "hfrac",
                "vfrac",
                "var_x",
                "var_y",
                "lil_x",
                "lil_y",
                "ellipse_a",
                "ellipse_b",
                "qn_const",
                "rn_const",
                "integral_var_x",
            ):
                value = getattr(targets, key)
                if value is not None:
                    print(f"{key}={value:.6f}")
            return 0

        cfg = _overridden_config(args)
        if args.command == "simulate":
            cps = checkpoint_indices(cfg.checkpoints, cfg.n)
            kernels.set_workers(cfg.workers)
            ens = run_ensemble(cfg.model, cfg.n, cps, cfg.seed, cfg.replicates)
            os.makedirs(cfg.out, exist_ok=True)
            for r in range(cfg.replicates):
                path = os.path.join(cfg.out, f"trajectory_{r}.csv")
                lines = ["m,x,y,h_count,v_count"]
                for k, m in enumerate(ens.cps):
                    h = int(ens.h[r, k])
                    lines.append(
                        f"{int(m)},{int(ens.x[r, k])},{int(ens.y[r, k])},{h},{int(m) - h}"
                    )
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")
                print(f"wrote {path}")
            return 0

        report = run_experiment(cfg)
        paths = emit_report(report, cfg.out, cfg.format)
        for entry in report.tests:
            print(f"{entry['name']}: {entry['verdict']}")
        print(f"overall: {report.overall}")
        for path in paths:
            print(f"wrote {path}")
        return 0 if report.passed else 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))
