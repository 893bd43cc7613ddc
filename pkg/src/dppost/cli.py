"""Command-line entry point.

Modes:
  simulate     noise a truth CSV, post-process, and score NM vs MB
  postprocess  turn released noisy measurements into constrained estimates
  synth        write a synthetic truth CSV for desk-scale experiments

Configuration comes from an optional JSON file plus flag overrides; flags win.
Exit codes: 0 success, 2 config error, 3 data-schema error, 4 all strata failed.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    AllStrataFailed,
    ConfigError,
    ExperimentConfig,
    SchemaError,
    generate_synthetic_truth,
    run_postprocess,
    run_simulate,
)
from .samplers import ChainConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SCHEMA = 3
EXIT_ALL_FAILED = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dppost",
        description="Constrained Bayesian post-processing of differentially private noisy tabulations",
    )
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--mode", choices=["simulate", "postprocess", "synth"])
    p.add_argument("--mechanism", choices=["gaussian", "laplace"])
    p.add_argument("--scale", type=float, help="explicit noise scale (sigma or lambda)")
    p.add_argument("--moe", type=float, help="margin of error the noise scale is derived from")
    p.add_argument("--level", type=float, help="confidence level for the MOE (default 0.90)")
    p.add_argument("--interval-level", type=float, help="credible/confidence interval level (default 0.90)")
    p.add_argument("--kappa", type=int, help="household-size truncation level (default 10)")
    p.add_argument("--constraints", help="JSON constraint file (default: builtin kappa system)")
    p.add_argument("--draws", type=int, help="posterior draws per stratum (default 10000)")
    p.add_argument("--burn-in", type=int, help="burn-in sweeps (default 500)")
    p.add_argument("--thin", type=int, help="thinning interval (default 1)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, help="parallel strata (default 1)")
    p.add_argument("--truth", help="truth CSV (simulate mode input / synth mode output)")
    p.add_argument("--nm", help="noisy-measurements CSV (postprocess mode input)")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--n-geo", type=int, default=51, help="synth mode: geographies (default 51)")
    p.add_argument("--n-iter", type=int, default=10, help="synth mode: iterations per geography (default 10)")
    p.add_argument("--profile", choices=["census_like", "uniform"], default="census_like",
                   help="synth mode: truth profile")
    return p


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return doc


def _merged_config(args: argparse.Namespace) -> dict:
    cfg = _load_config_file(args.config) if args.config else {}
    overrides = {
        "mode": args.mode,
        "family": args.mechanism,
        "scale": args.scale,
        "moe": args.moe,
        "level": args.level,
        "interval_level": args.interval_level,
        "kappa": args.kappa,
        "constraint_path": args.constraints,
        "truth_path": args.truth,
        "nm_path": args.nm,
        "out_dir": args.out,
        "master_seed": args.seed,
        "n_jobs": args.jobs,
        "n_draws": args.draws,
        "burn_in": args.burn_in,
        "thin": args.thin,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _experiment_config(cfg: dict) -> ExperimentConfig:
    chain_fields = {}
    for key in ("n_draws", "burn_in", "thin"):
        if key in cfg:
            chain_fields[key] = cfg.pop(key)
    chain = ChainConfig(**chain_fields)
    if cfg.get("scale") is not None:
        cfg.setdefault("moe", None)
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        return ExperimentConfig(chain=chain, **cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _merged_config(args)
        mode = cfg.get("mode")
        if mode is None:
            raise ConfigError("--mode is required (simulate, postprocess, or synth)")
        if mode == "synth":
            out_path = cfg.get("truth_path")
            if not out_path:
                raise ConfigError("synth mode requires --truth as the output path")
            tabs = generate_synthetic_truth(
                n_geo=args.n_geo,
                n_iter=args.n_iter,
                seed=int(cfg.get("master_seed", 0)),
                profile=args.profile,
                kappa=int(cfg.get("kappa", 10)),
                out_path=out_path,
            )
            print(f"wrote {len(tabs)} strata to {out_path}")
            return EXIT_OK
        experiment = _experiment_config(cfg)
        if mode == "simulate":
            report = run_simulate(experiment)
            print(f"report: {report.report_path}")
            print(f"detail: {report.detail_path}")
            print(
                f"NM bad%={report.nm_row.bad_pct:.2f} rmse={report.nm_row.rmse:.4f} | "
                f"MB bad%={report.mb_row.bad_pct:.2f} rmse={report.mb_row.rmse:.4f}"
            )
        else:
            est_path = run_postprocess(experiment)
            print(f"estimates: {est_path}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except AllStrataFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED


if __name__ == "__main__":
    sys.exit(main())
