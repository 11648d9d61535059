"""Batch entry point: run scenarios, score records, compare fusion methods.

Subcommands:
  simulate  run a scenario config over a seed list, one JSON record per seed
  metrics   per-source MSE/MNCM tables plus cross-seed aggregates (CSV)
  compare   per-seed CI vs modified-CI wins with a sign-test p-value

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from scipy.stats import binomtest

from .config import ConfigError, builtin_config_path, load_config
from .metrics import aggregate_rows, summarize_run, write_csv
from .network import load_run, run_many, save_run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def parse_seeds(text: str) -> list:
    """Seed list syntax: 'a..b' (inclusive), comma list, or single int."""
    text = text.strip()
    if ".." in text:
        lo_str, hi_str = text.split("..", 1)
        lo, hi = int(lo_str), int(hi_str)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    if "," in text:
        return [int(part) for part in text.split(",") if part.strip()]
    return [int(text)]


def _resolve_config(spec: str):
    path = Path(spec)
    if path.exists():
        return load_config(path)
    try:
        return load_config(builtin_config_path(spec))
    except ConfigError:
        raise ConfigError(f"config file not found: {spec}")


def cmd_simulate(args) -> int:
    config = _resolve_config(args.config)
    seeds = parse_seeds(args.seeds)
    if not seeds:
        raise ConfigError("seeds: at least one seed required")
    overrides = {}
    if args.method:
        overrides["fusion_method"] = args.method
    if args.baseline_kf:
        overrides["baseline_kf"] = True
    if overrides:
        config = config.with_overrides(**overrides)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = run_many(config, seeds, jobs=args.jobs)
    for seed, run in zip(seeds, runs):
        target = out_dir / f"record_seed{seed}.json"
        tmp = target.with_suffix(".json.tmp")
        save_run(run, tmp)
        tmp.replace(target)
        print(f"wrote {target}")
    return EXIT_OK


def _load_runs(paths):
    runs = [load_run(path) for path in paths]
    if not runs:
        raise ValueError("no record files given")
    reference = json.dumps(runs[0].config.to_dict(), sort_keys=True)
    for run, path in zip(runs, paths):
        if json.dumps(run.config.to_dict(), sort_keys=True) != reference:
            raise ValueError(f"record {path} comes from a different scenario")
    return runs


def cmd_metrics(args) -> int:
    runs = _load_runs(args.records)
    rows_per_seed = []
    flat_rows = []
    for run in runs:
        rows = summarize_run(run, position_only=args.position_only)
        rows_per_seed.append((run.seed, rows))
        for row in rows:
            flat_rows.append({"seed": run.seed, **row})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(flat_rows, out_dir / "metrics.csv")
    aggregates = aggregate_rows(rows_per_seed)
    write_csv(aggregates, out_dir / "metrics_aggregate.csv")
    for row in aggregates:
        print(
            "{source:>8} {algorithm:>7}  median MSE {median_mse:.4g} "
            "(IQR {iqr_mse:.3g})  median MNCM {median_mncm:.4g} "
            "(IQR {iqr_mncm:.3g})".format(**row)
        )
    print(f"wrote {out_dir / 'metrics.csv'} and {out_dir / 'metrics_aggregate.csv'}")
    return EXIT_OK


def _fused_metric_by_method(rows, metric: str) -> dict:
    out = {}
    for row in rows:
        if row["source"].startswith("proc:"):
            out.setdefault(row["algorithm"], {})[row["source"]] = row[metric]
    return out


def cmd_compare(args) -> int:
    runs = _load_runs(args.records)
    per_seed = []
    for run in runs:
        rows = summarize_run(run)
        by_method = {
            metric: _fused_metric_by_method(rows, metric) for metric in ("mse", "mncm")
        }
        if "ci" not in by_method["mse"] or "modci" not in by_method["mse"]:
            raise ValueError(
                f"record for seed {run.seed} lacks both CI and modified-CI fused "
                "streams; simulate with --method both"
            )
        per_seed.append((run.seed, by_method))

    report_lines = []
    for metric in ("mse", "mncm"):
        wins = losses = ties = 0
        for seed, by_method in per_seed:
            # Compare per processing node, averaged into one value per seed.
            ci_vals = by_method[metric]["ci"]
            mod_vals = by_method[metric]["modci"]
            shared = sorted(set(ci_vals) & set(mod_vals))
            ci_avg = sum(ci_vals[s] for s in shared) / len(shared)
            mod_avg = sum(mod_vals[s] for s in shared) / len(shared)
            if mod_avg < ci_avg:
                wins += 1
            elif mod_avg > ci_avg:
                losses += 1
            else:
                ties += 1
        n = wins + losses
        p_value = binomtest(wins, n, alternative="greater").pvalue if n else 1.0
        report_lines.append(
            f"{metric.upper()}: modified CI wins {wins}/{len(per_seed)} seeds "
            f"(losses {losses}, ties {ties}), one-sided sign-test p = {p_value:.4g}"
        )
    report = "\n".join(report_lines)
    print(report)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(report + "\n", encoding="utf-8")
        print(f"wrote {out_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cifuse",
        description="multi-sensor tracking and covariance-intersection fusion runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario over one or more seeds")
    sim.add_argument("--config", required=True, help="config JSON path or builtin name")
    sim.add_argument("--seeds", default="0", help="seed list: a..b, a,b,c, or single")
    sim.add_argument(
        "--method",
        choices=["ci", "modci", "bci", "mbci", "both"],
        help="override the config's fusion method",
    )
    sim.add_argument("--out", required=True, help="output directory for run records")
    sim.add_argument(
        "--baseline-kf",
        action="store_true",
        help="also run the no-association Kalman baseline at each node",
    )
    sim.add_argument("--jobs", type=int, default=1, help="parallel seed processes")
    sim.set_defaults(func=cmd_simulate)

    met = sub.add_parser("metrics", help="score record files")
    met.add_argument("records", nargs="+", help="run record JSON files")
    met.add_argument("--out", required=True, help="output directory for CSV tables")
    met.add_argument(
        "--position-only",
        action="store_true",
        help="score MSE on position components only",
    )
    met.set_defaults(func=cmd_metrics)

    cmp_ = sub.add_parser("compare", help="CI vs modified CI across seeds")
    cmp_.add_argument("records", nargs="+", help="dual-method run record JSON files")
    cmp_.add_argument("--out", help="optional report file")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures get a distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
