"""Command-line harness: runs, baselines, parameter sweeps, reports.

Evaluation protocol: one stratified 80/20 split per seed.  Training
rewards come from a nested 80/20 split of the training fold, so the outer
test fold stays untouched until the final report.  Baselines share the
final forest settings and seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data, engine, forest, info, reports
from .rewards import RewardWeights

TRAIN_RATIO = 0.8
FINAL_TREES = 100
FINAL_DEPTH = 12
FINAL_MIN_LEAF = 2

_RETURN_FLAGS = {"forward": "forward", "reversed": "reversed"}
_RECALC_FLAGS = {"rc": "rejection_control", "stop": "stop_ratio"}
_STATE_FLAGS = {"meta": "meta", "ae": "autoencoder"}

SWEEP_PARAMS = {
    "stop-threshold": ("stop_threshold", float),
    "behavior": ("behavior_mode", str),
    "advise-steps": ("advise_steps", int),
    "utility-mode": ("utility_mode", str),
}


def _float_in(lo, hi, lo_open=False, hi_open=False):
    def parse(text):
        try:
            x = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        below = x <= lo if lo_open else x < lo
        above = x >= hi if hi_open else x > hi
        if below or above or not np.isfinite(x):
            lb = "(" if lo_open else "["
            rb = ")" if hi_open else "]"
            raise argparse.ArgumentTypeError(
                f"{x} outside the range {lb}{lo}, {hi}{rb}"
            )
        return x
    return parse


def _nonneg_float(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not np.isfinite(x) or x < 0:
        raise argparse.ArgumentTypeError(f"{x} is not a non-negative number")
    return x


def _pos_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if x < 1:
        raise argparse.ArgumentTypeError(f"{x} is not a positive integer")
    return x


def _nonneg_int(text):
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if x < 0:
        raise argparse.ArgumentTypeError(f"{x} is not a non-negative integer")
    return x


def _weights_spec(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "weights must be three comma-separated numbers: WACC,WRV,WRD"
        )
    try:
        w_acc, w_rv, w_rd = (float(p) for p in parts)
        return RewardWeights(w_acc=w_acc, w_rv=w_rv, w_rd=w_rd)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _synth_spec(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "synthetic spec must be three comma-separated integers: N,D,K"
        )
    try:
        n, d, k = (int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-integer in {text!r}")
    if n < 10 or d < 1 or not 1 <= k <= d:
        raise argparse.ArgumentTypeError(
            "need N >= 10, D >= 1, and 1 <= K <= D"
        )
    return n, d, k


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", type=Path, help="CSV dataset path")
    src.add_argument("--synthetic", type=_synth_spec, metavar="N,D,K",
                     help="generate N samples, D features, K informative")
    common.add_argument("--label-col", default="label",
                        help="label column name for --data")
    common.add_argument("--episodes", type=_pos_int, default=300)
    common.add_argument("--gamma", type=_float_in(0.0, 1.0), default=0.9)
    common.add_argument(
        "--epsilon",
        type=_float_in(0.0, 1.0, lo_open=True, hi_open=True),
        default=0.1,
    )
    common.add_argument("--stop-threshold", type=_float_in(0.0, 1.0),
                        default=0.5)
    common.add_argument("--shaping-coeff", type=_nonneg_float, default=1.0)
    common.add_argument("--advise-steps", type=_nonneg_int, default=500)
    common.add_argument("--seed", type=_nonneg_int, default=0)
    common.add_argument("--return-mode", choices=sorted(_RETURN_FLAGS),
                        default="forward")
    common.add_argument("--recalc-mode", choices=sorted(_RECALC_FLAGS),
                        default="rc")
    common.add_argument("--behavior", choices=engine.BEHAVIOR_MODES,
                        default="greedy")
    common.add_argument("--state-repr", choices=sorted(_STATE_FLAGS),
                        default="meta")
    common.add_argument("--utility", choices=("rv", "rd", "rvrd"),
                        default="rvrd")
    common.add_argument("--weights", type=_weights_spec, metavar="WACC,WRV,WRD",
                        default=RewardWeights())
    common.add_argument("--out", type=Path, default=Path("mcfs_out"),
                        help="directory for report files")

    parser = argparse.ArgumentParser(
        prog="mcfs",
        description="Monte Carlo reinforced feature selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", parents=[common],
                           help="train once and report")
    run_p.set_defaults(func=cmd_run)
    sweep_p = sub.add_parser("sweep", parents=[common],
                             help="run once per parameter value")
    sweep_p.add_argument("--param", choices=sorted(SWEEP_PARAMS),
                         required=True)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated parameter values")
    sweep_p.set_defaults(func=cmd_sweep)
    return parser


def _config_from_args(args, parser) -> engine.TrainConfig:
    try:
        return engine.TrainConfig(
            episodes=args.episodes,
            gamma=args.gamma,
            epsilon=args.epsilon,
            stop_threshold=args.stop_threshold,
            shaping_coeff=args.shaping_coeff,
            advise_steps=args.advise_steps,
            return_mode=_RETURN_FLAGS[args.return_mode],
            recalc_mode=_RECALC_FLAGS[args.recalc_mode],
            behavior_mode=args.behavior,
            state_mode=_STATE_FLAGS[args.state_repr],
            utility_mode=args.utility,
            weights=args.weights,
            seed=args.seed,
        )
    except ValueError as exc:
        parser.error(str(exc))


def _load_dataset(args):
    if args.data is not None:
        ds = data.load_csv(args.data, args.label_col)
        meta = {"source": str(args.data)}
    else:
        n, d, k = args.synthetic
        ds, informative = data.synth_classification(n, d, k, seed=args.seed)
        meta = {
            "source": f"synthetic({n},{d},{k})",
            "informative": sorted(informative),
        }
    meta.update(
        n_samples=ds.n_samples,
        n_features=ds.n_features,
        n_classes=ds.n_classes,
        train_ratio=TRAIN_RATIO,
    )
    return ds, meta


def _held_out_metrics(split, subset, seed, n_trees):
    cols = sorted(int(c) for c in subset)
    if not cols:
        # no features to train on: score a constant majority-class guess
        majority = int(np.bincount(split.train.labels).argmax())
        k = split.train.n_classes
        cm = np.zeros((k, k), dtype=np.int64)
        np.add.at(cm, (split.test.labels, majority), 1)
        return forest.metrics_from_confusion(cm)
    model = forest.train_forest(
        split.train, cols, n_trees=n_trees, seed=seed,
        max_depth=FINAL_DEPTH, min_leaf=FINAL_MIN_LEAF,
    )
    return forest.evaluate(model, split.test, cols)


def compare_baselines(split, selected, seed, n_trees=FINAL_TREES) -> dict:
    """Held-out metrics for the selected subset and three reference subsets.

    all_features, the top half of features by label information, and a
    random subset of the same size drawn deterministically from the seed.
    """
    d = split.train.n_features
    k = max(1, d // 2)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 104729]))
    entries = {
        "all_features": list(range(d)),
        "kbest": info.kbest_select(split.train, k),
        "random": sorted(int(c) for c in rng.choice(d, size=k, replace=False)),
        "selected": sorted(int(c) for c in selected),
    }
    names = split.train.feature_names
    return {
        name: {
            "subset": reports.subset_payload(cols, names),
            "metrics": _held_out_metrics(split, cols, seed, n_trees).as_dict(),
        }
        for name, cols in entries.items()
    }


def _execute_run(ds, meta, config):
    """Train on the nested split and attach held-out baselines."""
    outer = data.split_dataset(ds, TRAIN_RATIO, seed=config.seed)
    inner = data.split_dataset(outer.train, TRAIN_RATIO, seed=config.seed)
    run = engine.train(inner, config)
    baselines = compare_baselines(outer, run.best_subset, config.seed)
    payload = reports.report_to_dict(
        run, ds.feature_names, dataset=meta,
        test_metrics=baselines["selected"]["metrics"],
        baselines=baselines,
    )
    return payload


def _print_summary(payload):
    best = payload["best_subset"]
    print(f"selected features ({len(best['indices'])}): "
          + (", ".join(best["names"]) if best["names"] else "(none)"))
    print(f"best training eval: {payload['best_eval']:.4f}")
    parts = [
        f"{name} {entry['metrics']['accuracy']:.4f}"
        for name, entry in sorted(payload["baselines"].items())
    ]
    print("held-out accuracy: " + " | ".join(parts))


def cmd_run(args, parser) -> int:
    config = _config_from_args(args, parser)
    ds, meta = _load_dataset(args)
    payload = _execute_run(ds, meta, config)
    json_path, csv_path = reports.write_report_files(payload, args.out)
    _print_summary(payload)
    print(f"report: {json_path}")
    print(f"curves: {csv_path}")
    return 0


def cmd_sweep(args, parser) -> int:
    base = _config_from_args(args, parser)
    field_name, cast = SWEEP_PARAMS[args.param]
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not raw_values:
        parser.error("--values must list at least one value")
    configs = []
    for raw in raw_values:
        try:
            configs.append(replace(base, **{field_name: cast(raw)}))
        except ValueError as exc:
            parser.error(f"bad value {raw!r} for --param {args.param}: {exc}")

    ds, meta = _load_dataset(args)
    workers = max(1, int(os.environ.get("MCFS_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            payloads = list(pool.map(
                lambda c: _execute_run(ds, meta, c), configs
            ))
    else:
        payloads = [_execute_run(ds, meta, c) for c in configs]

    out = Path(args.out)
    rows = []
    for raw, payload in zip(raw_values, payloads):
        sub_dir = out / f"{args.param}={raw}"
        reports.write_report_files(payload, sub_dir)
        lengths = [c["length"] for c in payload["curves"]]
        rows.append({
            "param": args.param,
            "value": raw,
            "best_eval": payload["best_eval"],
            "test_accuracy": payload["test_metrics"]["accuracy"],
            "episodes_completed": payload["episodes_completed"],
            "total_steps": payload["total_steps"],
            "mean_length": float(np.mean(lengths)) if lengths else 0.0,
        })
        print(f"{args.param}={raw}: best_eval={payload['best_eval']:.4f} "
              f"test_acc={payload['test_metrics']['accuracy']:.4f}")

    out.mkdir(parents=True, exist_ok=True)
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"summary: {summary}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (data.DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
