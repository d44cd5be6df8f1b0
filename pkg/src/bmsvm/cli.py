"""Batch command-line front end: train, predict, and evaluate.

Every run resolves a RunConfig (TOML file plus flag overrides), writes a
manifest with the config hash sufficient to reproduce it, and is fully
deterministic given the seed. Exit codes: 0 success, 1 usage or config
error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .data import (
    EvalResult,
    leave_one_out,
    load_csv,
    random_splits,
    standardize,
)
from .errors import (
    BmsvmError,
    ConditioningError,
    DataError,
    DegenerateMatrixError,
    DivergenceError,
)
from .harness import (
    FittedModel,
    MapTrainer,
    SamplerTrainer,
    load_model,
    predict_scores,
    save_model,
)
from .map_fit import MapConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

DATA_DIR_ENV = "BMSVM_DATA_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bmsvm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat TOML config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--jobs", type=int, help="max parallel fold workers")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--method", choices=["map", "bmsvm"])
        p.add_argument("--theta", type=float, help="fixed kernel width override")
        p.add_argument("--schedule", help="M1,M2,M sweep schedule override")
        p.add_argument("--shape-mode", choices=["paper", "exact"], dest="shape_mode")
        p.add_argument("--dataset", help="dataset CSV path override")

    p_train = sub.add_parser("train", help="fit a model and write a model file")
    add_common(p_train)

    p_pred = sub.add_parser("predict", help="score a data file with a model file")
    p_pred.add_argument("model", help="model JSON file from 'train'")
    p_pred.add_argument("data", help="CSV file with the training file's layout")
    p_pred.add_argument("--out", help="output CSV path (default: stdout)")

    p_eval = sub.add_parser("eval", help="run an evaluation protocol end to end")
    add_common(p_eval)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("seed", "jobs", "out", "method", "shape_mode", "dataset"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "theta", None) is not None:
        overrides.update(theta=args.theta, theta_grid=None, theta_mh=False)
    if getattr(args, "schedule", None):
        parts = args.schedule.split(",")
        if len(parts) != 3:
            raise ConfigError(f"--schedule expects M1,M2,M, got {args.schedule!r}")
        try:
            overrides.update(m1=int(parts[0]), m2=int(parts[1]), m=int(parts[2]))
        except ValueError:
            raise ConfigError(f"--schedule expects integers, got {args.schedule!r}") from None
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def resolve_dataset_path(path: str) -> str:
    if os.path.exists(path) or os.path.isabs(path):
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if root:
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    return path


def build_trainer(cfg: RunConfig, trace_path=None):
    if cfg.method == "map":
        return MapTrainer(
            cfg=MapConfig(lam=cfg.map_lambda, max_iters=cfg.map_max_iters,
                          step0=cfg.map_step0, tol=cfg.map_tol),
            theta=cfg.theta,
            theta_grid=tuple(cfg.theta_grid) if cfg.theta_grid else None,
        )
    return SamplerTrainer(
        hyper=cfg.hyperparams(),
        schedule=cfg.schedule(),
        theta=cfg.theta,
        theta_grid=tuple(cfg.theta_grid) if cfg.theta_grid else None,
        sample_theta=cfg.theta_mh,
        warm_start=cfg.warm_start,
        fast_linalg=cfg.fast_linalg,
        trace_path=trace_path,
    )


def write_manifest(cfg: RunConfig, out_dir: str):
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_train(cfg: RunConfig) -> int:
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    ds = load_csv(resolve_dataset_path(cfg.dataset), cfg.label_column,
                  cfg.delimiter, cfg.header)
    x_std, _, stats = standardize(ds.features)
    trace_path = os.path.join(out_dir, "trace.csv") if cfg.trace else None
    trainer = build_trainer(cfg, trace_path=trace_path)
    model = trainer(x_std, ds.labels, ds.n_classes, cfg.seed)
    model.stats = stats
    model.label_vocabulary = ds.label_vocabulary
    save_model(model, os.path.join(out_dir, "model.json"), config=cfg.to_dict())
    write_manifest(cfg, out_dir)
    print(f"wrote {os.path.join(out_dir, 'model.json')} "
          f"({model.samples.retained} retained sample(s))")
    return EXIT_OK


def cmd_predict(model_path: str, data_path: str, out_path: str | None) -> int:
    model = load_model(model_path)
    config = model.meta.get("config") or {}
    label_column = config.get("label_column", 0)
    delimiter = config.get("delimiter", ",")
    header = config.get("header", "auto")
    ds = load_csv(resolve_dataset_path(data_path), label_column, delimiter, header)
    c = model.n_classes
    rows = []
    if ds.n:
        if ds.p != model.train_inputs.shape[1]:
            raise DataError(
                f"model expects {model.train_inputs.shape[1]} feature columns, "
                f"found {ds.p} in {data_path}"
            )
        x = model.stats.apply(ds.features) if model.stats else ds.features
        labels, scores = predict_scores(model, x)
        vocab = model.label_vocabulary
        for i in range(ds.n):
            token = vocab[labels[i] - 1] if vocab else str(labels[i])
            rows.append([i, token] + [repr(float(s)) for s in scores[i]])
    header_row = ["id", "predicted_label"] + [f"score_{j + 1}" for j in range(c)]
    out = open(out_path, "w", newline="") if out_path else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(header_row)
        writer.writerows(rows)
    finally:
        if out_path:
            out.close()
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    ds = load_csv(resolve_dataset_path(cfg.dataset), cfg.label_column,
                  cfg.delimiter, cfg.header)
    trainer = build_trainer(cfg)
    from .harness import predict_labels  # local to keep worker pickle light
    try:
        if cfg.protocol == "loo":
            result = leave_one_out(ds, trainer, predict_labels, seed=cfg.seed,
                                   jobs=cfg.jobs)
        else:
            result = random_splits(ds, cfg.n_train, cfg.n_repeats, trainer,
                                   predict_labels, seed=cfg.seed, jobs=cfg.jobs,
                                   n_test=cfg.n_test)
    except BmsvmError as exc:
        _flush_failure(cfg, out_dir, exc)
        raise
    doc = result.to_dict()
    doc["dataset"] = cfg.dataset
    doc["method"] = cfg.method
    doc["schedule"] = f"{cfg.m1}/{cfg.m2}/{cfg.m}"
    with open(os.path.join(out_dir, "eval_result.json"), "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "method", "protocol", "error_rate", "seed", "schedule"])
        writer.writerow([cfg.dataset, cfg.method, cfg.protocol,
                         repr(result.error_rate), cfg.seed,
                         f"{cfg.m1}/{cfg.m2}/{cfg.m}"])
    write_manifest(cfg, out_dir)
    print(f"{cfg.protocol} error rate: {result.error_rate:.6f}")
    return EXIT_OK


def _flush_failure(cfg: RunConfig, out_dir: str, exc: Exception):
    doc = {
        "failed": True,
        "error": f"{type(exc).__name__}: {exc}",
        "dataset": cfg.dataset,
        "method": cfg.method,
        "protocol": cfg.protocol,
        "seed": cfg.seed,
    }
    with open(os.path.join(out_dir, "eval_result.partial.json"), "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return cmd_train(resolve_config(args))
        if args.command == "predict":
            return cmd_predict(args.model, args.data, args.out)
        if args.command == "eval":
            return cmd_eval(resolve_config(args))
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConditioningError, DegenerateMatrixError, DivergenceError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
